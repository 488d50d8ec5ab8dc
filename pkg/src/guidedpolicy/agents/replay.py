"""Replay buffer with expert warm-up entries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class WarmupSchedule:
    """Share of buffer capacity held by expert transitions over time.

    ``removal`` decays linearly from ``initial_fraction`` to 0 at
    ``horizon`` frames; ``keep`` holds it constant.
    """
    mode: str = "removal"
    initial_fraction: float = 0.5
    horizon: int = 25_000

    def __post_init__(self):
        if self.mode not in ("removal", "keep"):
            raise ValueError(f"unknown warm-up mode {self.mode!r}")
        if not 0.0 <= self.initial_fraction <= 1.0:
            raise ValueError("initial_fraction must lie in [0, 1]")

    def expert_fraction(self, frame: int) -> float:
        if self.mode == "keep":
            return self.initial_fraction
        if self.horizon <= 0:
            return 0.0
        return self.initial_fraction * max(0.0, 1.0 - frame / self.horizon)


class ReplayBuffer:
    """Uniform replay over expert entries plus a FIFO ring of agent entries.

    The two together never exceed ``capacity``: once full, a new agent
    transition overwrites the oldest agent transition. Expert entries only
    leave through :meth:`evict_expert`.
    """

    def __init__(self, capacity: int, state_dim: int):
        self.capacity = capacity
        self.state_dim = state_dim
        self._agent = _Store(capacity, state_dim)
        self._expert = _Store(0, state_dim)
        self._head = 0           # index of the oldest agent entry
        self._n_agent = 0

    def __len__(self) -> int:
        return self._n_agent + self._expert.size

    @property
    def n_expert(self) -> int:
        return self._expert.size

    @property
    def n_agent(self) -> int:
        return self._n_agent

    def expert_fraction(self) -> float:
        return self.n_expert / self.capacity

    def seed_expert(self, states, actions, rewards, next_states, dones) -> None:
        n = min(len(actions), self.capacity - self._n_agent)
        self._expert = _Store(n, self.state_dim)
        self._expert.put(slice(0, n), states[:n], actions[:n], rewards[:n], next_states[:n], dones[:n])
        self._expert.size = n

    def evict_expert(self, keep: int, rng: np.random.Generator) -> None:
        """Randomly drop expert entries until at most ``keep`` remain."""
        keep = max(0, keep)
        if keep >= self._expert.size:
            return
        chosen = np.sort(rng.choice(self._expert.size, size=keep, replace=False))
        self._expert.compact(chosen)

    def add(self, state, action, reward, next_state, done) -> None:
        room = self.capacity - self._expert.size
        if room <= 0:
            return
        if self._n_agent < room:
            slot = (self._head + self._n_agent) % self.capacity
            self._n_agent += 1
        else:
            slot = self._head
            self._head = (self._head + 1) % self.capacity
        self._agent.put(slot, state, action, reward, next_state, done)

    def sample(self, n: int, rng: np.random.Generator):
        """``(states, actions, rewards, next_states, dones, is_expert)``."""
        total = len(self)
        idx = rng.integers(total, size=n)
        is_exp = idx < self._expert.size
        out = [np.empty((n, self.state_dim)), np.empty(n, dtype=np.int64), np.empty(n),
               np.empty((n, self.state_dim)), np.empty(n)]
        if is_exp.any():
            self._expert.take(idx[is_exp], out, is_exp)
        if (~is_exp).any():
            ring = (self._head + idx[~is_exp] - self._expert.size) % self.capacity
            self._agent.take(ring, out, ~is_exp)
        return (*out, is_exp)


class _Store:
    def __init__(self, n: int, dim: int):
        self.s = np.zeros((n, dim), dtype=np.int8)
        self.a = np.zeros(n, dtype=np.int64)
        self.r = np.zeros(n)
        self.s2 = np.zeros((n, dim), dtype=np.int8)
        self.d = np.zeros(n)
        self.size = 0

    def put(self, i, s, a, r, s2, d):
        self.s[i], self.a[i], self.r[i], self.s2[i], self.d[i] = s, a, r, s2, d

    def take(self, idx, out, mask):
        out[0][mask] = self.s[idx]
        out[1][mask] = self.a[idx]
        out[2][mask] = self.r[idx]
        out[3][mask] = self.s2[idx]
        out[4][mask] = self.d[idx]

    def compact(self, keep_idx):
        for name in ("s", "a", "r", "s2", "d"):
            setattr(self, name, getattr(self, name)[keep_idx].copy())
        self.size = len(keep_idx)
