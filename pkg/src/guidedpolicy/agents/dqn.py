"""DQN pieces: Q-network with target copy, epsilon-greedy selection, TD update."""

from __future__ import annotations

import numpy as np

from .. import diffcore as dc
from ..diffcore import NetParams, NetSpec, TrainingDivergence


class QNetwork:
    """Online Q-net, its target copy and the online net's optimizer."""

    def __init__(self, online: NetParams, lr: float = 1e-3):
        self.online = online
        self.target = online.copy()
        self.opt = dc.adam(lr)

    @classmethod
    def init(cls, state_dim: int, n_actions: int, rng: np.random.Generator, hidden=(128,),
             lr: float = 1e-3) -> "QNetwork":
        return cls(NetParams.init(NetSpec.mlp(state_dim, list(hidden), n_actions), rng), lr)

    @property
    def n_actions(self) -> int:
        return self.online.spec.n_out

    def q_values(self, states) -> np.ndarray:
        return dc.predict(self.online, np.atleast_2d(states))

    def sync(self) -> None:
        self.target.load_from(self.online)


def greedy(q_row: np.ndarray) -> int:
    # np.argmax returns the lowest index among ties
    return int(np.argmax(q_row))


def dqn_select(q: QNetwork, s, epsilon: float, rng: np.random.Generator) -> int:
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    if epsilon > 0 and rng.random() < epsilon:
        return int(rng.integers(q.n_actions))
    return greedy(q.q_values(s)[0])


def td_targets(q: QNetwork, rewards, next_states, dones, gamma: float) -> np.ndarray:
    """r + gamma * (1 - done) * max_a' Q_target(s', a')."""
    nxt = dc.predict(q.target, np.asarray(next_states, dtype=np.float64)).max(axis=1)
    return np.asarray(rewards, dtype=np.float64) + gamma * (1.0 - np.asarray(dones, dtype=np.float64)) * nxt


def dqn_update(q: QNetwork, batch, gamma: float, clip_norm: float = 10.0) -> float:
    """One squared-TD-error step on ``(states, actions, rewards, next_states, dones)``."""
    states, actions, rewards, next_states, dones = batch[:5]
    if len(actions) == 0:
        raise ValueError("empty batch")
    target = td_targets(q, rewards, next_states, dones, gamma)
    if not np.isfinite(target).all():
        raise TrainingDivergence("non-finite TD target")
    out, cache = dc.forward(q.online, np.asarray(states, dtype=np.float64))
    rows = np.arange(len(actions))
    err = out[rows, actions] - target
    loss = float(np.mean(err ** 2))
    grad_out = np.zeros_like(out)
    grad_out[rows, actions] = 2.0 * err / len(actions)
    grads, _ = dc.backward(q.online, cache, grad_out)
    dc.step(q.online, dc.clip_by_global_norm(grads, clip_norm), q.opt)
    return loss
