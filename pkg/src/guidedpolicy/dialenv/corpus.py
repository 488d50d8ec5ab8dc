"""Flat transition corpus built from expert episodes, and its file format.

File format (UTF-8, one record per line, tab separated)::

    #guidedpolicy-corpus v1 layout=<layout id> state_dim=<bits>
    episode  state_hex  action  action_key  next_state_hex  done  success  goal_domains

``state_hex`` is ``np.packbits`` of the state bits (big-endian bit order),
hex encoded; ``action`` is the catalog index or -1 when the composite is
outside the catalog; ``goal_domains`` is a comma-separated list.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .actions import ActionCatalog, action_key, parse_action_key
from .env import EpisodeLog
from .tracker import StateLayout

CORPUS_VERSION = "v1"


def layout_id(layout: StateLayout) -> str:
    return hashlib.sha256(layout.table().encode()).hexdigest()[:12]


def pack_bits(v: np.ndarray) -> str:
    return np.packbits(np.asarray(v, dtype=np.uint8)).tobytes().hex()


def unpack_bits(h: str, dim: int) -> np.ndarray:
    return np.unpackbits(np.frombuffer(bytes.fromhex(h), dtype=np.uint8))[:dim].astype(np.int8)


@dataclass
class TransitionCorpus:
    states: np.ndarray        # (n, dim) int8
    actions: np.ndarray       # (n,) catalog index or -1
    action_keys: list[str]
    next_states: np.ndarray
    dones: np.ndarray         # (n,) bool
    success: np.ndarray       # (n,) bool, success flag of the episode
    episode: np.ndarray       # (n,) episode id
    goal_domains: list[tuple[str, ...]]   # per transition

    def __len__(self) -> int:
        return len(self.actions)

    @classmethod
    def from_episodes(cls, episodes: list[EpisodeLog], catalog: ActionCatalog) -> "TransitionCorpus":
        rows = [(i, ep, t) for i, ep in enumerate(episodes) for t in ep.turns]
        return cls(
            states=np.array([t.state for _, _, t in rows], dtype=np.int8),
            actions=np.array([catalog.index(t.composite) for _, _, t in rows], dtype=np.int64),
            action_keys=[action_key(t.composite) for _, _, t in rows],
            next_states=np.array([t.next_state for _, _, t in rows], dtype=np.int8),
            dones=np.array([t.done for _, _, t in rows], dtype=bool),
            success=np.array([ep.success for _, ep, _ in rows], dtype=bool),
            episode=np.array([i for i, _, _ in rows], dtype=np.int64),
            goal_domains=[tuple(ep.goal.domains) for _, ep, _ in rows],
        )

    def subset(self, mask: np.ndarray) -> "TransitionCorpus":
        idx = np.flatnonzero(mask)
        return TransitionCorpus(
            self.states[idx], self.actions[idx], [self.action_keys[i] for i in idx],
            self.next_states[idx], self.dones[idx], self.success[idx], self.episode[idx],
            [self.goal_domains[i] for i in idx],
        )

    def in_catalog(self) -> "TransitionCorpus":
        return self.subset(self.actions >= 0)

    def action_domains(self, i: int) -> set[str]:
        return {a[0] for a in parse_action_key(self.action_keys[i])}

    def touched_domains(self, i: int) -> set[str]:
        return set(self.goal_domains[i]) | self.action_domains(i)

    def unique_states(self) -> np.ndarray:
        return np.unique(np.concatenate([self.states, self.next_states]), axis=0)

    def save(self, path, layout: StateLayout) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write(f"#guidedpolicy-corpus {CORPUS_VERSION} layout={layout_id(layout)} "
                     f"state_dim={layout.dim}\n")
            for i in range(len(self)):
                fh.write("\t".join((
                    str(int(self.episode[i])), pack_bits(self.states[i]), str(int(self.actions[i])),
                    self.action_keys[i], pack_bits(self.next_states[i]), str(int(self.dones[i])),
                    str(int(self.success[i])), ",".join(self.goal_domains[i]),
                )) + "\n")

    @classmethod
    def load(cls, path, layout: StateLayout | None = None) -> "TransitionCorpus":
        with open(path) as fh:
            header = fh.readline().split()
            if len(header) < 4 or header[0] != "#guidedpolicy-corpus":
                raise ValueError(f"{path}: not a corpus file")
            if header[1] != CORPUS_VERSION:
                raise ValueError(f"{path}: corpus version {header[1]}, expected {CORPUS_VERSION}")
            meta = dict(kv.split("=", 1) for kv in header[2:])
            if layout is not None and meta["layout"] != layout_id(layout):
                raise ValueError(f"{path}: state layout {meta['layout']} does not match "
                                 f"{layout_id(layout)}")
            dim = int(meta["state_dim"])
            cols = [line.rstrip("\n").split("\t") for line in fh if line.strip()]
        return cls(
            states=np.array([unpack_bits(c[1], dim) for c in cols], dtype=np.int8).reshape(-1, dim),
            actions=np.array([int(c[2]) for c in cols], dtype=np.int64),
            action_keys=[c[3] for c in cols],
            next_states=np.array([unpack_bits(c[4], dim) for c in cols], dtype=np.int8).reshape(-1, dim),
            dones=np.array([c[5] == "1" for c in cols], dtype=bool),
            success=np.array([c[6] == "1" for c in cols], dtype=bool),
            episode=np.array([int(c[0]) for c in cols], dtype=np.int64),
            goal_domains=[tuple(c[7].split(",")) if c[7] else () for c in cols],
        )
