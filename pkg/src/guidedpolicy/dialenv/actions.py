"""Composite system actions and the frequency-ranked action catalog."""

from __future__ import annotations

import logging
from collections import Counter
from typing import Iterable, Sequence

log = logging.getLogger(__name__)

AtomicAct = tuple  # (domain, act type, slot)
Composite = tuple  # sorted, de-duplicated tuple of atomic acts


def make_composite(acts: Iterable[AtomicAct]) -> Composite:
    out = tuple(sorted(set(tuple(a) for a in acts)))
    if not out:
        raise ValueError("a composite action needs at least one atomic act")
    return out


def action_key(action: Composite) -> str:
    return "+".join("-".join(a) for a in action)


def parse_action_key(key: str) -> Composite:
    return make_composite(tuple(part.split("-")) for part in key.split("+"))


class ActionCatalog:
    """Ordered list of composite actions; the policy's action space."""

    def __init__(self, actions: Sequence[Composite]):
        self.actions = tuple(make_composite(a) for a in actions)
        self._index = {a: i for i, a in enumerate(self.actions)}
        if len(self._index) != len(self.actions):
            raise ValueError("duplicate actions in catalog")

    def __len__(self) -> int:
        return len(self.actions)

    def __getitem__(self, i: int) -> Composite:
        return self.actions[i]

    def index(self, action: Composite) -> int:
        """Catalog index of ``action`` or -1 when it is not in the catalog."""
        return self._index.get(make_composite(action), -1)

    def domains(self, i: int) -> set[str]:
        return {a[0] for a in self.actions[i]}

    def keys(self) -> list[str]:
        return [action_key(a) for a in self.actions]

    @classmethod
    def from_keys(cls, keys: Iterable[str]) -> "ActionCatalog":
        return cls([parse_action_key(k) for k in keys])

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("\n".join(self.keys()) + "\n")

    @classmethod
    def load(cls, path) -> "ActionCatalog":
        with open(path) as fh:
            return cls.from_keys(line.strip() for line in fh if line.strip())


def build_action_catalog(actions: Iterable[Composite], catalog_size: int) -> ActionCatalog:
    """Top ``catalog_size`` composites by frequency, ties broken by key string.

    ``actions`` is every system action in the corpus (one per turn).
    """
    counts = Counter(make_composite(a) for a in actions)
    if not counts:
        raise ValueError("corpus has no actions")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], action_key(kv[0])))
    if len(ranked) < catalog_size:
        log.warning("corpus has %d distinct actions, fewer than catalog size %d; truncating",
                    len(ranked), catalog_size)
    return ActionCatalog([a for a, _ in ranked[:catalog_size]])
