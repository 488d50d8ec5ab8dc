"""Action embeddings: catalog one-hot, or factored domain/act/slot multi-hot."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dialenv.actions import ActionCatalog, Composite
from ..dialenv.schema import ACT_TYPES, NONE_SLOT, DomainSchema, slot_vocabulary


class UnknownActPart(ValueError):
    pass


@dataclass(frozen=True)
class FactoredVocab:
    domains: tuple[str, ...]
    acts: tuple[str, ...]
    slots: tuple[str, ...]

    @classmethod
    def from_schemas(cls, schemas: list[DomainSchema]) -> "FactoredVocab":
        return cls(tuple(d.name for d in schemas), ACT_TYPES,
                   slot_vocabulary(schemas) + (NONE_SLOT,))

    @property
    def width(self) -> int:
        return len(self.domains) + len(self.acts) + len(self.slots)

    def segments(self) -> dict[str, slice]:
        nd, na = len(self.domains), len(self.acts)
        return {"domain": slice(0, nd), "act": slice(nd, nd + na),
                "slot": slice(nd + na, self.width)}

    def to_dict(self) -> dict:
        return {"domains": list(self.domains), "acts": list(self.acts), "slots": list(self.slots)}

    @classmethod
    def from_dict(cls, d: dict) -> "FactoredVocab":
        return cls(tuple(d["domains"]), tuple(d["acts"]), tuple(d["slots"]))


def factorize_action(action: Composite, vocab: FactoredVocab) -> np.ndarray:
    """Union over atomic acts of [onehot(domain) | onehot(act) | onehot(slot)]."""
    v = np.zeros(vocab.width)
    nd, na = len(vocab.domains), len(vocab.acts)
    for domain, act, slot in action:
        try:
            v[vocab.domains.index(domain)] = 1
            v[nd + vocab.acts.index(act)] = 1
            v[nd + na + vocab.slots.index(slot)] = 1
        except ValueError:
            raise UnknownActPart(f"{(domain, act, slot)} not in the factored vocabulary") from None
    return v


def embedding_matrix(catalog: ActionCatalog, mode: str = "onehot",
                     vocab: FactoredVocab | None = None) -> np.ndarray:
    """(catalog size, embedding width) matrix; row i embeds catalog action i."""
    if mode == "onehot":
        return np.eye(len(catalog))
    if mode == "factored":
        if vocab is None:
            raise ValueError("factored mode needs a vocabulary")
        return np.stack([factorize_action(a, vocab) for a in catalog.actions])
    raise ValueError(f"unknown embedding mode {mode!r}")
