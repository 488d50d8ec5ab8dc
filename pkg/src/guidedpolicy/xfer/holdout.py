"""Domain holdout: whole-episode corpus filtering and the leakage audit."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..dialenv.actions import ActionCatalog
from ..dialenv.corpus import TransitionCorpus
from ..dialenv.schema import DomainSchema
from ..errors import ConfigurationError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class HoldoutSpec:
    train_domains: tuple[str, ...]
    held_out: str

    def __post_init__(self):
        if self.held_out in self.train_domains:
            raise ConfigurationError(f"held-out domain {self.held_out!r} is also a training domain")
        if not self.train_domains:
            raise ConfigurationError("no training domains")

    @classmethod
    def from_schemas(cls, schemas: list[DomainSchema], held_out: str) -> "HoldoutSpec":
        names = [d.name for d in schemas]
        if held_out not in names:
            raise ConfigurationError(f"unknown domain {held_out!r}; have {names}")
        return cls(tuple(n for n in names if n != held_out), held_out)


def touches(corpus: TransitionCorpus, domain: str) -> np.ndarray:
    """Per-transition flag: the goal or the system action involves ``domain``."""
    return np.array([domain in corpus.touched_domains(i) for i in range(len(corpus))], dtype=bool)


def filter_corpus(corpus: TransitionCorpus, spec: HoldoutSpec) -> TransitionCorpus:
    """Drop every episode that touches the held-out domain anywhere."""
    bad = np.unique(corpus.episode[touches(corpus, spec.held_out)])
    out = corpus.subset(~np.isin(corpus.episode, bad))
    if len(out) == 0:
        raise ConfigurationError(f"holding out {spec.held_out!r} leaves an empty corpus")
    log.info("holdout %s: kept %d of %d transitions (%d episodes dropped)",
             spec.held_out, len(out), len(corpus), len(bad))
    return out


def audit_corpus(corpus: TransitionCorpus, held_out: str) -> int:
    """Number of transitions that touch ``held_out`` (0 means the audit passes)."""
    return int(touches(corpus, held_out).sum())


def visible_actions(catalog: ActionCatalog, held_out: str) -> np.ndarray:
    """Catalog indices whose composite avoids the held-out domain."""
    return np.array([i for i in range(len(catalog)) if held_out not in catalog.domains(i)],
                    dtype=np.int64)
