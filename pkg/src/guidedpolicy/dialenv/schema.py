"""Domain schemas and the built-in desk / paper-shape domain sets.

A schema file is JSON with this tree::

    {"domains": [
        {"name": "restaurant",
         "informable": {"food": ["thai", ...], "price": [...]},
         "requestable": ["phone", "address"],
         "bookable": true,
         "book_slots": {"people": ["1", "2"], "day": ["mon", ...]},
         "entities": [{"food": "thai", "price": "cheap", ..., "phone": "..."}],
         "aliases": {"pricerange": "price"}}
    ]}

``aliases`` is optional; aliased slot names are rewritten to the canonical
name at load time so that the slot vocabulary stays global across domains.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

import numpy as np

ACT_TYPES = ("Inform", "Request", "Book", "NoOffer")
USER_INTENTS = ("inform", "request", "dontcare", "bye")
REF_SLOT = "ref"
NONE_SLOT = "none"
DONTCARE = "dontcare"


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class DomainSchema:
    name: str
    informable: dict[str, tuple[str, ...]]
    requestable: tuple[str, ...]
    bookable: bool
    book_slots: dict[str, tuple[str, ...]] = field(default_factory=dict)
    entities: tuple[dict[str, str], ...] = ()

    def __post_init__(self):
        slots = list(self.informable) + list(self.requestable) + list(self.book_slots)
        if len(set(slots)) != len(slots):
            raise SchemaError(f"{self.name}: slot names must be unique within a domain")
        if not self.informable:
            raise SchemaError(f"{self.name}: needs at least one informable slot")
        if not self.requestable:
            raise SchemaError(f"{self.name}: needs at least one requestable slot")
        if not self.entities:
            raise SchemaError(f"{self.name}: database is empty")
        if self.book_slots and not self.bookable:
            raise SchemaError(f"{self.name}: book slots on a non-bookable domain")
        for ent in self.entities:
            for slot, values in self.informable.items():
                if ent.get(slot) not in values:
                    raise SchemaError(f"{self.name}: entity {ent} lacks a valid {slot!r}")

    @property
    def tracked_slots(self) -> tuple[str, ...]:
        """Informable slots followed by booking slots: what the user can tell."""
        return tuple(self.informable) + tuple(self.book_slots)

    @property
    def request_slots(self) -> tuple[str, ...]:
        """Requestable slots plus the booking reference for bookable domains."""
        return self.requestable + ((REF_SLOT,) if self.bookable else ())

    def matches(self, constraints: dict[str, str]) -> list[dict[str, str]]:
        return [
            e for e in self.entities
            if all(v == DONTCARE or e.get(s) == v
                   for s, v in constraints.items() if s in self.informable)
        ]

    def system_acts(self) -> list[tuple[str, str, str]]:
        """Every atomic system act that makes sense in this domain."""
        acts = [(self.name, "Request", s) for s in self.tracked_slots]
        acts += [(self.name, "Inform", s) for s in self.requestable]
        if self.bookable:
            acts.append((self.name, "Book", REF_SLOT))
        acts.append((self.name, "NoOffer", NONE_SLOT))
        return acts


def slot_vocabulary(schemas: list[DomainSchema]) -> tuple[str, ...]:
    """Global slot list in first-seen order, with ``ref`` always present."""
    seen: dict[str, None] = {}
    for d in schemas:
        for s in d.tracked_slots + d.requestable:
            seen.setdefault(s, None)
    seen.setdefault(REF_SLOT, None)
    return tuple(seen)


def schemas_from_dict(tree: dict) -> list[DomainSchema]:
    out = []
    names = set()
    for raw in tree.get("domains", []):
        alias = raw.get("aliases", {})
        norm = lambda s: alias.get(s, s)  # noqa: E731
        informable = {norm(k): tuple(str(v) for v in vals) for k, vals in raw["informable"].items()}
        book = {norm(k): tuple(str(v) for v in vals) for k, vals in raw.get("book_slots", {}).items()}
        entities = tuple({norm(k): str(v) for k, v in e.items()} for e in raw["entities"])
        name = raw["name"]
        if name in names:
            raise SchemaError(f"duplicate domain {name!r}")
        names.add(name)
        out.append(DomainSchema(
            name=name,
            informable=informable,
            requestable=tuple(norm(s) for s in raw["requestable"]),
            bookable=bool(raw.get("bookable", False)),
            book_slots=book,
            entities=entities,
        ))
    if not out:
        raise SchemaError("no domains defined")
    return out


def schemas_to_dict(schemas: list[DomainSchema]) -> dict:
    return {"domains": [
        {
            "name": d.name,
            "informable": {k: list(v) for k, v in d.informable.items()},
            "requestable": list(d.requestable),
            "bookable": d.bookable,
            "book_slots": {k: list(v) for k, v in d.book_slots.items()},
            "entities": [dict(e) for e in d.entities],
        }
        for d in schemas
    ]}


def load_schemas(path) -> list[DomainSchema]:
    with open(path) as fh:
        return schemas_from_dict(json.load(fh))


def save_schemas(schemas: list[DomainSchema], path) -> None:
    with open(path, "w") as fh:
        json.dump(schemas_to_dict(schemas), fh, indent=2)


_AREAS = ("north", "south", "centre")
_PRICES = ("cheap", "moderate", "expensive")
_DAYS = ("monday", "tuesday", "friday", "sunday")
_PEOPLE = ("1", "2", "4", "6")
_PLACES = ("cambridge", "ely", "london", "stansted")


def _database(name, informable, requestable, n, seed):
    rng = np.random.default_rng(seed)
    combos = list(itertools.product(*informable.values()))
    picks = rng.choice(len(combos), size=min(n, len(combos)), replace=False)
    entities = []
    for i, idx in enumerate(sorted(picks)):
        ent = dict(zip(informable, combos[idx]))
        for r in requestable:
            if r not in ent:
                ent[r] = f"{name}-{r}-{i}"
        entities.append(ent)
    return tuple(entities)


def _domain(name, informable, requestable, bookable=False, book_slots=None, n=12, seed=0):
    return DomainSchema(
        name=name,
        informable=informable,
        requestable=tuple(requestable),
        bookable=bookable,
        book_slots=book_slots or {},
        entities=_database(name, informable, requestable, n, seed),
    )


def desk_schemas() -> list[DomainSchema]:
    """Five domains; the layout they induce is 120 state bits.

    ``hotel`` carries three slots no other domain has (internet, parking,
    stars) and is the default held-out domain for transfer runs.
    """
    return [
        _domain("restaurant",
                {"food": ("thai", "italian", "indian", "chinese"), "price": _PRICES, "area": _AREAS},
                ["phone", "address"], True, {"people": _PEOPLE, "day": _DAYS}, seed=1),
        _domain("hotel",
                {"price": _PRICES, "area": _AREAS, "internet": ("yes", "no"),
                 "parking": ("yes", "no"), "stars": ("3", "4", "5")},
                ["phone", "address"], True, {"people": _PEOPLE, "day": _DAYS}, n=16, seed=2),
        _domain("attraction",
                {"type": ("museum", "park", "theatre", "college"), "area": _AREAS},
                ["phone", "fee"], seed=3),
        _domain("train",
                {"departure": _PLACES, "destination": _PLACES, "day": _DAYS},
                ["duration", "price"], True, {"people": _PEOPLE}, n=16, seed=4),
        _domain("taxi",
                {"departure": _PLACES, "destination": _PLACES},
                ["phone", "car"], seed=5),
    ]


def paper_shape_schemas() -> list[DomainSchema]:
    """Seven domains, used only to exercise the 392-bit / 300-action shapes."""
    extra = [
        _domain("hospital", {"department": ("surgery", "paediatrics", "cardiology"), "area": _AREAS},
                ["phone", "address", "postcode"], seed=6),
        _domain("police", {"area": _AREAS, "branch": ("central", "east")},
                ["phone", "address", "postcode"], seed=7),
    ]
    return desk_schemas() + extra
