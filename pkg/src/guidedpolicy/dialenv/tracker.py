"""Rule-based state tracker and the binary state layout."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .schema import NONE_SLOT, REF_SLOT, USER_INTENTS, DomainSchema, slot_vocabulary

MATCH_BUCKETS = ("0", "1", "2-4", "5+")
REPEAT_BUCKETS = ("1", "2", "3", "4+")


def match_bucket(count: int) -> int:
    if count <= 1:
        return count
    return 2 if count <= 4 else 3


@dataclass(frozen=True)
class TrackerState:
    informed: dict[str, dict[str, str]]
    requested: dict[str, frozenset[str]]
    answered: dict[str, frozenset[str]]
    match_bucket: dict[str, int]
    book_available: dict[str, bool]
    last_user_acts: tuple = ()
    repeat: int = 1
    turn: int = 0
    unknown: tuple = field(default=())

    def known(self, domain: str) -> set[str]:
        return set(self.informed.get(domain, {}))

    def pending(self, domain: str) -> set[str]:
        return set(self.requested.get(domain, ())) - set(self.answered.get(domain, ()))


def initial_state(schemas: list[DomainSchema]) -> TrackerState:
    informed = {d.name: {} for d in schemas}
    return TrackerState(
        informed=informed,
        requested={d.name: frozenset() for d in schemas},
        answered={d.name: frozenset() for d in schemas},
        match_bucket={d.name: match_bucket(len(d.entities)) for d in schemas},
        book_available={d.name: False for d in schemas},
    )


def _system_effects(prev: TrackerState, system_acts, by_name) -> dict[str, set[str]]:
    answered = {d: set(v) for d, v in prev.answered.items()}
    for act in system_acts or ():
        if not (isinstance(act, tuple) and len(act) == 3):
            continue
        d, kind, slot = act
        sch = by_name.get(d)
        if sch is None:
            continue
        known = prev.known(d)
        all_known = all(s in known for s in sch.informable)
        requested = prev.requested[d]
        if kind == "Inform" and slot in requested and slot != REF_SLOT and all_known:
            answered[d].add(slot)
        elif kind == "Book" and REF_SLOT in requested and all_known and \
                all(s in known for s in sch.book_slots):
            answered[d].add(REF_SLOT)
    return answered


def track_state(prev: TrackerState, user_acts, schemas: list[DomainSchema],
                system_acts=None) -> TrackerState:
    """Fold one exchange into the tracker.

    ``system_acts`` (the composite system action the user reacted to) is
    applied first against ``prev``: a pending request counts as answered
    under the same conditions the simulated user accepts it. Then the user
    acts update informed values and requests. User acts naming a domain or
    slot outside the schemas go to ``unknown``.
    """
    by_name = {d.name: d for d in schemas}
    answered = _system_effects(prev, system_acts, by_name)
    informed = {d: dict(v) for d, v in prev.informed.items()}
    requested = {d: set(v) for d, v in prev.requested.items()}
    unknown = list(prev.unknown)
    for act in user_acts:
        d, intent, slot, value = act
        sch = by_name.get(d)
        if sch is None or intent not in USER_INTENTS:
            unknown.append(act)
            continue
        if intent in ("inform", "dontcare"):
            if slot not in sch.tracked_slots:
                unknown.append(act)
                continue
            informed[d][slot] = value
        elif intent == "request":
            if slot not in sch.request_slots:
                unknown.append(act)
                continue
            requested[d].add(slot)
    acts = tuple(sorted(user_acts, key=repr))
    repeat = prev.repeat + 1 if acts and acts == prev.last_user_acts else 1
    buckets, booking = {}, {}
    for sch in schemas:
        n = len(sch.matches(informed[sch.name]))
        buckets[sch.name] = match_bucket(n)
        booking[sch.name] = bool(sch.bookable and n > 0 and
                                 all(s in informed[sch.name] for s in sch.book_slots))
    return replace(
        prev,
        informed=informed,
        requested={d: frozenset(v) for d, v in requested.items()},
        answered={d: frozenset(v) for d, v in answered.items()},
        match_bucket=buckets,
        book_available=booking,
        last_user_acts=acts,
        repeat=repeat,
        turn=prev.turn + (1 if system_acts is not None else 0),
        unknown=tuple(unknown),
    )


class StateLayout:
    """Bit layout of the state vector.

    Segments, in order:
      1. ``match``     per domain, one-hot DB match bucket {0, 1, 2-4, 5+}
      2. ``booking``   per bookable domain, booking available
      3. ``informed``  per domain and trackable slot: [has value, dontcare]
      4. ``requested`` per domain and request slot: [requested, answered]
      5. ``user_act``  last user action: domain multi-hot, intent multi-hot,
                       slot multi-hot (global slot vocabulary), unknown flag
      6. ``repeat``    one-hot repeat count of the last user action {1, 2, 3, 4+}
      7. ``pad``       zero bits up to ``dim`` when a fixed width is requested
    """

    def __init__(self, schemas: list[DomainSchema], dim: int | None = None):
        self.schemas = list(schemas)
        self.slots = slot_vocabulary(self.schemas)
        names: list[tuple[str, str]] = []
        for d in self.schemas:
            names += [("match", f"{d.name}:{b}") for b in MATCH_BUCKETS]
        for d in self.schemas:
            if d.bookable:
                names.append(("booking", d.name))
        for d in self.schemas:
            for s in d.tracked_slots:
                names += [("informed", f"{d.name}:{s}:value"), ("informed", f"{d.name}:{s}:dontcare")]
        for d in self.schemas:
            for s in d.request_slots:
                names += [("requested", f"{d.name}:{s}:requested"),
                          ("requested", f"{d.name}:{s}:answered")]
        names += [("user_act", f"domain:{d.name}") for d in self.schemas]
        names += [("user_act", f"intent:{i}") for i in USER_INTENTS]
        names += [("user_act", f"slot:{s}") for s in self.slots]
        names.append(("user_act", "unknown"))
        names += [("repeat", b) for b in REPEAT_BUCKETS]
        self.natural_dim = len(names)
        if dim is not None:
            if dim < self.natural_dim:
                raise ValueError(f"layout needs {self.natural_dim} bits, asked for {dim}")
            names += [("pad", str(i)) for i in range(dim - self.natural_dim)]
        self.features = tuple(names)
        self.index = {f"{seg}/{name}": i for i, (seg, name) in enumerate(self.features)}

    @property
    def dim(self) -> int:
        return len(self.features)

    def segment(self, name: str) -> list[int]:
        return [i for i, (seg, _) in enumerate(self.features) if seg == name]

    def describe(self, bit: int) -> str:
        seg, name = self.features[bit]
        return f"{seg}/{name}"

    def table(self) -> str:
        """Plain-text layout table: one line per bit."""
        return "\n".join(f"{i}\t{seg}\t{name}" for i, (seg, name) in enumerate(self.features))

    def vectorize(self, t: TrackerState) -> np.ndarray:
        v = np.zeros(self.dim, dtype=np.int8)
        ix = self.index
        for d in self.schemas:
            v[ix[f"match/{d.name}:{MATCH_BUCKETS[t.match_bucket[d.name]]}"]] = 1
            if d.bookable and t.book_available[d.name]:
                v[ix[f"booking/{d.name}"]] = 1
            for s, val in t.informed[d.name].items():
                kind = "dontcare" if val == "dontcare" else "value"
                v[ix[f"informed/{d.name}:{s}:{kind}"]] = 1
            for s in t.requested[d.name]:
                v[ix[f"requested/{d.name}:{s}:requested"]] = 1
            for s in t.answered[d.name]:
                v[ix[f"requested/{d.name}:{s}:answered"]] = 1
        for act in t.last_user_acts:
            d, intent, slot, _ = act
            key = f"user_act/domain:{d}"
            if key in ix and intent in USER_INTENTS:
                v[ix[key]] = 1
                v[ix[f"user_act/intent:{intent}"]] = 1
                if slot in self.slots:
                    v[ix[f"user_act/slot:{slot}"]] = 1
                elif slot != NONE_SLOT:
                    v[ix["user_act/unknown"]] = 1
            else:
                v[ix["user_act/unknown"]] = 1
        if t.unknown:
            v[ix["user_act/unknown"]] = 1
        v[ix[f"repeat/{REPEAT_BUCKETS[min(t.repeat, 4) - 1]}"]] = 1
        return v


def vectorize_state(t: TrackerState, layout: StateLayout) -> np.ndarray:
    return layout.vectorize(t)
