"""Goal sampling and the agenda-based user simulator."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .schema import DONTCARE, REF_SLOT, DomainSchema, SchemaError

# user act: (domain, intent, slot, value); value is None for requests / bye
UserAct = tuple


@dataclass
class UserGoal:
    domains: tuple[str, ...]                       # agenda order
    constraints: dict[str, dict[str, str]]         # domain -> informable slot -> value
    requests: dict[str, tuple[str, ...]]           # domain -> requestable slots
    book: dict[str, dict[str, str]] = field(default_factory=dict)  # domain -> book slot -> value

    def needs_booking(self, domain: str) -> bool:
        return domain in self.book

    def to_dict(self) -> dict:
        return {"domains": list(self.domains), "constraints": self.constraints,
                "requests": {k: list(v) for k, v in self.requests.items()}, "book": self.book}


def sample_goal(rng: np.random.Generator, schemas: list[DomainSchema], max_domains: int = 2,
                book_prob: float = 0.5, constraint_prob: float = 0.6) -> UserGoal:
    """Sample a satisfiable goal touching 1..max_domains domains.

    Constraints are copied from one database entity, so at least one entity
    always matches.
    """
    if not schemas:
        raise SchemaError("no schemas to sample from")
    if max_domains < 1:
        raise SchemaError("max_domains must be >= 1")
    k = int(rng.integers(1, min(max_domains, len(schemas)) + 1))
    chosen = rng.choice(len(schemas), size=k, replace=False)
    domains, constraints, requests, book = [], {}, {}, {}
    for idx in chosen:
        d = schemas[int(idx)]
        entity = d.entities[int(rng.integers(len(d.entities)))]
        slots = [s for s in d.informable if rng.random() < constraint_prob]
        if not slots:
            slots = [list(d.informable)[int(rng.integers(len(d.informable)))]]
        constraints[d.name] = {s: entity[s] for s in slots}
        n_req = int(rng.integers(1, min(2, len(d.requestable)) + 1))
        req = rng.choice(len(d.requestable), size=n_req, replace=False)
        requests[d.name] = tuple(d.requestable[int(i)] for i in sorted(req))
        if d.bookable and rng.random() < book_prob:
            book[d.name] = {s: vals[int(rng.integers(len(vals)))] for s, vals in d.book_slots.items()}
        domains.append(d.name)
        if not d.matches(constraints[d.name]):
            raise SchemaError(f"unsatisfiable goal for {d.name}")
    return UserGoal(tuple(domains), constraints, requests, book)


class AgendaUser:
    """Agenda-driven simulated user.

    The user works through the goal's domains in order. When a domain opens
    it informs one or two constraints and requests everything it wants.
    A system turn is *helpful* if any atomic act in it makes progress:
    asking for a slot the user has not told yet (answered with a value or
    ``dontcare``), informing a pending request once every informable slot of
    the domain is known, or booking once the booking slots are known. After
    ``patience`` consecutive unhelpful turns the user gives up.
    """

    def __init__(self, goal: UserGoal, schemas: list[DomainSchema], rng: np.random.Generator,
                 patience: int = 3):
        self.goal = goal
        self.schemas = {d.name: d for d in schemas}
        self.rng = rng
        self.patience = patience
        self.domain_idx = 0
        self.told: dict[str, set[str]] = {d: set() for d in goal.domains}
        self.answered: dict[str, set[str]] = {d: set() for d in goal.domains}
        self.unhelpful = 0
        self.last_acts: list[UserAct] = []
        self.done = False
        self.success = False

    @property
    def current_domain(self) -> str | None:
        if self.domain_idx < len(self.goal.domains):
            return self.goal.domains[self.domain_idx]
        return None

    def pending_requests(self, domain: str) -> list[str]:
        wanted = list(self.goal.requests[domain])
        if self.goal.needs_booking(domain):
            wanted.append(REF_SLOT)
        return [s for s in wanted if s not in self.answered[domain]]

    def _value(self, domain: str, slot: str) -> str:
        if slot in self.goal.constraints[domain]:
            return self.goal.constraints[domain][slot]
        if slot in self.goal.book.get(domain, {}):
            return self.goal.book[domain][slot]
        return DONTCARE

    def _inform(self, domain: str, slot: str) -> UserAct:
        self.told[domain].add(slot)
        value = self._value(domain, slot)
        return (domain, "dontcare" if value == DONTCARE else "inform", slot, value)

    def _opening(self) -> list[UserAct]:
        d = self.current_domain
        cons = list(self.goal.constraints[d])
        k = min(len(cons), int(self.rng.integers(1, 3)))
        order = self.rng.permutation(len(cons))[:k]
        acts = [self._inform(d, cons[int(i)]) for i in sorted(order)]
        acts += [(d, "request", s, None) for s in self.pending_requests(d)]
        return acts

    def start(self) -> list[UserAct]:
        self.last_acts = self._opening()
        return list(self.last_acts)

    def step(self, system_acts) -> tuple[list[UserAct], bool, bool]:
        """React to one composite system action.

        Returns ``(user_acts, user_done, success_so_far)``.
        """
        if self.done:
            return [], True, self.success
        d = self.current_domain
        schema = self.schemas[d]
        all_known = all(s in self.told[d] for s in schema.informable)
        book_known = all(s in self.told[d] for s in schema.book_slots)
        pending = set(self.pending_requests(d))
        replies: list[UserAct] = []
        helpful = False
        for act in sorted(_well_formed(system_acts)):
            dom, kind, slot = act
            if dom != d:
                continue
            if kind == "Request":
                wants_book = slot in schema.book_slots and self.goal.needs_booking(d)
                if slot not in self.told[d] and (slot in schema.informable or wants_book):
                    replies.append(self._inform(d, slot))
                    helpful = True
            elif kind == "Inform":
                if slot in pending and slot != REF_SLOT and all_known:
                    self.answered[d].add(slot)
                    helpful = True
            elif kind == "Book":
                if REF_SLOT in pending and all_known and book_known:
                    self.answered[d].add(REF_SLOT)
                    helpful = True

        if not helpful:
            self.unhelpful += 1
            if self.unhelpful >= self.patience:
                self.done = True
                return list(self.last_acts), True, False
            return list(self.last_acts), False, False

        self.unhelpful = 0
        if not self.pending_requests(d):
            self.domain_idx += 1
            if self.current_domain is None:
                self.done = True
                self.success = True
                self.last_acts = [(d, "bye", "none", None)]
                return list(self.last_acts), True, True
            self.last_acts = self._opening()
        elif replies:
            self.last_acts = replies
        else:
            self.last_acts = [(d, "request", s, None) for s in self.pending_requests(d)]
        return list(self.last_acts), False, False


def _well_formed(system_acts):
    # malformed acts are dropped, which makes them non-answers
    out = []
    for act in system_acts or ():
        if isinstance(act, tuple) and len(act) == 3 and all(isinstance(x, str) for x in act):
            out.append(act)
    return out
