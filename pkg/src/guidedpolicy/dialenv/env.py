"""Dialogue environment, handcrafted reward, scripted expert and episode runner."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from .actions import ActionCatalog, Composite, build_action_catalog, make_composite
from .schema import REF_SLOT, DomainSchema, desk_schemas
from .tracker import StateLayout, TrackerState, initial_state, track_state
from .user import AgendaUser, UserGoal, sample_goal

ONGOING, SUCCESS, FAILURE = "ongoing", "success", "failure"


def handcrafted_reward(turn_status: str, T: int = 40) -> float:
    """-1 per ongoing turn, +2T on success, -T on failure."""
    if T <= 0:
        raise ValueError("T must be positive")
    if turn_status == SUCCESS:
        return 2.0 * T
    if turn_status == FAILURE:
        return -float(T)
    return -1.0


class RewardSource(Protocol):
    def __call__(self, state: np.ndarray, action: int, turn_status: str) -> float: ...


@dataclass(frozen=True)
class HandcraftedReward:
    T: int = 40

    def __call__(self, state, action, turn_status) -> float:
        return handcrafted_reward(turn_status, self.T)


@dataclass
class EnvConfig:
    max_turns: int = 40
    patience: int = 3
    max_domains: int = 2
    goal_domains: tuple[str, ...] | None = None   # restrict goals to these domains
    state_dim: int | None = None


@dataclass
class Turn:
    state: np.ndarray
    action: int                 # catalog index, -1 if outside the catalog
    composite: Composite
    reward: float
    next_state: np.ndarray
    done: bool


@dataclass
class EpisodeLog:
    goal: UserGoal
    turns: list[Turn] = field(default_factory=list)
    success: bool = False

    @property
    def n_turns(self) -> int:
        return len(self.turns)

    @property
    def total_reward(self) -> float:
        return float(sum(t.reward for t in self.turns))

    def domains(self) -> set[str]:
        out = set(self.goal.domains)
        for t in self.turns:
            out |= {a[0] for a in t.composite}
        return out


@dataclass
class Observation:
    """What a policy sees. Learned policies read ``vector`` only; the
    scripted expert also reads the tracker and the goal."""
    vector: np.ndarray
    tracker: TrackerState
    goal: UserGoal


class DialogueEnv:
    def __init__(self, schemas: list[DomainSchema] | None = None,
                 catalog: ActionCatalog | None = None, config: EnvConfig | None = None):
        self.schemas = list(schemas) if schemas is not None else desk_schemas()
        self.by_name = {d.name: d for d in self.schemas}
        self.config = config or EnvConfig()
        self.layout = StateLayout(self.schemas, self.config.state_dim)
        self.catalog = catalog
        if self.config.goal_domains is not None:
            self.goal_schemas = [self.by_name[d] for d in self.config.goal_domains]
        else:
            self.goal_schemas = self.schemas
        self._user: AgendaUser | None = None
        self._tracker: TrackerState | None = None

    @property
    def state_dim(self) -> int:
        return self.layout.dim

    def reset(self, rng: np.random.Generator, goal: UserGoal | None = None) -> Observation:
        if goal is None:
            goal = sample_goal(rng, self.goal_schemas, self.config.max_domains)
        self._user = AgendaUser(goal, self.schemas, rng, self.config.patience)
        self._tracker = track_state(initial_state(self.schemas), self._user.start(), self.schemas)
        self._turns = 0
        return self._observe()

    def _observe(self) -> Observation:
        return Observation(self.layout.vectorize(self._tracker), self._tracker, self._user.goal)

    def resolve(self, action) -> tuple[int, Composite]:
        """Map a catalog index or a raw composite to (index, composite)."""
        if isinstance(action, (int, np.integer)):
            if self.catalog is None or not 0 <= int(action) < len(self.catalog):
                raise IndexError(f"action index {action} outside the catalog")
            return int(action), self.catalog[int(action)]
        comp = make_composite(action)
        idx = self.catalog.index(comp) if self.catalog is not None else -1
        return idx, comp

    def step(self, action) -> tuple[Observation, str, bool, int, Composite]:
        """Returns ``(observation, turn_status, done, action_index, composite)``."""
        idx, comp = self.resolve(action)
        user_acts, user_done, success = self._user.step(comp)
        self._turns += 1
        self._tracker = track_state(self._tracker, user_acts, self.schemas, system_acts=comp)
        if user_done:
            status = SUCCESS if success else FAILURE
        elif self._turns >= self.config.max_turns:
            status = FAILURE
        else:
            status = ONGOING
        return self._observe(), status, status != ONGOING, idx, comp


def expert_policy(t: TrackerState, goal: UserGoal, schemas: dict[str, DomainSchema]) -> Composite:
    """Scripted agent that can see the user goal.

    Works through the goal's domains in order: ask for every informable slot
    not yet known (plus booking slots when a booking is wanted), then inform
    all pending requests, then book.
    """
    for d in goal.domains:
        wanted = set(goal.requests[d]) | ({REF_SLOT} if goal.needs_booking(d) else set())
        if wanted <= set(t.answered[d]):
            continue
        sch = schemas[d]
        known = t.known(d)
        missing = [s for s in sch.informable if s not in known]
        if goal.needs_booking(d):
            missing += [s for s in sch.book_slots if s not in known]
        if missing:
            return make_composite((d, "Request", s) for s in missing)
        pending = [s for s in t.pending(d) if s != REF_SLOT]
        if pending:
            return make_composite((d, "Inform", s) for s in pending)
        return make_composite([(d, "Book", REF_SLOT)])
    last = goal.domains[-1]
    return make_composite([(last, "NoOffer", "none")])


class ExpertPolicy:
    """Callable wrapper; ``noise`` replaces the action with a random atomic
    act of the active domain with that probability."""

    def __init__(self, schemas: list[DomainSchema], noise: float = 0.0,
                 rng: np.random.Generator | None = None):
        self.by_name = {d.name: d for d in schemas}
        self.noise = noise
        self.rng = rng

    def __call__(self, obs: Observation):
        action = expert_policy(obs.tracker, obs.goal, self.by_name)
        if self.noise > 0 and self.rng.random() < self.noise:
            acts = self.by_name[action[0][0]].system_acts()
            action = make_composite([acts[int(self.rng.integers(len(acts)))]])
        return action


Policy = Callable[[Observation], object]


def run_episode(policy: Policy, env: DialogueEnv, reward_source: RewardSource | None,
                rng: np.random.Generator, goal: UserGoal | None = None) -> EpisodeLog:
    reward_source = reward_source or HandcraftedReward(env.config.max_turns)
    obs = env.reset(rng, goal)
    log = EpisodeLog(obs.goal)
    while True:
        nxt, status, done, idx, comp = env.step(policy(obs))
        r = reward_source(obs.vector, idx, status)
        log.turns.append(Turn(obs.vector, idx, comp, float(r), nxt.vector, done))
        obs = nxt
        if done:
            log.success = status == SUCCESS
            return log


def evaluate(policy: Policy, env: DialogueEnv, n_episodes: int,
             rng: np.random.Generator) -> tuple[float, float]:
    """(success rate, average turns) over ``n_episodes`` fresh goals."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    wins, turns = 0, 0
    for _ in range(n_episodes):
        ep = run_episode(policy, env, HandcraftedReward(env.config.max_turns), rng)
        wins += ep.success
        turns += ep.n_turns
    return wins / n_episodes, turns / n_episodes


def generate_expert_episodes(env: DialogueEnv, n_episodes: int, rng: np.random.Generator,
                             noise: float = 0.1) -> list[EpisodeLog]:
    expert = ExpertPolicy(env.schemas, noise, rng)
    return [run_episode(expert, env, None, rng) for _ in range(n_episodes)]


def catalog_from_episodes(episodes: list[EpisodeLog], catalog_size: int) -> ActionCatalog:
    return build_action_catalog((t.composite for ep in episodes for t in ep.turns), catalog_size)


def reindex(episodes: list[EpisodeLog], catalog: ActionCatalog) -> None:
    """Fill in catalog indices for episodes generated before the catalog existed."""
    for ep in episodes:
        for t in ep.turns:
            t.action = catalog.index(t.composite)
