"""Training loops for DQN, WDQN (removal / keep) and PPO against a reward source.

A *frame* is one environment turn.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .. import diffcore as dc
from ..dialenv.corpus import TransitionCorpus
from ..dialenv.env import (FAILURE, ONGOING, SUCCESS, DialogueEnv, HandcraftedReward, Observation,
                           run_episode)
from ..diffcore import NetParams
from ..errors import ConfigurationError
from ..rewardgan import RewardModel
from .dqn import QNetwork, dqn_select, dqn_update
from .ppo import PolicyValue, Trajectory, imitation_warmup, ppo_update, supervised_step
from .replay import ReplayBuffer, WarmupSchedule

log = logging.getLogger(__name__)

ALGOS = ("dqn", "wdqn", "wdqn_keep", "ppo")
REWARD_SOURCES = ("human", "gan_vae", "gan_ae")
CURVE_FIELDS = ("frames", "success_rate", "average_turn", "mean_learned_reward")


@dataclass
class AgentConfig:
    hidden: tuple[int, ...] = (128,)
    gamma: float = 0.99
    lr: float = 1e-3
    # DQN
    buffer_size: int = 50_000
    batch_size: int = 64
    target_sync: int = 1_000
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_fraction: float = 0.2
    learning_starts: int = 500
    train_freq: int = 1
    # WDQN
    warmup_fraction: float = 0.5
    warmup_horizon_fraction: float = 0.25
    evict_every: int = 1_000
    # PPO
    ppo_lr: float = 1e-3
    value_lr: float = 1e-3
    clip_eps: float = 0.2
    lam: float = 0.95
    ppo_epochs: int = 4
    rollout_steps: int = 2048
    minibatch: int = 256
    entropy_coef: float = 0.0
    imitation_epochs: int = 3
    imitation_pairs: int = 2000
    teacher_forcing_every: int = 0     # rollouts between supervised steps; 0 = off
    # evaluation
    eval_every: int = 2_000
    eval_episodes: int = 200
    test_episodes: int = 500

    def to_dict(self) -> dict:
        return asdict(self)


class GreedyQPolicy:
    def __init__(self, net: NetParams):
        self.net = net

    def __call__(self, obs: Observation) -> int:
        return int(np.argmax(dc.predict(self.net, obs.vector[None, :].astype(np.float64))[0]))


class GreedyPolicy:
    """Argmax of a softmax policy net."""

    def __init__(self, net: NetParams):
        self.net = net

    def __call__(self, obs: Observation) -> int:
        return int(np.argmax(dc.predict(self.net, obs.vector[None, :].astype(np.float64))[0]))


class RandomPolicy:
    def __init__(self, n_actions: int, rng: np.random.Generator):
        self.n_actions = n_actions
        self.rng = rng

    def __call__(self, obs: Observation) -> int:
        return int(self.rng.integers(self.n_actions))


@dataclass
class TrainResult:
    algo: str
    reward_source: str
    policy: object
    net: NetParams
    curve: list[dict] = field(default_factory=list)
    final_success: float = 0.0
    final_turns: float = 0.0
    extra: dict = field(default_factory=dict)

    def curve_csv(self) -> str:
        return curve_to_csv(self.curve)


def curve_to_csv(curve: list[dict]) -> str:
    out = io.StringIO()
    w = csv.DictWriter(out, fieldnames=list(CURVE_FIELDS), extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for row in curve:
        w.writerow({k: row[k] for k in CURVE_FIELDS})
    return out.getvalue()


def make_reward_source(reward_source: str, reward_model: RewardModel | None, T: int):
    if reward_source not in REWARD_SOURCES:
        raise ConfigurationError(f"unknown reward source {reward_source!r}")
    if reward_source == "human":
        return HandcraftedReward(T)
    if reward_model is None:
        raise ConfigurationError(f"reward source {reward_source} needs a trained reward model")
    want = "vae" if reward_source == "gan_vae" else "ae"
    if reward_model.encoder_kind != want:
        raise ConfigurationError(f"reward source {reward_source} given a {reward_model.encoder_kind} "
                                 f"reward model")
    return reward_model


def corpus_rewards(corpus: TransitionCorpus, reward, T: int) -> np.ndarray:
    """Re-score expert transitions under ``reward``."""
    status = np.where(~corpus.dones, ONGOING, np.where(corpus.success, SUCCESS, FAILURE))
    base = np.array([HandcraftedReward(T)(None, None, s) for s in status])
    if isinstance(reward, RewardModel):
        return base + reward.log_d(corpus.states, corpus.actions)
    return base


def wdqn_seed(buffer: ReplayBuffer, expert: TransitionCorpus, schedule: WarmupSchedule, reward,
              T: int, rng: np.random.Generator) -> ReplayBuffer:
    """Prefill ``buffer`` with re-scored in-catalog expert transitions.

    Fills ``schedule.initial_fraction`` of capacity, sampling without
    replacement (all of them when the corpus is smaller).
    """
    ex = expert.in_catalog()
    r = corpus_rewards(ex, reward, T)
    n_seed = int(schedule.initial_fraction * buffer.capacity)
    order = rng.permutation(len(ex))[:n_seed]
    buffer.seed_expert(ex.states[order], ex.actions[order], r[order], ex.next_states[order],
                       ex.dones[order].astype(float))
    return buffer


def _evaluate(policy, env: DialogueEnv, n: int, seed: int, monitor: RewardModel | None):
    rng = np.random.default_rng(seed)
    wins, turns, learned = 0, 0, []
    for _ in range(n):
        ep = run_episode(policy, env, None, rng)
        wins += ep.success
        turns += ep.n_turns
        if monitor is not None:
            S = np.array([t.state for t in ep.turns])
            A = np.array([t.action for t in ep.turns])
            learned.extend(monitor.log_d(S, A))
    return wins / n, turns / n, (float(np.mean(learned)) if learned else float("nan"))


class _Tracker:
    """Periodic evaluation plus best-on-eval snapshot."""

    def __init__(self, env, config: AgentConfig, eval_seed: int, monitor):
        self.env, self.config, self.eval_seed, self.monitor = env, config, eval_seed, monitor
        self.curve: list[dict] = []
        self.best_success = -1.0
        self.best_net: NetParams | None = None

    def record(self, frames: int, net: NetParams, policy_cls) -> None:
        sr, at, lr = _evaluate(policy_cls(net), self.env, self.config.eval_episodes, self.eval_seed,
                               self.monitor)
        self.curve.append({"frames": frames, "success_rate": sr, "average_turn": at,
                           "mean_learned_reward": lr})
        if sr > self.best_success:
            self.best_success = sr
            self.best_net = net.copy()


def train_agent(algo: str, reward_source: str, env: DialogueEnv, budget_frames: int,
                config: AgentConfig | None, rng: np.random.Generator,
                reward_model: RewardModel | None = None, expert: TransitionCorpus | None = None,
                monitor: RewardModel | None = None) -> TrainResult:
    """Train one agent; returns the best-on-eval policy and its learning curve.

    ``expert`` is the in-catalog expert corpus (needed by WDQN and PPO).
    ``monitor`` is a reward model whose log D is reported on the curve
    regardless of what the agent is trained on.
    """
    config = config or AgentConfig()
    if algo not in ALGOS:
        raise ConfigurationError(f"unknown algorithm {algo!r}")
    if env.catalog is None:
        raise ConfigurationError("environment has no action catalog")
    T = env.config.max_turns
    reward = make_reward_source(reward_source, reward_model, T)
    if isinstance(reward, RewardModel) and reward.n_actions != len(env.catalog):
        raise ConfigurationError("reward model catalog size does not match the environment")
    if monitor is None and isinstance(reward, RewardModel):
        monitor = reward
    if algo in ("wdqn", "wdqn_keep", "ppo") and (expert is None or len(expert) == 0):
        raise ConfigurationError(f"{algo} needs an expert corpus")
    eval_seed = int(rng.integers(2**31))
    test_seed = int(rng.integers(2**31))
    tracker = _Tracker(env, config, eval_seed, monitor)
    if algo == "ppo":
        net, extra = _train_ppo(reward, env, budget_frames, config, rng, expert, tracker)
        policy_cls = GreedyPolicy
    else:
        net, extra = _train_dqn(algo, reward, env, budget_frames, config, rng, expert, tracker, T)
        policy_cls = GreedyQPolicy
    best = tracker.best_net if tracker.best_net is not None else net
    policy = policy_cls(best)
    sr, at, _ = _evaluate(policy, env, config.test_episodes, test_seed, None)
    return TrainResult(algo, reward_source, policy, best, tracker.curve, sr, at, extra)


def _train_dqn(algo, reward, env, budget, config, rng, expert, tracker, T):
    q = QNetwork.init(env.state_dim, len(env.catalog), rng, config.hidden, config.lr)
    buf = ReplayBuffer(config.buffer_size, env.state_dim)
    schedule = None
    extra = {}
    if algo in ("wdqn", "wdqn_keep"):
        schedule = WarmupSchedule("keep" if algo == "wdqn_keep" else "removal",
                                  config.warmup_fraction,
                                  int(config.warmup_horizon_fraction * budget))
        wdqn_seed(buf, expert, schedule, reward, T, rng)
        extra["expert_seeded"] = buf.n_expert
    tracker.record(0, q.online, GreedyQPolicy)
    eps_frames = max(1, int(config.eps_fraction * budget))
    frames = 0
    losses = []
    while frames < budget:
        obs = env.reset(rng)
        done = False
        while not done and frames < budget:
            eps = config.eps_end + (config.eps_start - config.eps_end) * max(0.0, 1.0 - frames / eps_frames)
            a = dqn_select(q, obs.vector[None, :].astype(np.float64), eps, rng)
            nxt, status, done, idx, _ = env.step(a)
            r = reward(obs.vector, idx, status)
            buf.add(obs.vector, idx, r, nxt.vector, float(done))
            obs = nxt
            frames += 1
            if len(buf) >= max(config.batch_size, config.learning_starts if buf.n_expert == 0 else 0) \
                    and frames % config.train_freq == 0:
                losses.append(dqn_update(q, buf.sample(config.batch_size, rng), config.gamma))
            if frames % config.target_sync == 0:
                q.sync()
            if schedule is not None and schedule.mode == "removal" and frames % config.evict_every == 0:
                buf.evict_expert(int(schedule.expert_fraction(frames) * buf.capacity), rng)
            if frames % config.eval_every == 0:
                tracker.record(frames, q.online, GreedyQPolicy)
    if not tracker.curve or tracker.curve[-1]["frames"] != frames:
        tracker.record(frames, q.online, GreedyQPolicy)
    extra["final_expert"] = buf.n_expert
    extra["mean_td_loss"] = float(np.mean(losses[-1000:])) if losses else float("nan")
    return q.online, extra


def _train_ppo(reward, env, budget, config, rng, expert, tracker):
    pv = PolicyValue.init(env.state_dim, len(env.catalog), rng, config.hidden, config.ppo_lr,
                          config.value_lr)
    ex = expert.in_catalog()
    pick = rng.permutation(len(ex))[:config.imitation_pairs]
    imitation_warmup(pv, ex.states[pick].astype(np.float64), ex.actions[pick], config.imitation_epochs, rng)
    tracker.record(0, pv.policy, GreedyPolicy)
    extra = {"warmup_success": tracker.curve[0]["success_rate"]}
    frames = 0
    next_eval = config.eval_every
    rollouts = 0
    while frames < budget:
        trajs, steps = [], 0
        while steps < config.rollout_steps and frames + steps < budget:
            obs = env.reset(rng)
            S, A, R, L = [], [], [], []
            done = False
            while not done and frames + steps < budget:
                a, lp = pv.sample(obs.vector[None, :], rng)
                nxt, status, done, idx, _ = env.step(a)
                S.append(obs.vector)
                A.append(a)
                R.append(reward(obs.vector, idx, status))
                L.append(lp)
                obs = nxt
                steps += 1
            last_v = 0.0 if done else float(pv.values(obs.vector[None, :])[0])
            trajs.append(Trajectory(np.array(S, dtype=np.float64), np.array(A), np.array(R),
                                    np.array(L), done, last_v))
        frames += steps
        ppo_update(pv, trajs, config.clip_eps, config.gamma, config.lam, config.ppo_epochs,
                   config.minibatch, rng, entropy_coef=config.entropy_coef)
        rollouts += 1
        if config.teacher_forcing_every and rollouts % config.teacher_forcing_every == 0:
            mb = rng.integers(len(ex), size=config.minibatch)
            supervised_step(pv, ex.states[mb].astype(np.float64), ex.actions[mb])
        while frames >= next_eval:
            tracker.record(next_eval, pv.policy, GreedyPolicy)
            next_eval += config.eval_every
    if tracker.curve[-1]["frames"] != frames:
        tracker.record(frames, pv.policy, GreedyPolicy)
    return pv.policy, extra
