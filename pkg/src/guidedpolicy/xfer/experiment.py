"""Domain-transfer experiment: agents on held-out-domain goals under three rewards."""

from __future__ import annotations

import csv
import json
import logging
import os
from dataclasses import dataclass, field, replace

import numpy as np

from ..agents.train import AgentConfig, TrainResult, curve_to_csv, train_agent
from ..dialenv.actions import ActionCatalog
from ..dialenv.corpus import TransitionCorpus
from ..dialenv.env import DialogueEnv, EnvConfig
from ..dialenv.schema import DomainSchema
from ..errors import ConfigurationError
from ..rewardgan import RewardConfig, RewardModel, train_reward
from ..statevae import StateVAE, VaeConfig, train_vae
from .embedding import FactoredVocab, embedding_matrix
from .holdout import HoldoutSpec, audit_corpus, filter_corpus, visible_actions

log = logging.getLogger(__name__)

FULL, HOLDOUT, HUMAN, ONEHOT = "full_domain", "holdout", "human", "onehot_full_domain"


@dataclass
class TransferConfig:
    budget_frames: int = 4_000
    vae: VaeConfig = field(default_factory=VaeConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    include_onehot: bool = False     # also train the one-hot reward agent baseline


@dataclass
class TransferReport:
    spec: HoldoutSpec
    runs: dict[str, TrainResult]
    seeds: dict[str, int]
    audit: dict
    reward_auc: dict[str, float]

    def final_success(self) -> dict[str, float]:
        return {k: r.final_success for k, r in self.runs.items()}

    def write(self, out_dir, manifest_name: str = "manifest.json") -> list[str]:
        """CSV per curve, a summary CSV and a JSON manifest; returns the file names."""
        os.makedirs(out_dir, exist_ok=True)
        files = []
        for label, run in self.runs.items():
            name = f"curve_{label}.csv"
            with open(os.path.join(out_dir, name), "w", newline="") as fh:
                fh.write(curve_to_csv(run.curve))
            files.append(name)
        with open(os.path.join(out_dir, "summary.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["agent", "success_rate", "average_turn"])
            for label, run in self.runs.items():
                w.writerow([label, run.final_success, run.final_turns])
        files.append("summary.csv")
        manifest = {"held_out": self.spec.held_out, "train_domains": list(self.spec.train_domains),
                    "runs": {k: {"seed": self.seeds[k], "curve": f"curve_{k}.csv"} for k in self.runs},
                    "seeds": self.seeds, "audit": self.audit, "reward_auc": self.reward_auc,
                    "files": files + [manifest_name]}
        with open(os.path.join(out_dir, manifest_name), "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
        return files + [manifest_name]


def _train_reward_model(corpus: TransitionCorpus, config: TransferConfig, embed: np.ndarray,
                        mode: str, rng: np.random.Generator):
    vae = train_vae(corpus.states.astype(np.float64), config.vae, rng).vae
    res = train_reward(corpus, vae, replace(config.reward, mode=mode), rng, embed=embed)
    return vae, res


@dataclass
class TransferRewards:
    """Reward models for the transfer comparison, keyed by run label."""
    spec: HoldoutSpec
    models: dict[str, tuple[str, RewardModel | None]]
    audit: dict
    auc: dict[str, float]
    seeds: dict[str, int]


def train_transfer_rewards(spec: HoldoutSpec, corpus: TransitionCorpus, catalog: ActionCatalog,
                           schemas: list[DomainSchema], config: TransferConfig | None,
                           rng: np.random.Generator) -> TransferRewards:
    """Full-domain and holdout reward models over factored action embeddings
    (plus the one-hot full-domain model when configured).

    The holdout model's VAE and discriminator only see the filtered corpus and
    the catalog actions that avoid the held-out domain; afterwards it is
    re-wrapped with the whole catalog's factored embedding so it can score
    held-out actions through their shared act and slot segments.
    """
    config = config or TransferConfig()
    vocab = FactoredVocab.from_schemas(schemas)
    full_embed = embedding_matrix(catalog, "factored", vocab)
    seeds = {k: int(s) for k, s in zip(("reward_full", "reward_holdout", "reward_onehot"),
                                       rng.integers(2**31, size=3))}

    _, full_res = _train_reward_model(corpus, config, full_embed, "factored",
                                      np.random.default_rng(seeds["reward_full"]))

    train_corpus = filter_corpus(corpus, spec)
    leaks = audit_corpus(train_corpus, spec.held_out)
    visible = visible_actions(catalog, spec.held_out)
    remap = np.full(len(catalog), -1, dtype=np.int64)
    remap[visible] = np.arange(len(visible))
    in_cat = train_corpus.actions >= 0
    sub_actions = np.where(in_cat, remap[np.maximum(train_corpus.actions, 0)], -1)
    leaks += int(np.sum(in_cat & (sub_actions < 0)))
    if leaks:
        raise ConfigurationError(f"corpus audit failed: {leaks} transitions touch {spec.held_out!r}")
    sub_corpus = replace(train_corpus, actions=sub_actions)
    hvae, hold_res = _train_reward_model(sub_corpus, config, full_embed[visible], "factored",
                                         np.random.default_rng(seeds["reward_holdout"]))
    hold_model = RewardModel(hold_res.model.disc, hvae, full_embed, config.reward.T, config.reward.clamp,
                             "factored", "vae", meta={"held_out": spec.held_out,
                                                      "train_domains": list(spec.train_domains)})
    audit = {"transitions_seen": len(sub_corpus), "held_out_transitions": leaks,
             "actions_seen": int(len(visible)), "catalog_size": len(catalog), "passed": leaks == 0}
    models = {FULL: ("gan_vae", full_res.model), HOLDOUT: ("gan_vae", hold_model), HUMAN: ("human", None)}
    aucs = {FULL: full_res.heldout_auc, HOLDOUT: hold_res.heldout_auc}
    if config.include_onehot:
        _, oh_res = _train_reward_model(corpus, config, np.eye(len(catalog)), "onehot",
                                        np.random.default_rng(seeds["reward_onehot"]))
        models[ONEHOT] = ("gan_vae", oh_res.model)
        aucs[ONEHOT] = oh_res.heldout_auc
    return TransferRewards(spec, models, audit, aucs, seeds)


def transfer_env(spec: HoldoutSpec, schemas: list[DomainSchema], catalog: ActionCatalog,
                 config: TransferConfig) -> DialogueEnv:
    """Environment whose goals come from the held-out domain only."""
    return DialogueEnv(schemas, catalog, replace(config.env, goal_domains=(spec.held_out,), max_domains=1))


def run_transfer_agents(rewards: TransferRewards, env: DialogueEnv, config: TransferConfig,
                        agent_seed: int) -> dict[str, TrainResult]:
    """One DQN agent per reward, all from the same agent seed (paired runs)."""
    runs = {}
    for label, (source, model) in rewards.models.items():
        log.info("transfer: training %s agent", label)
        runs[label] = train_agent("dqn", source, env, config.budget_frames, config.agent,
                                  np.random.default_rng(agent_seed), reward_model=model)
    return runs


def transfer_experiment(spec: HoldoutSpec, corpus: TransitionCorpus, catalog: ActionCatalog,
                        schemas: list[DomainSchema], config: TransferConfig | None,
                        rng: np.random.Generator) -> TransferReport:
    """Reward training with and without the held-out domain, then a DQN
    agent per reward on held-out-domain goals, plus the handcrafted-reward
    agent."""
    config = config or TransferConfig()
    rewards = train_transfer_rewards(spec, corpus, catalog, schemas, config, rng)
    agent_seed = int(rng.integers(2**31))
    runs = run_transfer_agents(rewards, transfer_env(spec, schemas, catalog, config), config, agent_seed)
    seeds = {k: agent_seed for k in runs}
    seeds.update(rewards.seeds)
    return TransferReport(spec, runs, seeds, rewards.audit, rewards.auc)
