"""Pipeline stages over an output directory.

Layout under the output root::

    corpus/          corpus.tsv  catalog.json  schemas.json
    vae/ ae/         encoder.bin  curve.csv
    reward_vae/ reward_ae/   reward.bin  curve.csv
    agents/<algo>_<reward>_s<seed>/   policy.bin  curve.csv  metrics.json
    batch/<algo>_<reward>/   seed_<s>.csv  aggregate.csv
    transfer/        curve_<label>.csv  summary.csv
    report/          results.csv  fig_*.csv

Every directory carries a ``manifest.json``.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import replace

import numpy as np

from .. import diffcore as dc
from ..agents.train import (ALGOS, REWARD_SOURCES, GreedyQPolicy, RandomPolicy, TrainResult,
                            train_agent)
from ..dialenv.actions import ActionCatalog
from ..dialenv.corpus import TransitionCorpus
from ..dialenv.env import (DialogueEnv, ExpertPolicy, catalog_from_episodes, evaluate,
                           generate_expert_episodes)
from ..dialenv.schema import load_schemas, save_schemas
from ..errors import ConfigurationError
from ..rewardgan import RewardModel, train_reward
from ..statevae import StateVAE, train_vae
from ..xfer.experiment import TransferConfig, transfer_experiment
from ..xfer.holdout import HoldoutSpec
from . import manifest as mf
from .config import ExperimentConfig

log = logging.getLogger(__name__)

OUTPUT_ENV = "GUIDEDPOLICY_OUTPUT_ROOT"

_CORPUS = ["experiment.profile", "experiment.seed", "experiment.schema_file", "env", "corpus"]
DEPS = {
    "corpus": _CORPUS,
    "vae": _CORPUS + ["vae"],
    "reward": _CORPUS + ["vae", "reward"],
    "agent": _CORPUS + ["vae", "reward", "agent"],
    "transfer": _CORPUS + ["vae", "reward", "agent", "transfer"],
}


def output_root(config: ExperimentConfig, override: str | None = None) -> str:
    """Explicit override, then the environment variable, then the config."""
    return override or os.environ.get(OUTPUT_ENV) or config.experiment.output_dir


def _hash(config: ExperimentConfig, stage: str, extra: str = "") -> str:
    return config.hash(DEPS[stage], extra)


# -- corpus -------------------------------------------------------------------------

def gen_corpus(config: ExperimentConfig, root: str, force: bool = False) -> str:
    run_dir = os.path.join(root, "corpus")
    h = _hash(config, "corpus")
    m = mf.begin(run_dir, "gen-corpus", h, config.experiment.seed, force)
    if m is None:
        log.info("corpus up to date in %s", run_dir)
        return run_dir
    rng = config.rng("corpus")
    schemas = config.schemas()
    env = DialogueEnv(schemas, None, config.env)
    episodes = generate_expert_episodes(env, config.corpus.n_episodes, rng, config.corpus.noise)
    catalog = catalog_from_episodes(episodes, config.corpus.catalog_size)
    corpus = TransitionCorpus.from_episodes(episodes, catalog)
    corpus.save(os.path.join(run_dir, "corpus.tsv"), env.layout)
    catalog.save(os.path.join(run_dir, "catalog.json"))
    save_schemas(schemas, os.path.join(run_dir, "schemas.json"))
    mf.finish(m, run_dir, ["corpus.tsv", "catalog.json", "schemas.json"],
              {"transitions": len(corpus), "episodes": len(episodes), "catalog_size": len(catalog),
               "in_catalog": float(np.mean(corpus.actions >= 0)), "state_dim": env.state_dim})
    return run_dir


def load_corpus(config: ExperimentConfig, root: str):
    """(corpus, catalog, env) from a finished gen-corpus stage."""
    run_dir = os.path.join(root, "corpus")
    mf.require(run_dir, "gen-corpus", _hash(config, "corpus"))
    schemas = load_schemas(os.path.join(run_dir, "schemas.json"))
    catalog = ActionCatalog.load(os.path.join(run_dir, "catalog.json"))
    env = DialogueEnv(schemas, catalog, config.env)
    corpus = TransitionCorpus.load(os.path.join(run_dir, "corpus.tsv"), env.layout)
    return corpus, catalog, env


# -- VAE / AE -----------------------------------------------------------------------

def _check_kind(kind: str) -> None:
    if kind not in ("vae", "ae"):
        raise ConfigurationError(f"encoder kind must be vae or ae, not {kind!r}")


def train_vae_stage(config: ExperimentConfig, root: str, kind: str = "vae", force: bool = False) -> str:
    _check_kind(kind)
    run_dir = os.path.join(root, kind)
    h = _hash(config, "vae", kind)
    mf.require(os.path.join(root, "corpus"), "gen-corpus", _hash(config, "corpus"))
    m = mf.begin(run_dir, "train-vae", h, config.experiment.seed, force,
                 {"corpus": _hash(config, "corpus")})
    if m is None:
        return run_dir
    corpus, _, _ = load_corpus(config, root)
    vc = replace(config.vae, variational=(kind == "vae"))
    res = train_vae(corpus.states.astype(np.float64), vc, config.rng("vae"))
    res.vae.save(os.path.join(run_dir, "encoder.bin"))
    with open(os.path.join(run_dir, "curve.csv"), "w", newline="") as fh:
        fh.write(res.curve_csv())
    mf.finish(m, run_dir, ["encoder.bin", "curve.csv"],
              {"bit_accuracy": res.vae.bit_accuracy(corpus.states), "kind": kind})
    return run_dir


def load_vae(config: ExperimentConfig, root: str, kind: str = "vae") -> StateVAE:
    run_dir = os.path.join(root, kind)
    mf.require(run_dir, "train-vae", _hash(config, "vae", kind))
    return StateVAE.load(os.path.join(run_dir, "encoder.bin"))


# -- reward -------------------------------------------------------------------------

def train_reward_stage(config: ExperimentConfig, root: str, kind: str = "vae",
                       force: bool = False) -> str:
    _check_kind(kind)
    if config.reward.mode != "onehot":
        raise ConfigurationError("the main reward stage uses one-hot actions; factored mode is "
                                 "trained by the transfer stage")
    run_dir = os.path.join(root, f"reward_{kind}")
    h = _hash(config, "reward", kind)
    mf.require(os.path.join(root, "corpus"), "gen-corpus", _hash(config, "corpus"))
    mf.require(os.path.join(root, kind), "train-vae", _hash(config, "vae", kind))
    m = mf.begin(run_dir, "train-reward", h, config.experiment.seed, force,
                 {"encoder": _hash(config, "vae", kind)})
    if m is None:
        return run_dir
    corpus, catalog, _ = load_corpus(config, root)
    vae = load_vae(config, root, kind)
    res = train_reward(corpus, vae, config.reward, config.rng("gan"), n_actions=len(catalog))
    res.model.meta["config_hash"] = h
    res.model.save(os.path.join(run_dir, "reward.bin"))
    with open(os.path.join(run_dir, "curve.csv"), "w", newline="") as fh:
        fh.write(res.curve_csv())
    ex = corpus.in_catalog()
    mf.finish(m, run_dir, ["reward.bin", "curve.csv"],
              {"heldout_auc": res.heldout_auc, "kind": kind,
               "expert_log_d": float(res.model.log_d(ex.states, ex.actions).mean())})
    return run_dir


def load_reward(config: ExperimentConfig, root: str, kind: str, env: DialogueEnv) -> RewardModel:
    run_dir = os.path.join(root, f"reward_{kind}")
    h = _hash(config, "reward", kind)
    mf.require(run_dir, "train-reward", h)
    model = RewardModel.load(os.path.join(run_dir, "reward.bin"))
    if model.meta.get("config_hash") != h:
        raise mf.StaleArtifact(f"reward checkpoint in {run_dir} does not match its manifest")
    if model.encoder.state_dim != env.state_dim or model.n_actions != len(env.catalog):
        raise mf.StaleArtifact(f"reward checkpoint shape ({model.encoder.state_dim} bits, "
                               f"{model.n_actions} actions) does not fit the environment")
    return model


# -- agents -------------------------------------------------------------------------

def agent_dir(root: str, algo: str, source: str, seed: int) -> str:
    return os.path.join(root, "agents", f"{algo}_{source}_s{seed}")


def run_agent(config: ExperimentConfig, root: str, algo: str | None = None, source: str | None = None,
              seed: int | None = None, force: bool = False) -> TrainResult | None:
    """Train one agent and write its directory; returns None when reused."""
    algo = algo or config.experiment.algo
    source = source or config.experiment.reward_source
    seed = config.experiment.seed if seed is None else seed
    if algo not in ALGOS:
        raise ConfigurationError(f"unknown algorithm {algo!r}")
    if source not in REWARD_SOURCES:
        raise ConfigurationError(f"unknown reward source {source!r}")
    corpus, catalog, env = load_corpus(config, root)
    model = None
    if source != "human":
        kind = "vae" if source == "gan_vae" else "ae"
        model = load_reward(config, root, kind, env)
    monitor = None
    try:
        monitor = model or load_reward(config, root, "vae", env)
    except ConfigurationError:
        pass
    run_dir = agent_dir(root, algo, source, seed)
    extra = f"{algo}|{source}|{seed}|{config.experiment.budget_frames}"
    m = mf.begin(run_dir, "train-agent", _hash(config, "agent", extra), seed, force,
                 {"corpus": _hash(config, "corpus")})
    if m is None:
        return None
    res = train_agent(algo, source, env, config.experiment.budget_frames, config.agent,
                      config.rng("agent", seed), reward_model=model, expert=corpus, monitor=monitor)
    dc.save_params(res.net, os.path.join(run_dir, "policy.bin"))
    with open(os.path.join(run_dir, "curve.csv"), "w", newline="") as fh:
        fh.write(res.curve_csv())
    metrics = {"agent": label(algo, source), "algo": algo, "reward_source": source, "seed": seed,
               "success_rate": res.final_success, "average_turn": res.final_turns,
               "budget_frames": config.experiment.budget_frames}
    if monitor is not None:
        ex = corpus.in_catalog()
        metrics["validation_reward"] = float(monitor.log_d(ex.states, ex.actions).mean())
    with open(os.path.join(run_dir, "metrics.json"), "w") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
    mf.finish(m, run_dir, ["policy.bin", "curve.csv", "metrics.json"], {**metrics, **res.extra})
    return res


def label(algo: str, source: str) -> str:
    names = {"dqn": "DQN", "wdqn": "WDQN", "wdqn_keep": "WDQN_keep", "ppo": "PPO"}
    sources = {"human": "Human", "gan_vae": "GAN-VAE", "gan_ae": "GAN-AE"}
    return f"{names[algo]}({sources[source]})"


# -- evaluate -----------------------------------------------------------------------

def evaluate_stage(config: ExperimentConfig, root: str, policy: str, n_episodes: int,
                   seed: int | None = None) -> dict:
    """Evaluate ``expert``, ``random`` or a trained agent directory."""
    _, catalog, env = load_corpus(config, root)
    seed = config.experiment.seed if seed is None else seed
    rng = config.rng("eval", seed)
    if policy == "expert":
        pol = ExpertPolicy(env.schemas)
    elif policy == "random":
        pol = RandomPolicy(len(catalog), np.random.default_rng(rng.integers(2**63)))
    else:
        m = mf.RunManifest.read(policy) if mf.RunManifest.exists(policy) else None
        if m is None or m.stage != "train-agent" or not m.complete(policy):
            raise ConfigurationError(f"{policy} is not a finished agent directory")
        net = dc.load_params(os.path.join(policy, "policy.bin"))
        if net.spec.n_in != env.state_dim or net.spec.n_out != len(catalog):
            raise mf.StaleArtifact(f"policy in {policy} does not fit the environment")
        pol = GreedyQPolicy(net)
    sr, at = evaluate(pol, env, n_episodes, rng)
    return {"policy": policy, "success_rate": sr, "average_turn": at, "episodes": n_episodes, "seed": seed}


# -- transfer -----------------------------------------------------------------------

def transfer_stage(config: ExperimentConfig, root: str, seed: int | None = None,
                   force: bool = False):
    seed = config.experiment.seed if seed is None else seed
    run_dir = os.path.join(root, "transfer", f"s{seed}")
    mf.require(os.path.join(root, "corpus"), "gen-corpus", _hash(config, "corpus"))
    m = mf.begin(run_dir, "transfer", _hash(config, "transfer", str(seed)), seed, force,
                 {"corpus": _hash(config, "corpus")})
    if m is None:
        return None
    corpus, catalog, env = load_corpus(config, root)
    spec = HoldoutSpec.from_schemas(env.schemas, config.transfer.held_out)
    tc = TransferConfig(config.transfer.budget_frames, config.vae, config.reward, config.agent,
                        config.env, config.transfer.include_onehot)
    report = transfer_experiment(spec, corpus, catalog, env.schemas, tc, config.rng("transfer", seed))
    files = report.write(run_dir, "transfer.json")
    mf.finish(m, run_dir, files,
              {"final_success": report.final_success(), "audit": report.audit})
    return report
