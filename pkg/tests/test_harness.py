import csv
import json
import os

import numpy as np
import pytest

from guidedpolicy.errors import ConfigurationError
from guidedpolicy.harness import cli
from guidedpolicy.harness.batch import aggregate_curves, batch_runs
from guidedpolicy.harness.config import ExperimentConfig, load_config, profile, substream
from guidedpolicy.harness import manifest as mf

TINY = {
    "corpus": ["n_episodes=150"],
    "vae": ["epochs=2", "hidden=16", "latent_dim=8"],
    "reward": ["max_iters=40", "eval_every=20", "noise_dim=8", "gen_hidden=16", "disc_hidden=16"],
    "agent": ["hidden=(16,)", "eval_every=100", "eval_episodes=5", "test_episodes=10",
              "learning_starts=50", "target_sync=50", "imitation_pairs=100", "imitation_epochs=1",
              "rollout_steps=100", "minibatch=32"],
    "experiment": ["budget_frames=200"],
    "transfer": ["budget_frames=100", "include_onehot=False"],
}


def _tiny_args():
    return [a for sec, kv in TINY.items() for item in kv for a in ("--set", f"{sec}.{item}")]


def _run(*argv):
    return cli.main(list(argv))


# -- config ------------------------------------------------------------------------

def test_hash_stable_under_key_reordering():
    a = load_config(text="[vae]\nepochs = 3\nlr = 0.01\n[agent]\ngamma = 0.9\n")
    b = load_config(text="[agent]\ngamma = 0.9\n[vae]\nlr = 0.01\nepochs = 3\n")
    assert a.hash() == b.hash()
    assert a.hash() != ExperimentConfig().hash()
    assert a.hash(["corpus"]) == ExperimentConfig().hash(["corpus"])
    assert a.hash(["vae"]) != ExperimentConfig().hash(["vae"])


def test_hash_ignores_int_float_spelling():
    a = load_config(text="[vae]\nbeta = 1\n")
    assert a.vae.beta == 1.0 and isinstance(a.vae.beta, float)
    assert a.hash() == ExperimentConfig().hash()


def test_ini_round_trip():
    cfg = load_config(text="[agent]\nhidden = (64, 32)\n[reward]\nmode = onehot\n")
    back = load_config(text=cfg.to_ini())
    assert back == cfg and back.hash() == cfg.hash()
    assert back.agent.hidden == (64, 32)


def test_config_errors(tmp_path):
    with pytest.raises(ConfigurationError):
        load_config(text="[vae]\nepochz = 3\n")
    with pytest.raises(ConfigurationError):
        load_config(text="[spa]\nx = 1\n")
    with pytest.raises(ConfigurationError):
        load_config(text="[vae]\nepochs = many\n")
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "missing.ini")
    with pytest.raises(ConfigurationError):
        profile("huge")


def test_paper_shape_profile():
    cfg = profile("paper-shape")
    assert cfg.env.state_dim == 392 and cfg.corpus.catalog_size == 300
    assert len(cfg.schemas()) == 7


def test_substreams():
    a = substream(0, "agent").integers(2**31, size=5)
    assert np.array_equal(a, substream(0, "agent").integers(2**31, size=5))
    assert not np.array_equal(a, substream(0, "eval").integers(2**31, size=5))
    assert not np.array_equal(a, substream(1, "agent").integers(2**31, size=5))
    with pytest.raises(ConfigurationError):
        substream(0, "misc")


# -- manifests and batch ----------------------------------------------------------

def test_manifest_reuse_and_stale(tmp_path):
    d = tmp_path / "stage"
    m = mf.begin(d, "gen-corpus", "abc", 0)
    (d / "out.txt").write_text("x")
    mf.finish(m, d, ["out.txt"])
    assert mf.begin(d, "gen-corpus", "abc", 0) is None
    assert mf.require(d, "gen-corpus", "abc").status == "completed"
    with pytest.raises(mf.StaleArtifact):
        mf.require(d, "gen-corpus", "other")
    with pytest.raises(ConfigurationError):
        mf.begin(d, "gen-corpus", "other", 0)
    assert mf.begin(d, "gen-corpus", "other", 0, force=True) is not None
    assert not (d / "out.txt").exists()
    with pytest.raises(ConfigurationError):
        mf.require(tmp_path / "nothing", "gen-corpus", "abc")


def test_aggregate_curves():
    c1 = [{"frames": 0, "success_rate": 0.0, "average_turn": 10.0, "mean_learned_reward": 1.0},
          {"frames": 10, "success_rate": 0.5, "average_turn": 8.0, "mean_learned_reward": float("nan")}]
    c2 = [{"frames": 0, "success_rate": 1.0, "average_turn": 6.0, "mean_learned_reward": 3.0}]
    agg = aggregate_curves([c1, c2])
    assert agg[0]["n"] == 2 and agg[0]["success_rate_mean"] == 0.5 and agg[0]["success_rate_std"] == 0.5
    assert agg[0]["average_turn_std"] == 2.0
    assert agg[1]["n"] == 1 and np.isnan(agg[1]["mean_learned_reward_mean"])


def test_batch_records_failures(tmp_path):
    def runner(seed):
        if seed == 2:
            raise RuntimeError("boom")
        return [{"frames": 0, "success_rate": seed / 10, "average_turn": 1.0, "mean_learned_reward": 0.0}]
    res = batch_runs(ExperimentConfig(), [1, 2, 3], str(tmp_path), runner, "h")
    assert sorted(res["curves"]) == [1, 3] and 2 in res["failed"]
    m = mf.RunManifest.read(tmp_path)
    assert m.info["failed"]["2"].startswith("RuntimeError")
    assert res["aggregate"][0]["success_rate_mean"] == pytest.approx(0.2)


# -- CLI -----------------------------------------------------------------------------

def test_cli_usage_errors(capsys):
    assert _run() == cli.EXIT_USAGE
    with pytest.raises(SystemExit) as e:
        _run("fly")
    assert e.value.code == cli.EXIT_USAGE
    with pytest.raises(SystemExit) as e:
        _run("train-agent", "--algo", "sarsa")
    assert e.value.code == cli.EXIT_USAGE


def test_cli_config_errors(tmp_path):
    out = str(tmp_path)
    assert _run("gen-corpus", "-o", out, "--set", "vae.nope=1") == cli.EXIT_CONFIG
    assert _run("gen-corpus", "-o", out, "--set", "novalue") == cli.EXIT_CONFIG
    assert _run("gen-corpus", "-o", out, "-c", str(tmp_path / "missing.ini")) == cli.EXIT_CONFIG
    assert _run("train-vae", "-o", out) == cli.EXIT_CONFIG


def test_cli_pipeline(tmp_path, monkeypatch):
    root = str(tmp_path / "runs")
    monkeypatch.setenv("GUIDEDPOLICY_OUTPUT_ROOT", root)
    t = _tiny_args()
    assert _run("gen-corpus", *t) == cli.EXIT_OK
    first = mf.RunManifest.read(os.path.join(root, "corpus"))
    assert _run("gen-corpus", *t) == cli.EXIT_OK            # reused, not regenerated
    assert mf.RunManifest.read(os.path.join(root, "corpus")).started == first.started
    assert _run("train-agent", "--reward", "gan_vae", *t) == cli.EXIT_CONFIG   # no reward yet
    assert _run("train-vae", *t) == cli.EXIT_OK
    assert _run("train-reward", *t) == cli.EXIT_OK
    assert _run("train-vae", *t, "--set", "vae.epochs=3") == cli.EXIT_CONFIG   # would clobber
    assert _run("train-reward", *t, "--set", "vae.epochs=3", "--force") == cli.EXIT_STALE
    assert _run("train-agent", "--reward", "gan_vae", "--seeds", "0,1", *t) == cli.EXIT_OK
    assert _run("train-agent", "--algo", "wdqn", "--reward", "human", *t) == cli.EXIT_OK
    agent = os.path.join(root, "agents", "dqn_gan_vae_s0")
    metrics = json.loads(open(os.path.join(agent, "metrics.json")).read())
    assert metrics["agent"] == "DQN(GAN-VAE)" and "validation_reward" in metrics
    assert os.path.exists(os.path.join(root, "batch", "dqn_gan_vae", "aggregate.csv"))
    assert _run("evaluate", agent, "-n", "5", *t) == cli.EXIT_OK
    assert _run("evaluate", "expert", "-n", "5", *t) == cli.EXIT_OK
    assert _run("evaluate", str(tmp_path), "-n", "5", *t) == cli.EXIT_CONFIG
    assert _run("transfer", *t) == cli.EXIT_OK
    rep = str(tmp_path / "report")
    assert _run("report", root, "-o", rep) == cli.EXIT_OK
    with open(os.path.join(rep, "results.csv")) as fh:
        rows = list(csv.DictReader(fh))
    agents = {r["agent"] for r in rows}
    assert {"DQN(GAN-VAE)", "WDQN(Human)", "DQN_new(holdout)"} <= agents
    with open(os.path.join(rep, "fig_reward_monitor.csv")) as fh:
        assert any(r["agent"] == "Validation" for r in csv.DictReader(fh))


def test_cli_report_empty(tmp_path):
    assert _run("report", str(tmp_path / "none"), "-o", str(tmp_path / "rep")) == cli.EXIT_OK
    with open(tmp_path / "rep" / "results.csv") as fh:
        assert fh.read().strip() == "agent,success_rate,average_turn"
