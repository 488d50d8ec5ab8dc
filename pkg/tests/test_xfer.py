import json

import numpy as np
import pytest

from guidedpolicy.agents import AgentConfig
from guidedpolicy.dialenv import ActionCatalog, make_composite
from guidedpolicy.errors import ConfigurationError
from guidedpolicy.rewardgan import RewardConfig
from guidedpolicy.statevae import VaeConfig
from guidedpolicy.xfer import (FactoredVocab, HoldoutSpec, TransferConfig, UnknownActPart, audit_corpus,
                               embedding_matrix, factorize_action, filter_corpus, transfer_env,
                               transfer_experiment, visible_actions)
from guidedpolicy.xfer.experiment import FULL, HOLDOUT, HUMAN


def test_factored_single_act(schemas):
    vocab = FactoredVocab.from_schemas(schemas)
    seg = vocab.segments()
    v = factorize_action(make_composite([("hotel", "Request", "stars")]), vocab)
    for part in seg.values():
        assert v[part].sum() == 1
    assert v[seg["domain"]][vocab.domains.index("hotel")] == 1
    assert v[seg["act"]][vocab.acts.index("Request")] == 1
    assert v[seg["slot"]][vocab.slots.index("stars")] == 1


def test_factored_composite_is_union(schemas):
    vocab = FactoredVocab.from_schemas(schemas)
    a, b = ("hotel", "Request", "area"), ("restaurant", "Inform", "phone")
    u = factorize_action(make_composite([a, b]), vocab)
    assert np.array_equal(u, np.maximum(factorize_action((a,), vocab), factorize_action((b,), vocab)))
    # shared act and slot bits carry over between domains
    same = factorize_action(make_composite([("hotel", "Request", "area"), ("taxi", "Request", "area")]), vocab)
    assert same.sum() == 4


def test_factored_unknown_part(schemas):
    vocab = FactoredVocab.from_schemas(schemas)
    with pytest.raises(UnknownActPart):
        factorize_action((("spa", "Request", "area"),), vocab)
    with pytest.raises(UnknownActPart):
        factorize_action((("hotel", "Greet", "area"),), vocab)


def test_embedding_matrix_modes(small_world, schemas):
    _, _, catalog, _ = small_world
    assert np.array_equal(embedding_matrix(catalog), np.eye(len(catalog)))
    vocab = FactoredVocab.from_schemas(schemas)
    m = embedding_matrix(catalog, "factored", vocab)
    assert m.shape == (len(catalog), vocab.width)
    assert np.all(m[:, vocab.segments()["domain"]].sum(axis=1) >= 1)
    with pytest.raises(ValueError):
        embedding_matrix(catalog, "factored")
    with pytest.raises(ValueError):
        embedding_matrix(catalog, "bag")
    assert FactoredVocab.from_dict(json.loads(json.dumps(vocab.to_dict()))) == vocab


def test_holdout_spec(schemas):
    spec = HoldoutSpec.from_schemas(schemas, "hotel")
    assert "hotel" not in spec.train_domains and len(spec.train_domains) == 4
    with pytest.raises(ConfigurationError):
        HoldoutSpec(("hotel", "taxi"), "hotel")
    with pytest.raises(ConfigurationError):
        HoldoutSpec.from_schemas(schemas, "spa")
    with pytest.raises(ConfigurationError):
        HoldoutSpec((), "hotel")


def test_filter_drops_whole_episodes(small_world, schemas):
    _, _, _, corpus = small_world
    spec = HoldoutSpec.from_schemas(schemas, "hotel")
    assert audit_corpus(corpus, "hotel") > 0
    kept = filter_corpus(corpus, spec)
    assert audit_corpus(kept, "hotel") == 0
    for ep in np.unique(kept.episode):
        assert (corpus.episode == ep).sum() == (kept.episode == ep).sum()
    for i in range(len(kept)):
        assert "hotel" not in kept.goal_domains[i]


def test_filter_empty_corpus(small_world, schemas):
    _, _, _, corpus = small_world
    only_hotel = corpus.subset(np.array(["hotel" in g for g in corpus.goal_domains]))
    with pytest.raises(ConfigurationError):
        filter_corpus(only_hotel, HoldoutSpec.from_schemas(schemas, "hotel"))


def test_visible_actions():
    cat = ActionCatalog([[("hotel", "Request", "area")], [("taxi", "Request", "car")],
                         [("hotel", "Inform", "phone"), ("taxi", "Inform", "phone")]])
    assert list(visible_actions(cat, "hotel")) == [1]


def test_transfer_env_goals(small_world, schemas):
    _, _, catalog, _ = small_world
    env = transfer_env(HoldoutSpec.from_schemas(schemas, "hotel"), schemas, catalog, TransferConfig())
    rng = np.random.default_rng(0)
    for _ in range(20):
        assert env.reset(rng).goal.domains == ("hotel",)


def test_transfer_experiment_small(small_world, schemas, tmp_path):
    _, _, catalog, corpus = small_world
    cfg = TransferConfig(budget_frames=200,
                         vae=VaeConfig(latent_dim=8, hidden=16, epochs=2),
                         reward=RewardConfig(max_iters=60, eval_every=20, noise_dim=8, gen_hidden=16,
                                             disc_hidden=16),
                         agent=AgentConfig(hidden=(16,), eval_every=100, eval_episodes=5, test_episodes=10,
                                           learning_starts=50, target_sync=50))
    spec = HoldoutSpec.from_schemas(schemas, "hotel")
    rep = transfer_experiment(spec, corpus, catalog, schemas, cfg, np.random.default_rng(1))
    assert set(rep.runs) == {FULL, HOLDOUT, HUMAN}
    assert rep.audit["passed"] and rep.audit["held_out_transitions"] == 0
    assert rep.audit["actions_seen"] < rep.audit["catalog_size"]
    files = rep.write(tmp_path)
    assert {"summary.csv", "manifest.json", f"curve_{FULL}.csv"} <= set(files)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["held_out"] == "hotel" and manifest["audit"]["passed"]
    # paired agent seeds
    assert len({rep.seeds[k] for k in rep.runs}) == 1
