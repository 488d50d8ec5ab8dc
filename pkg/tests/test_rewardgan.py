import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from guidedpolicy import diffcore as dc
from guidedpolicy.diffcore import NetParams, NetSpec, RejectedInput
from guidedpolicy.dialenv import FAILURE, ONGOING, SUCCESS
from guidedpolicy.rewardgan import (Generator, HistoryBuffer, RewardConfig, RewardModel, auc,
                                    discriminate, discriminator_loss_and_grads, generate_pair,
                                    generator_loss_and_grads, gumbel_noise, gumbel_softmax,
                                    gumbel_softmax_backward, init_discriminator, mismatch_actions,
                                    mismatch_negatives, score, straight_through, train_reward)
from guidedpolicy.statevae import StateVAE, VaeConfig


def _zero_output_disc(width, hidden, rng):
    disc = init_discriminator(width, hidden, rng)
    disc.weights[-1][...] = 0.0
    disc.biases[-1][...] = 0.0
    return disc


# -- Gumbel-Softmax -------------------------------------------------------------

def test_gumbel_noise_median():
    # median of Gumbel(0, 1) is -log(log 2)
    g = gumbel_noise(np.random.default_rng(0), 200_000)
    assert np.median(g) == pytest.approx(0.366513, abs=0.01)
    assert np.mean(g) == pytest.approx(np.euler_gamma, abs=0.01)
    assert np.all(np.isfinite(gumbel_noise(np.random.default_rng(1), 10_000)))


@settings(max_examples=100, deadline=None)
@given(st.integers(2, 30), st.floats(0.05, 5.0), st.integers(0, 2**31))
def test_gumbel_softmax_on_simplex(k, tau, seed):
    rng = np.random.default_rng(seed)
    y = gumbel_softmax(rng.normal(0, 5, (3, k)), tau, gumbel_noise(rng, (3, k)))
    assert np.all(y >= 0)
    assert np.all(np.abs(y.sum(axis=1) - 1.0) <= 1e-9)


def test_gumbel_softmax_ignores_logit_shift():
    rng = np.random.default_rng(2)
    l, g = rng.standard_normal(6), gumbel_noise(rng, 6)
    assert np.allclose(gumbel_softmax(l, 0.8, g), gumbel_softmax(l + 7.0, 0.8, g), atol=1e-14)


def test_gumbel_softmax_rejects():
    with pytest.raises(RejectedInput):
        gumbel_softmax(np.zeros(3), 0.0, np.zeros(3))
    with pytest.raises(RejectedInput):
        gumbel_softmax(np.zeros(3), 1.0, np.zeros(4))


def test_gumbel_sampling_frequencies():
    # the hard sample follows softmax(logits)
    rng = np.random.default_rng(3)
    logits = np.log(np.array([0.5, 0.3, 0.2]))
    n = 40_000
    y = gumbel_softmax(np.tile(logits, (n, 1)), 0.8, gumbel_noise(rng, (n, 3)))
    freq = np.bincount(np.argmax(y, axis=1), minlength=3) / n
    assert np.allclose(freq, [0.5, 0.3, 0.2], atol=0.01)


def test_straight_through_exact_one_hot():
    y = np.array([[0.2, 0.5, 0.3], [0.4, 0.4, 0.2]])
    out = straight_through(y)
    assert np.array_equal(out, np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0]]))


def test_gumbel_backward_matches_finite_differences():
    rng = np.random.default_rng(4)
    logits, g, w = rng.standard_normal((3, 5)), gumbel_noise(rng, (3, 5)), rng.standard_normal((3, 5))
    tau = 0.8
    p = [logits.copy()]

    def fn():
        y = gumbel_softmax(p[0], tau, g)
        return float(np.sum(w * y)), [gumbel_softmax_backward(y, tau, w)]
    assert dc.grad_check(p, fn) < 1e-6


# -- generator / discriminator gradients ----------------------------------------

def test_generator_soft_path_gradient():
    rng = np.random.default_rng(5)
    gen = Generator.init(6, 8, 5, 4, rng)
    disc = init_discriminator(4 + 3, 8, rng)
    embed = rng.standard_normal((5, 3))
    z, g = rng.standard_normal((7, 6)), gumbel_noise(rng, (7, 5))

    def fn():
        return generator_loss_and_grads(gen, disc, embed, z, g, 0.8, hard=False)
    assert dc.grad_check(gen.arrays(), fn) < 1e-4


def test_discriminator_gradient():
    rng = np.random.default_rng(6)
    disc = init_discriminator(9, 8, rng)
    real, sim = rng.standard_normal((5, 9)), rng.standard_normal((7, 9))
    assert dc.grad_check(disc.arrays(), lambda: discriminator_loss_and_grads(disc, real, sim)) < 1e-4


def test_generator_output_shapes():
    rng = np.random.default_rng(7)
    gen = Generator.init(6, 8, 11, 4, rng)
    s, a = generate_pair(gen, rng.standard_normal((3, 6)), 0.8, rng)
    assert s.shape == (3, 4) and a.shape == (3, 11)
    assert np.array_equal(a.sum(axis=1), np.ones(3))
    assert set(np.unique(a)) <= {0.0, 1.0}


def test_symmetric_batch_keeps_d_at_half():
    rng = np.random.default_rng(8)
    disc = _zero_output_disc(6, 8, rng)
    x = rng.standard_normal((16, 6))
    loss, grads = discriminator_loss_and_grads(disc, x, x.copy())
    assert loss == pytest.approx(2 * np.log(2))
    assert all(np.allclose(g, 0.0, atol=1e-15) for g in grads)
    dc.step(disc, grads, dc.adam(1e-2))
    assert np.allclose(discriminate(disc, x), 0.5, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.floats(-1e4, 1e4))
def test_discriminator_output_in_open_interval(seed, scale):
    rng = np.random.default_rng(seed)
    disc = init_discriminator(4, 6, rng)
    d = discriminate(disc, rng.standard_normal((5, 4)) * scale)
    assert np.all(np.isfinite(d))
    assert np.all(d >= 0) and np.all(d <= 1)


# -- negatives and bookkeeping ---------------------------------------------------

def test_history_buffer_capacity():
    rng = np.random.default_rng(9)
    h = HistoryBuffer(5, 2)
    h.add(np.arange(6).reshape(3, 2), rng)
    assert len(h) == 3
    h.add(np.ones((10, 2)), rng)
    assert len(h) == 5
    assert h.sample(4, rng).shape == (4, 2)


def test_mismatch_actions_never_original():
    rng = np.random.default_rng(10)
    a = rng.integers(7, size=5000)
    m = mismatch_actions(a, 7, rng)
    assert np.all(m != a) and m.min() >= 0 and m.max() < 7
    # uniform over the other six
    counts = np.bincount(m[a == 0], minlength=7)[1:]
    assert counts.min() > 0.7 * counts.mean()
    with pytest.raises(RejectedInput):
        mismatch_actions(np.zeros(2, dtype=int), 1, rng)


def test_mismatch_negatives_single_action(small_world):
    _, _, _, corpus = small_world
    vae = StateVAE.init(corpus.states.shape[1], np.random.default_rng(0), VaeConfig(latent_dim=4, hidden=8))
    one = corpus.subset(corpus.actions == 0)
    with pytest.raises(RejectedInput):
        mismatch_negatives(one, vae, np.random.default_rng(0), 5)
    lat, rep, orig = mismatch_negatives(corpus, vae, np.random.default_rng(0), 20)
    assert lat.shape == (20, 4) and np.all(rep != orig)


def test_auc():
    assert auc(np.array([3.0, 4.0]), np.array([1.0, 2.0])) == 1.0
    assert auc(np.array([1.0, 2.0]), np.array([3.0, 4.0])) == 0.0
    assert auc(np.array([1.0, 1.0]), np.array([1.0])) == 0.5
    assert auc(np.array([1.0, 3.0]), np.array([2.0])) == 0.5


# -- reward model ----------------------------------------------------------------

def _model(rng, clamp=1e-6):
    vae = StateVAE.init(10, rng, VaeConfig(latent_dim=4, hidden=8))
    return RewardModel(_zero_output_disc(4 + 3, 8, rng), vae, np.eye(3), 40, clamp)


def test_score_with_neutral_discriminator():
    m = _model(np.random.default_rng(11))
    s = np.zeros(10)
    # D = 0.5 everywhere: r = r_handcrafted + log 0.5
    assert score(m, s, 0, ONGOING) == pytest.approx(-1.693147, abs=1e-6)
    assert score(m, s, 1, SUCCESS) == pytest.approx(80 - np.log(2), abs=1e-12)
    assert score(m, s, 2, FAILURE) == pytest.approx(-40 - np.log(2), abs=1e-12)


def test_score_clamped_and_pure():
    rng = np.random.default_rng(12)
    m = _model(rng)
    s = rng.integers(0, 2, 10)
    assert m(s, 1, ONGOING) == m(s, 1, ONGOING)
    disc = init_discriminator(7, 8, rng)
    disc.weights[-1][...] = 0.0
    disc.biases[-1][...] = -1e4
    m2 = RewardModel(disc, StateVAE.init(10, rng, VaeConfig(latent_dim=4, hidden=8)), np.eye(3))
    assert m2.log_d(s, [0])[0] == pytest.approx(np.log(1e-6))
    assert np.isfinite(m2(s, 0, ONGOING))
    with pytest.raises(RejectedInput):
        m.log_d(s, [3])


def test_reward_model_immutable():
    m = _model(np.random.default_rng(13))
    with pytest.raises(ValueError):
        m.disc.weights[0][0, 0] = 1.0
    with pytest.raises(ValueError):
        m.embed[0, 0] = 2.0


def test_reward_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(14)
    vae = StateVAE.init(10, rng, VaeConfig(latent_dim=4, hidden=8))
    m = RewardModel(init_discriminator(7, 8, rng), vae, rng.standard_normal((5, 3)), 40, 1e-6,
                    "factored", "ae", meta={"held_out": "hotel"})
    path = tmp_path / "reward.bin"
    m.save(path)
    back = RewardModel.load(path)
    s = rng.integers(0, 2, (4, 10))
    a = np.array([0, 1, 4, 2])
    assert np.array_equal(back.log_d(s, a), m.log_d(s, a))
    assert back.header() == m.header()
    data = path.read_bytes()
    with pytest.raises(RejectedInput):
        RewardModel.loads(b"x" + data[1:])


def test_train_reward_small(small_world):
    _, _, catalog, corpus = small_world
    rng = np.random.default_rng(15)
    from guidedpolicy.statevae import train_vae
    vae = train_vae(corpus.states, VaeConfig(latent_dim=16, hidden=32, epochs=5), rng).vae
    res = train_reward(corpus, vae, RewardConfig(max_iters=300, eval_every=50, noise_dim=8,
                                                 gen_hidden=32, disc_hidden=32), rng,
                       n_actions=len(catalog))
    assert res.heldout_auc > 0.6
    assert res.model.n_actions == len(catalog)
    assert res.curve and {"iter", "auc", "d_loss", "g_loss"} <= set(res.curve[0])
    assert res.curve_csv().startswith("iter,")
    inc = corpus.in_catalog()
    assert np.all(np.isfinite(res.model.log_d(inc.states[:50], inc.actions[:50])))
