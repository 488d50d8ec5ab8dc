import numpy as np
import pytest

from guidedpolicy import diffcore as dc
from guidedpolicy.diffcore import RejectedInput
from guidedpolicy.statevae import (StateVAE, VaeConfig, embed_state, encode, gaussian_kl,
                                   reparam_sample, train_vae, vae_loss)


def _small(variational=True, seed=0):
    cfg = VaeConfig(latent_dim=4, hidden=8, variational=variational)
    return StateVAE.init(10, np.random.default_rng(seed), cfg)


def test_gaussian_kl_values():
    # KL(N(mu, 1) || N(0, 1)) = mu^2 / 2
    assert gaussian_kl(np.array([1.0, 0.0]), np.zeros(2)) == 0.5
    assert gaussian_kl(np.zeros(3), np.zeros(3)) == 0.0
    # one dimension with sigma^2 = e: 0.5 * (e - 1 - 1)
    assert gaussian_kl(np.zeros(1), np.ones(1)) == pytest.approx(0.5 * (np.e - 2.0), abs=1e-15)


def test_gaussian_kl_nonnegative():
    rng = np.random.default_rng(1)
    for _ in range(200):
        assert gaussian_kl(rng.normal(0, 2, 5), rng.normal(0, 2, 5)) >= 0


def test_reparam_sample():
    mean, lv = np.array([1.0, -1.0]), np.log(np.array([4.0, 0.25]))
    z = reparam_sample(mean, lv, noise=np.array([1.0, 2.0]))
    assert np.allclose(z, [3.0, 0.0])
    with pytest.raises(RejectedInput):
        reparam_sample(np.zeros(2), np.zeros(3), noise=np.zeros(2))
    draws = reparam_sample(np.full(20000, 2.0), np.full(20000, np.log(9.0)), np.random.default_rng(2))
    assert draws.mean() == pytest.approx(2.0, abs=0.1)
    assert draws.std() == pytest.approx(3.0, abs=0.1)


def test_shapes_and_heads():
    vae = _small()
    assert vae.latent_dim == 4 and vae.state_dim == 10
    assert vae.mean_head.spec.n_in == vae.trunk.spec.n_out == vae.logvar_head.spec.n_in
    mu, lv = encode(vae, np.zeros(10))
    assert mu.shape == lv.shape == (1, 4)
    assert StateVAE.init(120, np.random.default_rng(0)).latent_dim == 64
    with pytest.raises(RejectedInput):
        vae.encode(np.zeros((2, 11)))


def test_embed_state_deterministic():
    vae = _small()
    s = np.random.default_rng(3).integers(0, 2, (6, 10))
    assert np.array_equal(embed_state(vae, s), embed_state(vae, s))
    assert np.array_equal(vae.embed_state(s), vae.encode(s)[0])


def test_kl_zero_iff_standard_posterior():
    vae = _small()
    for net in (vae.mean_head, vae.logvar_head):
        for a in net.arrays():
            a[...] = 0.0
    s = np.random.default_rng(4).integers(0, 2, (5, 10))
    noise = np.random.default_rng(5).standard_normal((5, 4))
    assert vae.loss_and_grads(s, noise)[2] == 0.0
    vae.mean_head.biases[0][0] = 0.1
    assert vae.loss_and_grads(s, noise)[2] > 0.0


@pytest.mark.parametrize("variational", [True, False])
def test_vae_loss_gradient(variational):
    vae = _small(variational, seed=6)
    rng = np.random.default_rng(7)
    s = rng.integers(0, 2, (6, 10)).astype(float)
    noise = rng.standard_normal((6, 4)) if variational else None

    def fn():
        total, _, _, grads = vae.loss_and_grads(s, noise)
        return total, grads
    assert dc.grad_check(vae.arrays(), fn) < 1e-4


def test_loss_decomposition():
    vae = _small(seed=8)
    s = np.random.default_rng(9).integers(0, 2, (4, 10))
    total, recon, kl = vae_loss(vae, s, np.random.default_rng(10))
    assert total == pytest.approx(recon + kl)
    assert recon > 0 and kl >= 0
    with pytest.raises(RejectedInput):
        vae.loss_and_grads(s, None)


def test_single_state_overfit():
    s = np.random.default_rng(11).integers(0, 2, (1, 30)).astype(float)
    res = train_vae(np.repeat(s, 16, axis=0), VaeConfig(latent_dim=8, hidden=32, epochs=60, batch_size=16),
                    np.random.default_rng(12))
    assert res.vae.bit_accuracy(s) == 1.0
    assert res.min_batch_kl >= 0
    assert len(res.curve) == 60
    assert res.curve[-1][1] < res.curve[0][1]


def test_train_rejects_empty():
    with pytest.raises(RejectedInput):
        train_vae(np.zeros((0, 5)), None, np.random.default_rng(0))


def test_checkpoint_round_trip(tmp_path):
    vae = _small(seed=13)
    path = tmp_path / "vae.bin"
    vae.save(path)
    back = StateVAE.load(path)
    s = np.random.default_rng(14).integers(0, 2, (3, 10))
    assert np.array_equal(back.embed_state(s), vae.embed_state(s))
    assert back.variational
    ae = _small(False)
    ae.save(path)
    assert not StateVAE.load(path).variational


def test_curve_csv():
    res = train_vae(np.eye(6), VaeConfig(latent_dim=2, hidden=4, epochs=2), np.random.default_rng(15))
    lines = res.curve_csv().strip().splitlines()
    assert lines[0] == "epoch,total,recon,kl"
    assert len(lines) == 3
