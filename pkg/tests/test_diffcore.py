import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from guidedpolicy import diffcore as dc
from guidedpolicy.diffcore import NetParams, NetSpec, RejectedInput, TrainingDivergence


def _squared_loss(params, x, t):
    def fn():
        y, cache = dc.forward(params, x)
        err = y - t
        grads, _ = dc.backward(params, cache, err)
        return 0.5 * float(np.sum(err ** 2)), grads
    return fn


# -- NetSpec ---------------------------------------------------------------------

def test_netspec_validation():
    with pytest.raises(RejectedInput):
        NetSpec((3,), ())
    with pytest.raises(RejectedInput):
        NetSpec((3, 0), ("relu",))
    with pytest.raises(RejectedInput):
        NetSpec((3, 4, 2), ("softmax", "identity"))
    with pytest.raises(RejectedInput):
        NetSpec((3, 4), ("relu", "relu"))
    with pytest.raises(RejectedInput):
        NetSpec((3, 4), ("gelu",))
    assert NetSpec.mlp(5, [7], 2).layer_sizes == (5, 7, 2)


# -- forward ---------------------------------------------------------------------

def test_forward_identity_layer():
    p = NetParams(NetSpec((3, 3), ("identity",)), [np.eye(3)], [np.zeros(3)])
    x = np.array([[1.0, -2.0, 3.5]])
    assert np.array_equal(dc.forward(p, x)[0], x)


def test_forward_relu_scalar():
    p = NetParams(NetSpec((1, 1), ("relu",)), [np.array([[2.0]])], [np.array([1.0])])
    assert dc.forward(p, np.array([[3.0]]))[0][0, 0] == 7.0


def test_forward_sigmoid_zero():
    p = NetParams.zeros(NetSpec((4, 3), ("sigmoid",)))
    assert np.array_equal(dc.forward(p, np.zeros((2, 4)))[0], np.full((2, 3), 0.5))


def test_forward_shape_mismatch():
    p = NetParams.zeros(NetSpec((4, 3), ("relu",)))
    with pytest.raises(RejectedInput):
        dc.forward(p, np.zeros((2, 5)))
    with pytest.raises(RejectedInput):
        dc.predict(p, np.zeros(4))


def test_forward_deterministic_and_rows():
    rng = np.random.default_rng(0)
    p = NetParams.init(NetSpec.mlp(6, [5, 4], 3, hidden_act="tanh"), rng)
    x = rng.standard_normal((9, 6))
    a, _ = dc.forward(p, x)
    b, _ = dc.forward(p, x)
    assert a.shape == (9, 3)
    assert np.array_equal(a, b)
    assert np.array_equal(a, dc.predict(p, x))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 8), st.integers(2, 12), st.integers(0, 10_000))
def test_softmax_rows_sum_to_one(n, k, seed):
    rng = np.random.default_rng(seed)
    p = NetParams.init(NetSpec.mlp(4, [6], k, out_act="softmax"), rng)
    out = dc.predict(p, rng.standard_normal((n, 4)) * 30)
    assert np.all(np.abs(out.sum(axis=1) - 1.0) < 1e-9)


def test_init_bounds():
    rng = np.random.default_rng(1)
    p = NetParams.init(NetSpec((10, 30), ("relu",)), rng)
    bound = np.sqrt(6.0 / 40)
    assert np.all(np.abs(p.weights[0]) <= bound)
    assert np.all(p.biases[0] == 0)


# -- backward --------------------------------------------------------------------

def test_backward_hand_2x2():
    # L = 0.5 * ||x W + b - t||^2 with x = [1, 1], W = [[1, 2], [3, 4]], b = 0, t = [1, 1]
    # y = [4, 6], e = [3, 5], dL/dW = x^T e = [[3, 5], [3, 5]], dL/db = [3, 5],
    # dL/dx = e W^T = [3 + 10, 9 + 20] = [13, 29]
    p = NetParams(NetSpec((2, 2), ("identity",)), [np.array([[1.0, 2.0], [3.0, 4.0]])], [np.zeros(2)])
    x = np.array([[1.0, 1.0]])
    y, cache = dc.forward(p, x)
    grads, dx = dc.backward(p, cache, y - np.array([[1.0, 1.0]]))
    assert np.array_equal(grads[0], np.array([[3.0, 5.0], [3.0, 5.0]]))
    assert np.array_equal(grads[1], np.array([3.0, 5.0]))
    assert np.array_equal(dx, np.array([[13.0, 29.0]]))


def test_backward_zero_grad():
    rng = np.random.default_rng(2)
    p = NetParams.init(NetSpec.mlp(3, [4], 2), rng)
    y, cache = dc.forward(p, rng.standard_normal((5, 3)))
    grads, dx = dc.backward(p, cache, np.zeros_like(y))
    assert all(np.all(g == 0) for g in grads)
    assert np.all(dx == 0)
    assert [g.shape for g in grads] == [a.shape for a in p.arrays()]


def test_backward_rejects_stale_cache():
    rng = np.random.default_rng(3)
    p = NetParams.init(NetSpec.mlp(3, [4], 2), rng)
    y, cache = dc.forward(p, rng.standard_normal((5, 3)))
    dc.step(p, [np.ones_like(a) for a in p.arrays()], dc.sgd(0.1))
    with pytest.raises(RejectedInput):
        dc.backward(p, cache, np.ones_like(y))
    other = p.copy()
    y, cache = dc.forward(other, rng.standard_normal((5, 3)))
    with pytest.raises(RejectedInput):
        dc.backward(p, cache, np.ones_like(y))


@pytest.mark.parametrize("acts", [("tanh", "sigmoid", "identity"), ("relu", "tanh", "softmax"),
                                  ("sigmoid", "relu", "tanh")])
def test_grad_check_three_layer(acts):
    rng = np.random.default_rng(4)
    p = NetParams.init(NetSpec((5, 6, 4, 3), acts), rng)
    for b in p.biases:
        b[...] = rng.uniform(0.1, 0.3, b.shape)      # keeps relu units off their kink
    x = rng.standard_normal((7, 5))
    t = rng.standard_normal((7, 3))
    assert dc.grad_check(p.arrays(), _squared_loss(p, x, t), epsilon=1e-5) < 1e-4


def test_grad_check_linear_regression():
    rng = np.random.default_rng(5)
    p = NetParams.init(NetSpec((4, 1), ("identity",)), rng)
    x = rng.standard_normal((20, 4))
    t = x @ np.array([[1.0], [-2.0], [0.5], [3.0]])
    assert dc.grad_check(p.arrays(), _squared_loss(p, x, t)) < 1e-6


def test_grad_check_detects_wrong_gradient():
    rng = np.random.default_rng(6)
    p = NetParams.init(NetSpec((3, 2), ("identity",)), rng)
    x = rng.standard_normal((4, 3))

    def bad():
        y, cache = dc.forward(p, x)
        grads, _ = dc.backward(p, cache, y)
        return 0.5 * float(np.sum(y ** 2)), [2 * g for g in grads]
    assert dc.grad_check(p.arrays(), bad) > 0.1


# -- optimizers ------------------------------------------------------------------

def test_sgd_exact():
    p = [np.array([1.0])]
    dc.step(p, [np.array([2.0])], dc.sgd(0.1))
    assert p[0][0] == pytest.approx(0.8, abs=1e-15)
    q = [np.array([1.5, -2.0])]
    dc.step(q, [np.zeros(2)], dc.sgd(0.1))
    assert np.array_equal(q[0], np.array([1.5, -2.0]))


@pytest.mark.parametrize("g", [1.0, 1e-3, 250.0])
def test_adam_first_step_magnitude(g):
    # at t=1: m_hat = g, v_hat = g^2, update = lr * g / (|g| + eps)
    lr, eps = 1e-3, 1e-8
    p = [np.zeros(3)]
    dc.step(p, [np.full(3, g)], dc.adam(lr, eps=eps))
    assert np.allclose(p[0], -lr * g / (abs(g) + eps), rtol=1e-12, atol=0)
    assert np.allclose(np.abs(p[0]), lr, rtol=1e-4)


def test_adam_state_counts_and_shapes():
    opt = dc.adam()
    p = NetParams.zeros(NetSpec((2, 3), ("identity",)))
    for _ in range(3):
        dc.step(p, [np.ones_like(a) for a in p.arrays()], opt)
    assert opt.t == 3
    assert [m.shape for m in opt.m] == [a.shape for a in p.arrays()]
    assert p.version == 3


def test_step_rejects_nonfinite():
    with pytest.raises(TrainingDivergence):
        dc.step([np.zeros(2)], [np.array([np.nan, 0.0])], dc.sgd())
    with pytest.raises(TrainingDivergence):
        dc.step([np.zeros(2)], [np.array([np.inf, 0.0])], dc.adam())


@settings(max_examples=30, deadline=None)
@given(st.floats(1e-4, 0.1), st.integers(0, 1000), st.sampled_from(["sgd", "adam"]))
def test_optimizers_stay_finite(lr, seed, kind):
    rng = np.random.default_rng(seed)
    p = NetParams.init(NetSpec.mlp(4, [8], 2), rng)
    opt = dc.sgd(lr) if kind == "sgd" else dc.adam(lr)
    x, t = rng.standard_normal((16, 4)), rng.standard_normal((16, 2))
    for _ in range(20):
        y, cache = dc.forward(p, x)
        grads, _ = dc.backward(p, cache, (y - t) / len(x))
        dc.step(p, grads, opt)
    assert p.all_finite()


def test_clip_by_global_norm():
    g = [np.array([3.0]), np.array([4.0])]
    c = dc.clip_by_global_norm(g, 1.0)
    assert np.sqrt(sum(float(np.sum(x ** 2)) for x in c)) == pytest.approx(1.0)
    assert dc.clip_by_global_norm(g, 10.0)[0][0] == 3.0


# -- checkpoints -----------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(7)
    p = NetParams.init(NetSpec.mlp(5, [4], 3, out_act="softmax"), rng)
    path = tmp_path / "net.bin"
    dc.save_params(p, path)
    q = dc.load_params(path)
    assert q.spec == p.spec
    assert all(np.array_equal(a, b) for a, b in zip(p.arrays(), q.arrays()))
    data = path.read_bytes()
    assert data[:8] == dc.CHECKPOINT_MAGIC
    with pytest.raises(RejectedInput):
        dc.loads_params(b"X" + data[1:])


def test_freeze_blocks_writes():
    p = NetParams.zeros(NetSpec((2, 2), ("identity",))).freeze()
    with pytest.raises(ValueError):
        p.weights[0][0, 0] = 1.0
