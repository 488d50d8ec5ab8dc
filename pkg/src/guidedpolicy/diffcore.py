"""Small differentiable layer: MLPs with explicit forward/backward, SGD/Adam and
a central-difference gradient checker.

Conventions:
    - float64 everywhere
    - batch-major: a batch is a (n_samples, n_features) matrix
    - layer ``i`` computes ``act_i(x @ W_i + b_i)`` with ``W_i`` of shape (fan_in, fan_out)
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

ACTIVATIONS = ("relu", "tanh", "sigmoid", "identity", "softmax")
CHECKPOINT_MAGIC = b"GPNET\x00\x01\x00"


class RejectedInput(ValueError):
    """Input with the wrong shape, or a cache that does not belong to the params."""


class TrainingDivergence(RuntimeError):
    """Non-finite gradients or losses during training."""


@dataclass(frozen=True)
class NetSpec:
    layer_sizes: tuple[int, ...]
    activations: tuple[str, ...]

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        acts = tuple(self.activations)
        object.__setattr__(self, "layer_sizes", sizes)
        object.__setattr__(self, "activations", acts)
        if len(sizes) < 2:
            raise RejectedInput("a NetSpec needs an input size and at least one layer")
        if any(s <= 0 for s in sizes):
            raise RejectedInput(f"layer sizes must be positive, got {sizes}")
        if len(acts) != len(sizes) - 1:
            raise RejectedInput(f"{len(sizes) - 1} layers but {len(acts)} activations")
        for i, a in enumerate(acts):
            if a not in ACTIVATIONS:
                raise RejectedInput(f"unknown activation {a!r}")
            if a == "softmax" and i != len(acts) - 1:
                raise RejectedInput("softmax is only allowed as the final activation")

    @property
    def n_in(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_out(self) -> int:
        return self.layer_sizes[-1]

    @classmethod
    def mlp(cls, n_in: int, hidden: Sequence[int], n_out: int, hidden_act: str = "relu",
            out_act: str = "identity") -> "NetSpec":
        sizes = (n_in, *hidden, n_out)
        return cls(sizes, (hidden_act,) * len(hidden) + (out_act,))


class NetParams:
    """Weights and biases for a :class:`NetSpec`.

    ``version`` is bumped on every in-place update so that a forward cache
    taken before an optimizer step is rejected by :func:`backward`.
    """

    def __init__(self, spec: NetSpec, weights: list[np.ndarray], biases: list[np.ndarray]):
        self.spec = spec
        self.weights = [np.asarray(w, dtype=np.float64) for w in weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in biases]
        self.version = 0
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            expect = (spec.layer_sizes[i], spec.layer_sizes[i + 1])
            if w.shape != expect or b.shape != (expect[1],):
                raise RejectedInput(f"layer {i}: got W{w.shape} b{b.shape}, expected W{expect}")

    @classmethod
    def init(cls, spec: NetSpec, rng: np.random.Generator) -> "NetParams":
        weights, biases = [], []
        for fan_in, fan_out in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:]):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(np.zeros(fan_out))
        return cls(spec, weights, biases)

    @classmethod
    def zeros(cls, spec: NetSpec) -> "NetParams":
        return cls(
            spec,
            [np.zeros((a, b)) for a, b in zip(spec.layer_sizes[:-1], spec.layer_sizes[1:])],
            [np.zeros(b) for b in spec.layer_sizes[1:]],
        )

    def arrays(self) -> list[np.ndarray]:
        """Parameter arrays in canonical order ``[W0, b0, W1, b1, ...]``."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "NetParams":
        return NetParams(self.spec, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def load_from(self, other: "NetParams") -> None:
        """Copy ``other``'s values into this object's arrays."""
        if other.spec != self.spec:
            raise RejectedInput("spec mismatch")
        for dst, src in zip(self.arrays(), other.arrays()):
            dst[...] = src
        self.version += 1

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    @property
    def n_params(self) -> int:
        return sum(a.size for a in self.arrays())

    def all_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays())

    def freeze(self) -> "NetParams":
        for a in self.arrays():
            a.flags.writeable = False
        return self


@dataclass
class ForwardCache:
    params_id: int
    version: int
    inputs: list[np.ndarray]    # input to each layer
    outputs: list[np.ndarray]   # post-activation output of each layer


def _activate(z: np.ndarray, act: str) -> np.ndarray:
    if act == "relu":
        return np.maximum(z, 0.0)
    if act == "tanh":
        return np.tanh(z)
    if act == "sigmoid":
        return sigmoid(z)
    if act == "softmax":
        return softmax(z)
    return z


def _activation_grad(y: np.ndarray, g: np.ndarray, act: str) -> np.ndarray:
    # y is the post-activation output; returns dL/dz from dL/dy
    if act == "relu":
        return g * (y > 0)
    if act == "tanh":
        return g * (1.0 - y * y)
    if act == "sigmoid":
        return g * y * (1.0 - y)
    if act == "softmax":
        return y * (g - np.sum(g * y, axis=1, keepdims=True))
    return g


def sigmoid(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def log_sigmoid(z: np.ndarray) -> np.ndarray:
    """``log(sigmoid(z))`` without overflow."""
    z = np.asarray(z, dtype=np.float64)
    return np.minimum(z, 0.0) - np.log1p(np.exp(-np.abs(z)))


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def forward(params: NetParams, batch: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.spec.n_in:
        raise RejectedInput(f"expected a (n, {params.spec.n_in}) batch, got shape {x.shape}")
    inputs, outputs = [], []
    for w, b, act in zip(params.weights, params.biases, params.spec.activations):
        inputs.append(x)
        x = _activate(x @ w + b, act)
        outputs.append(x)
    return x, ForwardCache(id(params), params.version, inputs, outputs)


def predict(params: NetParams, batch: np.ndarray) -> np.ndarray:
    """Forward pass without keeping a cache."""
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.spec.n_in:
        raise RejectedInput(f"expected a (n, {params.spec.n_in}) batch, got shape {x.shape}")
    for w, b, act in zip(params.weights, params.biases, params.spec.activations):
        x = _activate(x @ w + b, act)
    return x


def backward(params: NetParams, cache: ForwardCache,
             output_grad: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    """Back-propagate ``output_grad`` (dL/d output).

    Returns gradients in :meth:`NetParams.arrays` order and dL/d input.
    """
    if cache.params_id != id(params) or cache.version != params.version:
        raise RejectedInput("forward cache does not match the current parameters")
    g = np.asarray(output_grad, dtype=np.float64)
    if g.shape != cache.outputs[-1].shape:
        raise RejectedInput(f"output_grad shape {g.shape} != output shape {cache.outputs[-1].shape}")
    grads: list[np.ndarray] = []
    for i in reversed(range(len(params.weights))):
        dz = _activation_grad(cache.outputs[i], g, params.spec.activations[i])
        grads.append(dz.sum(axis=0))
        grads.append(cache.inputs[i].T @ dz)
        g = dz @ params.weights[i].T
    grads.reverse()
    return grads, g


@dataclass
class OptState:
    kind: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise RejectedInput(f"unknown optimizer {self.kind!r}")


def adam(lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> OptState:
    return OptState("adam", lr, beta1, beta2, eps)


def sgd(lr: float = 0.01) -> OptState:
    return OptState("sgd", lr)


def step(params: NetParams | Sequence[np.ndarray], grads: Sequence[np.ndarray],
         opt: OptState):
    """Apply one optimizer update in place and return ``params``.

    ``params`` is either a :class:`NetParams` or a flat list of arrays, so a
    model made of several nets can share one optimizer.
    """
    arrays = params.arrays() if isinstance(params, NetParams) else list(params)
    if len(arrays) != len(grads):
        raise RejectedInput(f"{len(arrays)} parameter arrays but {len(grads)} gradients")
    for p, g in zip(arrays, grads):
        if p.shape != g.shape:
            raise RejectedInput(f"gradient shape {g.shape} != parameter shape {p.shape}")
        if not np.isfinite(g).all():
            raise TrainingDivergence("non-finite gradient")
    if opt.kind == "sgd":
        for p, g in zip(arrays, grads):
            p -= opt.lr * g
    else:
        if not opt.m:
            opt.m = [np.zeros_like(p) for p in arrays]
            opt.v = [np.zeros_like(p) for p in arrays]
        elif len(opt.m) != len(arrays) or any(m.shape != p.shape for m, p in zip(opt.m, arrays)):
            raise RejectedInput("optimizer state does not match the parameters")
        opt.t += 1
        c1 = 1.0 - opt.beta1 ** opt.t
        c2 = 1.0 - opt.beta2 ** opt.t
        for p, g, m, v in zip(arrays, grads, opt.m, opt.v):
            m *= opt.beta1
            m += (1.0 - opt.beta1) * g
            v *= opt.beta2
            v += (1.0 - opt.beta2) * g * g
            p -= opt.lr * (m / c1) / (np.sqrt(v / c2) + opt.eps)
    if isinstance(params, NetParams):
        params.version += 1
    return params


def clip_by_global_norm(grads: Sequence[np.ndarray], max_norm: float) -> list[np.ndarray]:
    norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if norm > max_norm:
        return [g * (max_norm / norm) for g in grads]
    return list(grads)


def grad_check(params: Sequence[np.ndarray],
               loss_fn: Callable[[], tuple[float, Sequence[np.ndarray]]],
               epsilon: float = 1e-5, atol: float = 1e-6) -> float:
    """Largest relative error between analytic and central-difference gradients.

    ``loss_fn`` reads the arrays in ``params`` (which are perturbed in place)
    and returns ``(loss, grads)`` with grads aligned to ``params``. Any
    noise it uses must be sampled beforehand and held fixed.

    The per-entry error is ``|a - n| / max(|a| + |n|, atol)``.
    """
    _, analytic = loss_fn()
    analytic = [np.array(g, dtype=np.float64, copy=True) for g in analytic]
    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.reshape(-1)
        a_flat = a.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            lp = loss_fn()[0]
            flat[i] = orig - epsilon
            lm = loss_fn()[0]
            flat[i] = orig
            num = (lp - lm) / (2.0 * epsilon)
            err = abs(a_flat[i] - num) / max(abs(a_flat[i]) + abs(num), atol)
            worst = max(worst, err)
    return worst


# -- checkpoints --------------------------------------------------------------
#
# Layout (all little-endian):
#   8 bytes   magic  b"GPNET\x00\x01\x00"
#   u32       length of the JSON spec header
#   bytes     UTF-8 JSON {"layer_sizes": [...], "activations": [...]}
#   u64       number of float64 values that follow
#   f64[...]  parameters, flattened in NetParams.arrays() order (row-major)


def dumps_params(params: NetParams) -> bytes:
    header = json.dumps({
        "layer_sizes": list(params.spec.layer_sizes),
        "activations": list(params.spec.activations),
    }).encode()
    flat = params.flat().astype("<f8")
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<I", len(header)))
    buf.write(header)
    buf.write(struct.pack("<Q", flat.size))
    buf.write(flat.tobytes())
    return buf.getvalue()


def loads_params(data: bytes, offset: int = 0) -> tuple[NetParams, int]:
    """Parse one serialized net starting at ``offset``; returns (params, end offset)."""
    if data[offset:offset + 8] != CHECKPOINT_MAGIC:
        raise RejectedInput("not a network checkpoint (bad magic)")
    pos = offset + 8
    (hlen,) = struct.unpack_from("<I", data, pos)
    pos += 4
    header = json.loads(data[pos:pos + hlen].decode())
    pos += hlen
    (count,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    flat = np.frombuffer(data, dtype="<f8", count=count, offset=pos).astype(np.float64)
    pos += 8 * count
    spec = NetSpec(tuple(header["layer_sizes"]), tuple(header["activations"]))
    params = NetParams.zeros(spec)
    if flat.size != params.n_params:
        raise RejectedInput("checkpoint parameter count does not match its spec")
    i = 0
    for a in params.arrays():
        a[...] = flat[i:i + a.size].reshape(a.shape)
        i += a.size
    return params, pos


def save_params(params: NetParams, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps_params(params))


def load_params(path) -> NetParams:
    with open(path, "rb") as fh:
        return loads_params(fh.read())[0]
