"""State VAE (and the plain autoencoder used for the GAN-AE ablation).

The encoder is a shared trunk with a mean head and a log-variance head; the
decoder maps a latent back to Bernoulli logits over the state bits. After
training only the encoder mean is used, as a continuous state embedding.
"""

from __future__ import annotations

import csv
import io
import json
import struct
from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .diffcore import NetParams, NetSpec, RejectedInput, TrainingDivergence

VAE_MAGIC = b"GPVAE\x00\x01\x00"


@dataclass
class VaeConfig:
    latent_dim: int = 64
    hidden: int = 128
    beta: float = 1.0
    lr: float = 1e-3
    batch_size: int = 128
    epochs: int = 20
    variational: bool = True      # False gives a deterministic autoencoder


class StateVAE:
    def __init__(self, trunk: NetParams, mean_head: NetParams, logvar_head: NetParams | None,
                 decoder: NetParams, beta: float = 1.0):
        self.trunk = trunk
        self.mean_head = mean_head
        self.logvar_head = logvar_head
        self.decoder = decoder
        self.beta = beta

    @classmethod
    def init(cls, state_dim: int, rng: np.random.Generator, config: VaeConfig | None = None) -> "StateVAE":
        c = config or VaeConfig()
        trunk = NetParams.init(NetSpec((state_dim, c.hidden), ("relu",)), rng)
        mean_head = NetParams.init(NetSpec((c.hidden, c.latent_dim), ("identity",)), rng)
        logvar_head = None
        if c.variational:
            logvar_head = NetParams.init(NetSpec((c.hidden, c.latent_dim), ("identity",)), rng)
        decoder = NetParams.init(NetSpec.mlp(c.latent_dim, [c.hidden], state_dim), rng)
        return cls(trunk, mean_head, logvar_head, decoder, c.beta)

    @property
    def variational(self) -> bool:
        return self.logvar_head is not None

    @property
    def state_dim(self) -> int:
        return self.trunk.spec.n_in

    @property
    def latent_dim(self) -> int:
        return self.mean_head.spec.n_out

    def nets(self) -> list[NetParams]:
        return [n for n in (self.trunk, self.mean_head, self.logvar_head, self.decoder) if n is not None]

    def arrays(self) -> list[np.ndarray]:
        return [a for n in self.nets() for a in n.arrays()]

    def encoder_nets(self) -> list[NetParams]:
        return [self.trunk, self.mean_head]

    # -- inference ------------------------------------------------------------

    def encode(self, states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Mean and log-variance; the autoencoder reports log-variance 0."""
        s = _as_batch(states, self.state_dim)
        h = dc.predict(self.trunk, s)
        mean = dc.predict(self.mean_head, h)
        if self.logvar_head is None:
            return mean, np.zeros_like(mean)
        return mean, dc.predict(self.logvar_head, h)

    def embed_state(self, states: np.ndarray) -> np.ndarray:
        return self.encode(states)[0]

    def reconstruct(self, states: np.ndarray) -> np.ndarray:
        """Decoded bit probabilities from the encoder mean."""
        return dc.sigmoid(dc.predict(self.decoder, self.embed_state(states)))

    def bit_accuracy(self, states: np.ndarray) -> float:
        s = _as_batch(states, self.state_dim)
        return float(np.mean((self.reconstruct(s) > 0.5) == (s > 0.5)))

    # -- training -------------------------------------------------------------

    def loss_and_grads(self, states: np.ndarray, noise: np.ndarray | None = None):
        """Negative ELBO on a batch with fixed reparameterization noise.

        Returns ``(total, recon, kl, grads)``; grads follow :meth:`arrays`.
        ``recon`` is the per-sample summed Bernoulli NLL averaged over the
        batch and ``kl`` the per-sample KL to N(0, I) averaged likewise.
        """
        s = _as_batch(states, self.state_dim)
        n = s.shape[0]
        h, c_trunk = dc.forward(self.trunk, s)
        mean, c_mean = dc.forward(self.mean_head, h)
        if self.variational:
            logvar, c_lv = dc.forward(self.logvar_head, h)
            if noise is None:
                raise RejectedInput("variational loss needs reparameterization noise")
            std = np.exp(0.5 * logvar)
            z = mean + std * noise
        else:
            z = mean
        logits, c_dec = dc.forward(self.decoder, z)
        recon = -np.sum(s * dc.log_sigmoid(logits) + (1 - s) * dc.log_sigmoid(-logits)) / n
        d_logits = (dc.sigmoid(logits) - s) / n
        g_dec, d_z = dc.backward(self.decoder, c_dec, d_logits)
        if self.variational:
            kl = 0.5 * np.sum(mean ** 2 + np.exp(logvar) - 1.0 - logvar) / n
            d_mean = d_z + self.beta * mean / n
            d_logvar = d_z * noise * 0.5 * std + self.beta * 0.5 * (np.exp(logvar) - 1.0) / n
            g_lv, d_h2 = dc.backward(self.logvar_head, c_lv, d_logvar)
        else:
            kl = 0.0
            d_mean = d_z
        g_mean, d_h = dc.backward(self.mean_head, c_mean, d_mean)
        if self.variational:
            d_h = d_h + d_h2
        g_trunk, _ = dc.backward(self.trunk, c_trunk, d_h)
        grads = g_trunk + g_mean + (g_lv if self.variational else []) + g_dec
        total = recon + self.beta * kl
        return float(total), float(recon), float(kl), grads

    def copy(self) -> "StateVAE":
        return StateVAE(self.trunk.copy(), self.mean_head.copy(),
                        self.logvar_head.copy() if self.logvar_head is not None else None,
                        self.decoder.copy(), self.beta)

    # -- persistence ----------------------------------------------------------

    def dumps(self) -> bytes:
        header = json.dumps({"variational": self.variational, "beta": self.beta}).encode()
        buf = io.BytesIO()
        buf.write(VAE_MAGIC)
        buf.write(struct.pack("<I", len(header)))
        buf.write(header)
        for net in self.nets():
            buf.write(dc.dumps_params(net))
        return buf.getvalue()

    @classmethod
    def loads(cls, data: bytes, offset: int = 0) -> tuple["StateVAE", int]:
        if data[offset:offset + 8] != VAE_MAGIC:
            raise RejectedInput("not a VAE checkpoint")
        pos = offset + 8
        (hlen,) = struct.unpack_from("<I", data, pos)
        header = json.loads(data[pos + 4:pos + 4 + hlen])
        pos += 4 + hlen
        nets = []
        for _ in range(4 if header["variational"] else 3):
            net, pos = dc.loads_params(data, pos)
            nets.append(net)
        if header["variational"]:
            trunk, mean_head, logvar_head, decoder = nets
        else:
            (trunk, mean_head, decoder), logvar_head = nets, None
        return cls(trunk, mean_head, logvar_head, decoder, header["beta"]), pos

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path) -> "StateVAE":
        with open(path, "rb") as fh:
            return cls.loads(fh.read())[0]


def _as_batch(states, dim: int) -> np.ndarray:
    s = np.asarray(states, dtype=np.float64)
    if s.ndim == 1:
        s = s[None, :]
    if s.ndim != 2 or s.shape[1] != dim:
        raise RejectedInput(f"expected states of width {dim}, got shape {s.shape}")
    return s


def encode(vae: StateVAE, s) -> tuple[np.ndarray, np.ndarray]:
    return vae.encode(s)


def embed_state(vae: StateVAE, s) -> np.ndarray:
    return vae.embed_state(s)


def reparam_sample(mean: np.ndarray, log_variance: np.ndarray, rng: np.random.Generator | None = None,
                   noise: np.ndarray | None = None) -> np.ndarray:
    mean = np.asarray(mean, dtype=np.float64)
    log_variance = np.asarray(log_variance, dtype=np.float64)
    if mean.shape != log_variance.shape:
        raise RejectedInput("mean and log-variance shapes differ")
    if noise is None:
        noise = rng.standard_normal(mean.shape)
    return mean + np.exp(0.5 * log_variance) * noise


def gaussian_kl(mean: np.ndarray, log_variance: np.ndarray) -> float:
    """KL(N(mean, exp(log_variance)) || N(0, I)), summed over every entry."""
    return float(0.5 * np.sum(mean ** 2 + np.exp(log_variance) - 1.0 - log_variance))


def vae_loss(vae: StateVAE, batch, rng: np.random.Generator | None = None,
             noise: np.ndarray | None = None) -> tuple[float, float, float]:
    """(total, reconstruction, kl) for a batch of states."""
    s = _as_batch(batch, vae.state_dim)
    if vae.variational and noise is None:
        noise = rng.standard_normal((s.shape[0], vae.latent_dim))
    total, recon, kl, _ = vae.loss_and_grads(s, noise)
    return total, recon, kl


@dataclass
class VaeTrainResult:
    vae: StateVAE
    curve: list[tuple[int, float, float, float]]   # (epoch, total, recon, kl)
    min_batch_kl: float = float("inf")              # smallest KL term seen on any batch

    def curve_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out)
        w.writerow(["epoch", "total", "recon", "kl"])
        w.writerows(self.curve)
        return out.getvalue()


def train_vae(states: np.ndarray, config: VaeConfig | None, rng: np.random.Generator) -> VaeTrainResult:
    config = config or VaeConfig()
    s = np.asarray(states, dtype=np.float64)
    if s.ndim != 2 or len(s) < 1:
        raise RejectedInput("need at least one state")
    vae = StateVAE.init(s.shape[1], rng, config)
    opt = dc.adam(config.lr)
    params = vae.arrays()
    curve = []
    min_kl = float("inf")
    for epoch in range(config.epochs):
        order = rng.permutation(len(s))
        tot = rec = kl_sum = 0.0
        for start in range(0, len(s), config.batch_size):
            batch = s[order[start:start + config.batch_size]]
            noise = rng.standard_normal((len(batch), vae.latent_dim)) if vae.variational else None
            total, recon, kl, grads = vae.loss_and_grads(batch, noise)
            if not np.isfinite(total):
                raise TrainingDivergence(f"non-finite VAE loss at epoch {epoch}")
            min_kl = min(min_kl, kl)
            dc.step(params, grads, opt)
            for net in vae.nets():
                net.version += 1
            w = len(batch)
            tot += total * w
            rec += recon * w
            kl_sum += kl * w
        curve.append((epoch, tot / len(s), rec / len(s), kl_sum / len(s)))
    return VaeTrainResult(vae, curve, min_kl)
