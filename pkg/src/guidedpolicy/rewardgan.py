"""Offline adversarial reward learning.

An auxiliary generator maps Gaussian noise to a (latent state, action) pair,
the action coming out of a straight-through Gumbel-Softmax. A discriminator
over ``latent ⊕ action embedding`` is trained to separate expert pairs from
three kinds of simulated pairs (generator output, expert pairs with the
action swapped, and a history buffer of old generator output). Once training
stops the generator is dropped and the discriminator, together with the
frozen state encoder, becomes the per-turn reward

    r = r_handcrafted(turn status) + log D(enc(s), emb(a))
"""

from __future__ import annotations

import csv
import io
import json
import logging
import struct
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import rankdata

from . import diffcore as dc
from .dialenv.corpus import TransitionCorpus
from .dialenv.env import handcrafted_reward
from .diffcore import NetParams, NetSpec, RejectedInput, TrainingDivergence
from .statevae import StateVAE

log = logging.getLogger(__name__)

REWARD_MAGIC = b"GPRWD\x00\x01\x00"
REWARD_FORMAT_VERSION = 1
U_EPS = 1e-12


# -- Gumbel-Softmax --------------------------------------------------------------

def gumbel_noise(rng: np.random.Generator, k) -> np.ndarray:
    """Gumbel(0, 1) draws ``-log(-log u)`` with u kept inside (0, 1)."""
    u = np.clip(rng.random(k), U_EPS, 1.0 - U_EPS)
    return -np.log(-np.log(u))


def gumbel_softmax(logits: np.ndarray, tau: float, g: np.ndarray) -> np.ndarray:
    """softmax((log p + g) / tau) with p = softmax(logits)."""
    if tau <= 0:
        raise RejectedInput("temperature must be positive")
    logits = np.asarray(logits, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if logits.shape != g.shape:
        raise RejectedInput(f"logits {logits.shape} and noise {g.shape} differ in shape")
    return dc.softmax((dc.log_softmax(logits) + g) / tau)


def gumbel_softmax_backward(y: np.ndarray, tau: float, dy: np.ndarray) -> np.ndarray:
    """dL/dlogits given dL/dy for ``y = gumbel_softmax(logits, tau, g)``.

    The log-softmax inside contributes nothing: it shifts logits by a
    per-row constant, which the outer softmax ignores.
    """
    return y * (dy - np.sum(dy * y, axis=-1, keepdims=True)) / tau


def straight_through(y: np.ndarray) -> np.ndarray:
    """One-hot of the argmax (lowest index on ties).

    The backward pass is the identity: callers route dL/d(one-hot) to y
    unchanged.
    """
    y = np.asarray(y)
    out = np.zeros_like(y, dtype=np.float64)
    idx = np.argmax(y, axis=-1)
    np.put_along_axis(out, np.expand_dims(idx, -1), 1.0, axis=-1)
    return out


# -- generator / discriminator -------------------------------------------------

class Generator:
    """Noise -> shared trunk -> (state head -> latent, action head -> Gumbel-Softmax)."""

    def __init__(self, trunk: NetParams, action_head: NetParams, state_head: NetParams):
        self.trunk = trunk
        self.action_head = action_head
        self.state_head = state_head

    @classmethod
    def init(cls, noise_dim: int, hidden: int, n_actions: int, latent_dim: int,
             rng: np.random.Generator) -> "Generator":
        return cls(
            NetParams.init(NetSpec((noise_dim, hidden), ("relu",)), rng),
            NetParams.init(NetSpec.mlp(hidden, [hidden], n_actions), rng),
            NetParams.init(NetSpec.mlp(hidden, [hidden], latent_dim), rng),
        )

    @property
    def noise_dim(self) -> int:
        return self.trunk.spec.n_in

    @property
    def n_actions(self) -> int:
        return self.action_head.spec.n_out

    def nets(self) -> list[NetParams]:
        return [self.trunk, self.action_head, self.state_head]

    def arrays(self) -> list[np.ndarray]:
        return [a for n in self.nets() for a in n.arrays()]

    def forward(self, z: np.ndarray, g: np.ndarray, tau: float, hard: bool = True):
        h, c_trunk = dc.forward(self.trunk, z)
        logits, c_act = dc.forward(self.action_head, h)
        state, c_state = dc.forward(self.state_head, h)
        y = gumbel_softmax(logits, tau, g)
        action = straight_through(y) if hard else y
        return state, action, (c_trunk, c_act, c_state, y, tau)

    def backward(self, cache, d_state: np.ndarray, d_action: np.ndarray) -> list[np.ndarray]:
        c_trunk, c_act, c_state, y, tau = cache
        # straight-through: the gradient w.r.t. the hard one-hot goes to y as is
        d_logits = gumbel_softmax_backward(y, tau, d_action)
        g_act, dh1 = dc.backward(self.action_head, c_act, d_logits)
        g_state, dh2 = dc.backward(self.state_head, c_state, d_state)
        g_trunk, _ = dc.backward(self.trunk, c_trunk, dh1 + dh2)
        return g_trunk + g_act + g_state


def generate_pair(gen: Generator, z_sa: np.ndarray, tau: float, rng: np.random.Generator | None = None,
                  g: np.ndarray | None = None, hard: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """One batch of simulated (latent state, action vector) pairs."""
    z = np.atleast_2d(np.asarray(z_sa, dtype=np.float64))
    if g is None:
        g = gumbel_noise(rng, (z.shape[0], gen.n_actions))
    state, action, _ = gen.forward(z, np.atleast_2d(g), tau, hard)
    return state, action


def init_discriminator(input_dim: int, hidden: int, rng: np.random.Generator) -> NetParams:
    """Three-layer net; the output is a logit and D = sigmoid(logit)."""
    return NetParams.init(NetSpec.mlp(input_dim, [hidden, hidden], 1), rng)


def discriminate(disc: NetParams, x: np.ndarray) -> np.ndarray:
    return dc.sigmoid(dc.predict(disc, x)[:, 0])


def log_discriminate(disc: NetParams, x: np.ndarray) -> np.ndarray:
    return dc.log_sigmoid(dc.predict(disc, x)[:, 0])


def discriminator_loss_and_grads(disc: NetParams, real: np.ndarray, sim: np.ndarray):
    """Binary cross-entropy over an equal mixture of real and simulated inputs:

        -E_real[log D] - E_sim[log(1 - D)]
    """
    x = np.concatenate([real, sim])
    labels = np.concatenate([np.ones(len(real)), np.zeros(len(sim))])
    weights = np.concatenate([np.full(len(real), 1.0 / len(real)), np.full(len(sim), 1.0 / len(sim))])
    logit, cache = dc.forward(disc, x)
    logit = logit[:, 0]
    loss = -np.sum(weights * (labels * dc.log_sigmoid(logit) + (1 - labels) * dc.log_sigmoid(-logit)))
    d_logit = (weights * (dc.sigmoid(logit) - labels))[:, None]
    grads, _ = dc.backward(disc, cache, d_logit)
    return float(loss), grads


def generator_loss_and_grads(gen: Generator, disc: NetParams, embed: np.ndarray, z: np.ndarray,
                             g: np.ndarray, tau: float, hard: bool = True):
    """Generator loss -E[R] with R = -log(1 - D), i.e. E[log(1 - D(sim))].

    ``embed`` maps the catalog one-hot to the discriminator's action input.
    Only generator gradients are returned; the discriminator is held fixed.
    """
    state, action, cache = gen.forward(z, g, tau, hard)
    x = np.concatenate([state, action @ embed], axis=1)
    logit, d_cache = dc.forward(disc, x)
    logit = logit[:, 0]
    n = len(z)
    loss = float(np.mean(dc.log_sigmoid(-logit)))
    d_logit = (-dc.sigmoid(logit) / n)[:, None]
    _, d_x = dc.backward(disc, d_cache, d_logit)
    latent = state.shape[1]
    d_state = d_x[:, :latent]
    d_action = d_x[:, latent:] @ embed.T
    return loss, gen.backward(cache, d_state, d_action)


class HistoryBuffer:
    """Fixed-capacity store of simulated pairs; once full, a new pair
    replaces a uniformly chosen old one."""

    def __init__(self, capacity: int, width: int):
        self.capacity = capacity
        self.data = np.zeros((capacity, width))
        self.size = 0

    def add(self, pairs: np.ndarray, rng: np.random.Generator) -> None:
        for row in pairs:
            if self.size < self.capacity:
                self.data[self.size] = row
                self.size += 1
            else:
                self.data[int(rng.integers(self.capacity))] = row

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.data[rng.integers(self.size, size=n)]

    def __len__(self) -> int:
        return self.size


def mismatch_actions(actions: np.ndarray, n_actions: int, rng: np.random.Generator) -> np.ndarray:
    """A uniformly drawn catalog index different from each original action."""
    if n_actions < 2:
        raise RejectedInput("need at least two actions to build mismatched pairs")
    draw = rng.integers(n_actions - 1, size=len(actions))
    return draw + (draw >= actions)


def mismatch_negatives(corpus: TransitionCorpus, vae: StateVAE, rng: np.random.Generator, n: int,
                       n_actions: int | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sample ``n`` corpus pairs and swap each action for a different one.

    Returns ``(latents, replacement actions, original actions)``.
    """
    pairs = corpus.in_catalog()
    n_actions = n_actions or int(pairs.actions.max()) + 1
    if len(np.unique(pairs.actions)) < 2:
        raise RejectedInput("corpus has a single action; cannot build mismatched pairs")
    idx = rng.integers(len(pairs), size=n)
    orig = pairs.actions[idx]
    return vae.embed_state(pairs.states[idx]), mismatch_actions(orig, n_actions, rng), orig


def auc(pos: np.ndarray, neg: np.ndarray) -> float:
    """Area under the ROC curve via the rank-sum statistic."""
    ranks = rankdata(np.concatenate([pos, neg]))
    n_pos, n_neg = len(pos), len(neg)
    return float((ranks[:n_pos].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


# -- reward model ---------------------------------------------------------------

class RewardModel:
    """Frozen discriminator + state encoder + handcrafted reward.

    Usable directly as an environment reward source:
    ``model(state_bits, action_index, turn_status)``.
    """

    def __init__(self, disc: NetParams, encoder: StateVAE, embed: np.ndarray, T: int = 40,
                 clamp: float = 1e-6, mode: str = "onehot", encoder_kind: str = "vae",
                 meta: dict | None = None):
        self.disc = disc.copy().freeze()
        enc = StateVAE(encoder.trunk.copy().freeze(), encoder.mean_head.copy().freeze(),
                       None, encoder.decoder.copy().freeze(), encoder.beta)
        self.encoder = enc
        self.embed = np.array(embed, dtype=np.float64)
        self.embed.flags.writeable = False
        self.T = int(T)
        self.clamp = float(clamp)
        self.log_clamp = float(np.log(clamp))
        self.mode = mode
        self.encoder_kind = encoder_kind
        self.meta = dict(meta or {})

    @property
    def n_actions(self) -> int:
        return self.embed.shape[0]

    def inputs(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        actions = np.asarray(actions, dtype=np.int64)
        if np.any(actions < 0) or np.any(actions >= self.n_actions):
            raise RejectedInput("action index outside the reward model's catalog")
        return np.concatenate([self.encoder.embed_state(states), self.embed[actions]], axis=1)

    def prob(self, states, actions) -> np.ndarray:
        return discriminate(self.disc, self.inputs(np.atleast_2d(states), np.atleast_1d(actions)))

    def log_d(self, states, actions) -> np.ndarray:
        """Clamped log D per pair."""
        x = self.inputs(np.atleast_2d(states), np.atleast_1d(actions))
        return np.maximum(log_discriminate(self.disc, x), self.log_clamp)

    def score(self, state, action: int, turn_status: str, T: int | None = None) -> float:
        return handcrafted_reward(turn_status, T or self.T) + float(self.log_d(state, [action])[0])

    def __call__(self, state, action, turn_status) -> float:
        return self.score(state, action, turn_status)

    # -- persistence ------------------------------------------------------------
    #
    # magic (8 bytes) | u32 header length | JSON header | embedding matrix as a
    # serialized identity-activation net (weights = matrix) | discriminator net |
    # encoder trunk net | encoder mean-head net

    def header(self) -> dict:
        return {"format": REWARD_FORMAT_VERSION, "T": self.T, "clamp": self.clamp, "mode": self.mode,
                "encoder_kind": self.encoder_kind, "n_actions": self.n_actions,
                "embed_width": int(self.embed.shape[1]), "latent_dim": self.encoder.latent_dim,
                "state_dim": self.encoder.state_dim, "meta": self.meta}

    def dumps(self) -> bytes:
        header = json.dumps(self.header(), sort_keys=True).encode()
        holder = NetParams(NetSpec(self.embed.shape, ("identity",)), [self.embed.copy()],
                           [np.zeros(self.embed.shape[1])])
        buf = io.BytesIO()
        buf.write(REWARD_MAGIC)
        buf.write(struct.pack("<I", len(header)))
        buf.write(header)
        for net in (holder, self.disc, self.encoder.trunk, self.encoder.mean_head):
            buf.write(dc.dumps_params(net))
        return buf.getvalue()

    @classmethod
    def loads(cls, data: bytes) -> "RewardModel":
        if data[:8] != REWARD_MAGIC:
            raise RejectedInput("not a reward-model checkpoint")
        (hlen,) = struct.unpack_from("<I", data, 8)
        header = json.loads(data[12:12 + hlen])
        if header.get("format") != REWARD_FORMAT_VERSION:
            raise RejectedInput(f"reward checkpoint format {header.get('format')} unsupported")
        pos = 12 + hlen
        nets = []
        for _ in range(4):
            net, pos = dc.loads_params(data, pos)
            nets.append(net)
        holder, disc, trunk, mean_head = nets
        dummy_dec = NetParams.zeros(NetSpec((mean_head.spec.n_out, 1), ("identity",)))
        enc = StateVAE(trunk, mean_head, None, dummy_dec)
        return cls(disc, enc, holder.weights[0], header["T"], header["clamp"], header["mode"],
                   header["encoder_kind"], header.get("meta"))

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path) -> "RewardModel":
        with open(path, "rb") as fh:
            return cls.loads(fh.read())


def score(model: RewardModel, s, a: int, turn_status: str, T: int | None = None) -> float:
    return model.score(s, a, turn_status, T)


# -- training -----------------------------------------------------------------------

@dataclass
class RewardConfig:
    noise_dim: int = 64
    gen_hidden: int = 128
    disc_hidden: int = 64
    tau: float = 0.8
    batch_size: int = 64
    lr: float = 1e-3
    max_iters: int = 3000
    eval_every: int = 100
    patience: int = 5
    mix: tuple[float, float, float] = (0.7, 0.15, 0.15)   # generator, mismatch, history
    history_size: int = 10_000
    holdout_frac: float = 0.1
    hard_actions: bool = True
    T: int = 40
    clamp: float = 1e-6
    mode: str = "onehot"

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RewardTrainResult:
    model: RewardModel
    curve: list[dict] = field(default_factory=list)
    heldout_auc: float = 0.0

    def curve_csv(self) -> str:
        out = io.StringIO()
        if self.curve:
            w = csv.DictWriter(out, fieldnames=list(self.curve[0]))
            w.writeheader()
            w.writerows(self.curve)
        return out.getvalue()


def _split(n: int, frac: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    order = rng.permutation(n)
    n_hold = max(1, int(round(n * frac))) if n > 1 else 0
    return order[n_hold:], order[:n_hold]


def train_reward(corpus: TransitionCorpus, vae: StateVAE, config: RewardConfig | None,
                 rng: np.random.Generator, embed: np.ndarray | None = None,
                 n_actions: int | None = None) -> RewardTrainResult:
    """Adversarial training of the discriminator against the three negative
    sources, one discriminator step per generator step, with early stopping
    on held-out AUC. Returns the frozen reward model built from the best
    discriminator seen.
    """
    c = config or RewardConfig()
    pairs = corpus.in_catalog()
    if len(pairs) < 2:
        raise RejectedInput("reward training needs at least two in-catalog pairs")
    if n_actions is None:
        n_actions = int(pairs.actions.max()) + 1 if embed is None else embed.shape[0]
    if embed is None:
        embed = np.eye(n_actions)
    latents = vae.embed_state(pairs.states)
    actions = pairs.actions
    train_idx, hold_idx = _split(len(pairs), c.holdout_frac, rng)

    latent_dim = vae.latent_dim
    width = latent_dim + embed.shape[1]
    gen = Generator.init(c.noise_dim, c.gen_hidden, n_actions, latent_dim, rng)
    disc = init_discriminator(width, c.disc_hidden, rng)
    d_opt, g_opt = dc.adam(c.lr), dc.adam(c.lr)
    history = HistoryBuffer(c.history_size, width)

    def real_batch(idx):
        return np.concatenate([latents[idx], embed[actions[idx]]], axis=1)

    def gen_batch(n):
        z = rng.standard_normal((n, c.noise_dim))
        s, a = generate_pair(gen, z, c.tau, g=gumbel_noise(rng, (n, n_actions)), hard=c.hard_actions)
        return np.concatenate([s, a @ embed], axis=1)

    def mismatch_batch(idx):
        return np.concatenate([latents[idx], embed[mismatch_actions(actions[idx], n_actions, rng)]],
                              axis=1)

    # fixed held-out negatives for a stable stopping signal
    eval_rng = np.random.default_rng(rng.integers(2**63))
    hold_real = real_batch(hold_idx)
    hold_mis = np.concatenate([latents[hold_idx],
                               embed[mismatch_actions(actions[hold_idx], n_actions, eval_rng)]], axis=1)

    n_gen = int(round(c.mix[0] * c.batch_size))
    n_mis = int(round(c.mix[1] * c.batch_size))
    n_hist = c.batch_size - n_gen - n_mis

    best_auc, best_disc, stale = -np.inf, disc.copy(), 0
    curve = []
    for it in range(1, c.max_iters + 1):
        real = real_batch(train_idx[rng.integers(len(train_idx), size=c.batch_size)])
        fresh = gen_batch(n_gen + (n_hist if len(history) == 0 else 0))
        parts = [fresh, mismatch_batch(train_idx[rng.integers(len(train_idx), size=n_mis)])]
        if len(history) > 0:
            parts.append(history.sample(n_hist, rng))
        sim = np.concatenate(parts)
        d_loss, d_grads = discriminator_loss_and_grads(disc, real, sim)
        if not np.isfinite(d_loss):
            raise TrainingDivergence(f"discriminator loss non-finite at iteration {it}")
        dc.step(disc, d_grads, d_opt)
        history.add(fresh, rng)

        z = rng.standard_normal((c.batch_size, c.noise_dim))
        g = gumbel_noise(rng, (c.batch_size, n_actions))
        g_loss, g_grads = generator_loss_and_grads(gen, disc, embed, z, g, c.tau, c.hard_actions)
        dc.step(gen.arrays(), g_grads, g_opt)
        for net in gen.nets():
            net.version += 1

        if it % c.eval_every == 0 or it == c.max_iters:
            p_real = discriminate(disc, hold_real)
            p_neg = np.concatenate([discriminate(disc, hold_mis), discriminate(disc, gen_batch(len(hold_idx)))])
            score_auc = auc(p_real, p_neg)
            curve.append({"iter": it, "d_loss": d_loss, "g_loss": g_loss, "auc": score_auc,
                          "d_real": float(p_real.mean()), "d_sim": float(p_neg.mean())})
            if score_auc > best_auc + 1e-3:
                best_auc, best_disc, stale = score_auc, disc.copy(), 0
            else:
                stale += 1
                if stale >= c.patience:
                    log.info("reward training stopped at iteration %d (AUC plateau)", it)
                    break

    kind = "vae" if vae.variational else "ae"
    model = RewardModel(best_disc, vae, embed, c.T, c.clamp, c.mode, kind,
                        meta={"n_actions": n_actions})
    return RewardTrainResult(model, curve, float(best_auc))
