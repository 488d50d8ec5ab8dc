"""PPO with GAE, plus the supervised imitation warm-up."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import diffcore as dc
from ..diffcore import NetParams, NetSpec

PROB_FLOOR = 1e-12


class PolicyValue:
    """Softmax policy net and scalar value net, each with its own Adam state."""

    def __init__(self, policy: NetParams, value: NetParams, lr: float = 3e-4,
                 value_lr: float = 1e-3):
        self.policy = policy
        self.value = value
        self.policy_opt = dc.adam(lr)
        self.value_opt = dc.adam(value_lr)

    @classmethod
    def init(cls, state_dim: int, n_actions: int, rng: np.random.Generator, hidden=(128,),
             lr: float = 3e-4, value_lr: float = 1e-3) -> "PolicyValue":
        policy = NetParams.init(NetSpec.mlp(state_dim, list(hidden), n_actions, out_act="softmax"), rng)
        value = NetParams.init(NetSpec.mlp(state_dim, list(hidden), 1), rng)
        return cls(policy, value, lr, value_lr)

    @property
    def n_actions(self) -> int:
        return self.policy.spec.n_out

    def probs(self, states) -> np.ndarray:
        return dc.predict(self.policy, np.atleast_2d(np.asarray(states, dtype=np.float64)))

    def values(self, states) -> np.ndarray:
        return dc.predict(self.value, np.atleast_2d(np.asarray(states, dtype=np.float64)))[:, 0]

    def sample(self, s, rng: np.random.Generator) -> tuple[int, float]:
        p = self.probs(s)[0]
        a = int(rng.choice(len(p), p=p / p.sum()))
        return a, float(np.log(max(p[a], PROB_FLOOR)))

    def greedy(self, s) -> int:
        return int(np.argmax(self.probs(s)[0]))


@dataclass
class Trajectory:
    states: np.ndarray      # (T, dim)
    actions: np.ndarray     # (T,)
    rewards: np.ndarray     # (T,)
    logps: np.ndarray       # (T,) behaviour log-probabilities
    done: bool = True       # False when cut off before the episode ended
    last_value: float = 0.0


def gae(rewards: np.ndarray, values: np.ndarray, gamma: float, lam: float,
        last_value: float = 0.0, done: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimates and the matching returns for one episode."""
    T = len(rewards)
    adv = np.zeros(T)
    nxt_v = 0.0 if done else last_value
    run = 0.0
    for t in reversed(range(T)):
        delta = rewards[t] + gamma * nxt_v - values[t]
        run = delta + gamma * lam * run
        adv[t] = run
        nxt_v = values[t]
    return adv, adv + values


def policy_surrogate_grad(probs: np.ndarray, actions: np.ndarray, old_logps: np.ndarray,
                          adv: np.ndarray, clip_eps: float):
    """Clipped surrogate loss ``-mean(min(r A, clip(r) A))`` and dL/d(probs)."""
    n = len(actions)
    rows = np.arange(n)
    p_a = np.maximum(probs[rows, actions], PROB_FLOOR)
    ratio = np.exp(np.log(p_a) - old_logps)
    clipped = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps)
    loss = -float(np.mean(np.minimum(ratio * adv, clipped * adv)))
    # the unclipped branch is the minimum (and carries gradient) unless clipping binds
    active = ~(((adv > 0) & (ratio > 1.0 + clip_eps)) | ((adv < 0) & (ratio < 1.0 - clip_eps)))
    d_logp = np.where(active, -adv * ratio / n, 0.0)
    d_probs = np.zeros_like(probs)
    d_probs[rows, actions] = d_logp / p_a
    return loss, d_probs, ratio


def ppo_update(pv: PolicyValue, trajectories: list[Trajectory], clip_eps: float = 0.2,
               gamma: float = 0.99, lam: float = 0.95, epochs: int = 4, minibatch: int = 256,
               rng: np.random.Generator | None = None, normalize_adv: bool = True,
               entropy_coef: float = 0.0) -> tuple[float, float]:
    """Several epochs of clipped-surrogate and value-regression steps.

    Returns the mean policy and value losses over the last epoch.
    """
    rng = rng or np.random.default_rng(0)
    states, actions, logps, advs, rets = [], [], [], [], []
    for tr in trajectories:
        v = pv.values(tr.states)
        a, r = gae(tr.rewards, v, gamma, lam, tr.last_value, tr.done)
        states.append(tr.states)
        actions.append(tr.actions)
        logps.append(tr.logps)
        advs.append(a)
        rets.append(r)
    S = np.concatenate(states).astype(np.float64)
    A = np.concatenate(actions).astype(np.int64)
    L = np.concatenate(logps)
    ADV = np.concatenate(advs)
    RET = np.concatenate(rets)
    if normalize_adv and len(ADV) > 1:
        ADV = (ADV - ADV.mean()) / (ADV.std() + 1e-8)
    n = len(A)
    p_losses, v_losses = [], []
    for _ in range(epochs):
        p_losses, v_losses = [], []
        order = rng.permutation(n)
        for start in range(0, n, minibatch):
            mb = order[start:start + minibatch]
            probs, cache = dc.forward(pv.policy, S[mb])
            loss, d_probs, _ = policy_surrogate_grad(probs, A[mb], L[mb], ADV[mb], clip_eps)
            if entropy_coef:
                logp = np.log(np.maximum(probs, PROB_FLOOR))
                # maximize entropy: loss -= c * H, dH/dp = -(log p + 1)
                d_probs = d_probs + entropy_coef * (logp + 1.0) / len(mb)
            grads, _ = dc.backward(pv.policy, cache, d_probs)
            dc.step(pv.policy, dc.clip_by_global_norm(grads, 10.0), pv.policy_opt)
            v, v_cache = dc.forward(pv.value, S[mb])
            err = v[:, 0] - RET[mb]
            v_grads, _ = dc.backward(pv.value, v_cache, (2.0 * err / len(mb))[:, None])
            dc.step(pv.value, dc.clip_by_global_norm(v_grads, 10.0), pv.value_opt)
            p_losses.append(loss)
            v_losses.append(float(np.mean(err ** 2)))
    return float(np.mean(p_losses)), float(np.mean(v_losses))


def supervised_step(pv: PolicyValue, states: np.ndarray, actions: np.ndarray) -> float:
    """One cross-entropy step towards the given (state, action) pairs."""
    probs, cache = dc.forward(pv.policy, np.asarray(states, dtype=np.float64))
    rows = np.arange(len(actions))
    p_a = np.maximum(probs[rows, actions], PROB_FLOOR)
    loss = -float(np.mean(np.log(p_a)))
    d_probs = np.zeros_like(probs)
    d_probs[rows, actions] = -1.0 / (p_a * len(actions))
    grads, _ = dc.backward(pv.policy, cache, d_probs)
    dc.step(pv.policy, grads, pv.policy_opt)
    return loss


def imitation_warmup(pv: PolicyValue, states: np.ndarray, actions: np.ndarray, epochs: int,
                     rng: np.random.Generator, batch_size: int = 64) -> list[float]:
    """Behaviour cloning on expert (state, action) pairs; returns per-epoch mean loss."""
    if len(actions) == 0:
        raise ValueError("empty expert corpus")
    curve = []
    for _ in range(epochs):
        order = rng.permutation(len(actions))
        losses = [supervised_step(pv, states[order[i:i + batch_size]], actions[order[i:i + batch_size]])
                  for i in range(0, len(actions), batch_size)]
        curve.append(float(np.mean(losses)))
    return curve


def training_accuracy(pv: PolicyValue, states, actions) -> float:
    return float(np.mean(np.argmax(pv.probs(states), axis=1) == np.asarray(actions)))
