"""Advantage estimation and the PPO / A2C / DQN objectives with analytic gradients.

Every objective returns ``(value, grad)`` where ``grad`` is taken with respect
to the network *outputs* (logits, state values or Q-values); chaining through
:meth:`MLP.backward` gives parameter gradients.  Actor objectives are to be
maximised, critic and Q losses minimised.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nets import log_sigmoid, sigmoid


class NonFiniteLoss(FloatingPointError):
    pass


@dataclass
class Hyperparams:
    gamma: float = 0.8
    gae_lambda: float = 0.95
    clip_pi: float = 0.2
    clip_v: float = 0.2
    entropy_coef: float = 0.01
    batch_size: int = 256
    lr_initial: float = 1e-3
    lr_final: float = 1e-4
    update_period: int = 4  # episodes per update round
    epochs: int = 4
    hidden: tuple = (256, 256, 256, 256)
    dropout: float = 0.0
    rng_seed: int = 0
    episode_length: int = 64
    eval_episodes: int = 1  # greedy episodes per round for the learning curve
    rounds: int = 100
    max_grad_norm: float = 1.0
    normalize_advantages: bool = True
    credit: str = "groups"  # "groups": all K sampled groups carry the action; "selected": chosen group only
    dqn_epsilon_start: float = 0.5
    dqn_epsilon_end: float = 0.05
    dqn_epsilon_rounds: int = 20
    dqn_replay_rounds: int = 8

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        self.validate()

    def validate(self) -> None:
        if not (0 <= self.gamma <= 1 and 0 <= self.gae_lambda <= 1):
            raise ValueError("gamma and gae_lambda must lie in [0, 1]")
        if not 0 <= self.clip_pi <= 1:
            raise ValueError("clip_pi must lie in [0, 1]")
        if self.clip_v <= 0:
            raise ValueError("clip_v must be positive")
        if self.entropy_coef < 0:
            raise ValueError("entropy_coef must be nonnegative")
        if min(self.batch_size, self.update_period, self.epochs, self.episode_length, self.rounds) < 1:
            raise ValueError("batch size, update period, epochs, episode length and rounds must be >= 1")
        if self.eval_episodes < 0:
            raise ValueError("eval_episodes must be nonnegative")
        if self.credit not in ("groups", "selected"):
            raise ValueError("credit must be 'groups' or 'selected'")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must lie in [0, 1)")


def gae_advantages(rewards, values, gamma: float, lam: float, dones=None, last_value: float = 0.0):
    """Generalised advantage estimates for one ordered stream of transitions.

    ``dones[t]`` marks that the state after transition t is terminal (value 0).
    The state after the final transition bootstraps with ``last_value``.
    """
    r = np.asarray(rewards, float)
    v = np.asarray(values, float)
    T = len(r)
    done = np.zeros(T, bool) if dones is None else np.asarray(dones, bool)
    next_v = np.append(v[1:], last_value)
    next_v = np.where(done, 0.0, next_v)
    delta = r + gamma * next_v - v
    adv = np.zeros(T)
    acc = 0.0
    for t in range(T - 1, -1, -1):
        acc = delta[t] + (0.0 if done[t] else gamma * lam * acc)
        adv[t] = acc
    return adv


def bernoulli_logp(logits, bits):
    return np.where(np.asarray(bits) > 0, log_sigmoid(logits), log_sigmoid(-logits))


def bernoulli_entropy(logits):
    p = sigmoid(logits)
    return -(p * log_sigmoid(logits) + (1 - p) * log_sigmoid(-logits))


def _entropy_term(logits, beta):
    """Mean over states of the summed per-bit entropy, and its logit gradient."""
    n = len(logits)
    p = sigmoid(logits)
    value = beta * float(np.sum(bernoulli_entropy(logits))) / n
    grad = beta * (-logits * p * (1 - p)) / n
    return value, grad


def _check(value):
    if not np.isfinite(value):
        raise NonFiniteLoss("loss is not finite")
    return value


def ppo_actor_objective(logits, bits, weights, old_logp, adv, clip: float, beta: float):
    """Clipped surrogate per offload bit plus the entropy bonus.

    ``weights`` selects the bits that influence the executed action; the
    clipped term is their weighted mean.
    """
    logits = np.asarray(logits, float)
    w = np.asarray(weights, float)
    A = np.asarray(adv, float)[:, None]
    logp = bernoulli_logp(logits, bits)
    ratio = np.exp(logp - old_logp)
    clipped = np.clip(ratio, 1 - clip, 1 + clip)
    total_w = w.sum()
    if total_w > 0:
        surrogate = float(np.sum(w * np.minimum(ratio * A, clipped * A))) / total_w
        # the clipped branch carries no gradient once the ratio leaves the band in the favoured direction
        live = ~(((A > 0) & (ratio > 1 + clip)) | ((A < 0) & (ratio < 1 - clip)))
        grad = w * live * A * ratio * (np.asarray(bits, float) - sigmoid(logits)) / total_w
    else:
        surrogate, grad = 0.0, np.zeros_like(logits)
    ent, g_ent = _entropy_term(logits, beta)
    return _check(surrogate + ent), grad + g_ent


def ppo_critic_loss(values, old_values, adv, clip_v: float):
    v = np.asarray(values, float).ravel()
    v_old = np.asarray(old_values, float).ravel()
    target = v_old + np.asarray(adv, float)
    diff = v - v_old
    v_clip = v_old + np.clip(diff, -clip_v, clip_v)
    a = (v - target) ** 2
    b = (v_clip - target) ** 2
    n = len(v)
    use_a = a >= b
    inside = np.abs(diff) < clip_v
    grad = np.where(use_a, 2 * (v - target), 2 * (v_clip - target) * inside) / n
    return _check(float(np.mean(np.maximum(a, b)))), grad[:, None]


def a2c_actor_objective(logits, bits, weights, adv, beta: float):
    logits = np.asarray(logits, float)
    w = np.asarray(weights, float)
    A = np.asarray(adv, float)[:, None]
    logp = bernoulli_logp(logits, bits)
    total_w = w.sum()
    if total_w > 0:
        value = float(np.sum(w * logp * A)) / total_w
        grad = w * A * (np.asarray(bits, float) - sigmoid(logits)) / total_w
    else:
        value, grad = 0.0, np.zeros_like(logits)
    ent, g_ent = _entropy_term(logits, beta)
    return _check(value + ent), grad + g_ent


def a2c_critic_loss(values, targets):
    v = np.asarray(values, float).ravel()
    d = v - np.asarray(targets, float)
    return _check(float(np.mean(d * d))), (2 * d / len(v))[:, None]


def dqn_loss(q_values, actions, rewards, next_max_q, dones, gamma: float):
    """Mean squared TD error; the bootstrap term comes from a frozen target network."""
    q = np.asarray(q_values, float)
    a = np.asarray(actions, int)
    n = len(q)
    target = np.asarray(rewards, float) + gamma * (1 - np.asarray(dones, float)) * np.asarray(next_max_q, float)
    td = q[np.arange(n), a] - target
    grad = np.zeros_like(q)
    grad[np.arange(n), a] = 2 * td / n
    return _check(float(np.mean(td * td))), grad
