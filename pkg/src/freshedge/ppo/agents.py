"""Learning-stage agents.

* :class:`OiodrlAgent` - offloading actor on top of the SDR sampling stage,
  trained with clipped PPO (default) or A2C.
* :class:`DqnAgent` - the same pipeline with a Q-network over masked offload
  bit-vectors.
* :class:`PpoOnlyAgent` - two actors (caching and offloading), no SDR stage.

Each agent exposes ``act(sub, rng, explore)`` returning ``(PolicyDecision,
record)`` and ``update(episodes, round_index)`` consuming the records of the
last ``update_period`` episodes.
"""
from __future__ import annotations

from collections import deque

import numpy as np

from .. import sdr
from ..config import EnvConfig
from ..lyapunov import SlotSubproblem
from ..policy import PolicyDecision, make_decision, objective_value
from . import losses
from .features import Featurizer
from .losses import Hyperparams
from .nets import (MLP, Adam, clip_grad_norm, load_arrays, lr_schedule, net_arrays, restore_net,
                   save_arrays, sigmoid)

AGENT_CODES = {"ppo": 1.0, "a2c": 2.0, "dqn": 3.0, "ppo_only": 4.0}


def offload_matrix(sub: SlotSubproblem, bits) -> np.ndarray:
    """Per-user offload bits -> (I, J) matrix on the requested services."""
    x = np.zeros((sub.num_users, sub.num_services), int)
    on = sub.requests >= 0
    x[np.flatnonzero(on), sub.requests[on]] = np.asarray(bits, int)[on]
    return x


def mask_and_select(offload_probs, sampled_bits, cache, sub: SlotSubproblem):
    """Mask each group's offload bits by its cache, return ``(x, k, rewards)`` of the best group.

    Rewards are ``-objective``; ties go to the lowest group index.
    """
    probs = np.atleast_2d(offload_probs)
    bits = np.atleast_2d(sampled_bits)
    cache = np.atleast_2d(cache)
    if probs.shape != bits.shape or len(bits) != len(cache) or bits.shape[1] != sub.num_users:
        raise ValueError("group arrays have inconsistent shapes")
    rewards = np.empty(len(cache))
    xs = []
    for k in range(len(cache)):
        x = offload_matrix(sub, bits[k]) * cache[k][None, :]
        xs.append(x)
        rewards[k] = -objective_value(sub, x, cache[k])
    k = int(np.argmax(rewards))
    return xs[k], k, rewards


def active_bits(sub: SlotSubproblem, cache) -> np.ndarray:
    """(K, I) bits that can change the executed action: task present and service cached."""
    cache = np.atleast_2d(cache)
    req = sub.requests
    out = np.zeros((len(cache), sub.num_users))
    on = req >= 0
    out[:, on] = cache[:, req[on]]
    return out


class _Learner:
    kind = ""

    def __init__(self, cfg: EnvConfig, hp: Hyperparams | None = None, seed: int | None = None):
        self.cfg = cfg
        self.hp = hp or Hyperparams()
        self.seed = self.hp.rng_seed if seed is None else seed
        self.rng = np.random.default_rng([self.seed, int(AGENT_CODES[self.kind])])
        self.feat = Featurizer(cfg)
        self.reward_scale = None
        self.nets: dict = {}
        self.opts: dict = {}

    def _net(self, name, n_in, n_out):
        net = MLP([n_in, *self.hp.hidden, n_out], self.rng, dropout=self.hp.dropout)
        self.nets[name] = net
        self.opts[name] = Adam(net.params)
        return net

    def _scale_rewards(self, rewards):
        if self.reward_scale is None:
            scale = float(np.mean(np.abs(rewards)))
            self.reward_scale = scale if scale > 0 else 1.0
        return np.asarray(rewards, float) / self.reward_scale

    def _apply(self, name, cache, d_out, lr):
        """Descend along ``d_out`` (gradient of a loss w.r.t. the outputs of net ``name``)."""
        net = self.nets[name]
        grads = net.backward(cache, d_out)
        grads, _ = clip_grad_norm(grads, self.hp.max_grad_norm)
        self.opts[name].step(net.params, grads, lr)

    def _minibatches(self, n):
        order = self.rng.permutation(n)
        bs = self.hp.batch_size
        return [order[s:s + bs] for s in range(0, n, bs)]

    def decide(self, sub: SlotSubproblem, rng: np.random.Generator) -> PolicyDecision:
        return self.act(sub, rng, explore=False)[0]

    # checkpoints
    def save(self, path) -> None:
        arrays = {"meta.kind": np.array([AGENT_CODES[self.kind]]),
                  "meta.hidden": np.array(self.hp.hidden, float),
                  "meta.reward_scale": np.array([np.nan if self.reward_scale is None else self.reward_scale])}
        for name, net in self.nets.items():
            arrays.update(net_arrays(name, net, self.opts[name]))
        save_arrays(path, arrays)

    def load(self, path) -> None:
        arrays = load_arrays(path)
        if arrays.get("meta.kind", [None])[0] != AGENT_CODES[self.kind]:
            raise ValueError(f"checkpoint does not hold a {self.kind} agent")
        for name, net in self.nets.items():
            restore_net(name, arrays, net, self.opts[name])
        scale = float(arrays["meta.reward_scale"][0])
        self.reward_scale = None if np.isnan(scale) else scale


class OiodrlAgent(_Learner):
    """SDR sampling stage + offloading actor + best-of-K selection."""

    def __init__(self, cfg: EnvConfig, hp: Hyperparams | None = None, seed: int | None = None,
                 algorithm: str = "ppo"):
        if algorithm not in ("ppo", "a2c"):
            raise ValueError("algorithm must be 'ppo' or 'a2c'")
        self.kind = algorithm
        super().__init__(cfg, hp, seed)
        self.actor = self._net("actor", self.feat.group_dim, cfg.num_users)
        self.critic = self._net("critic", self.feat.critic_dim, 1)
        self.last_relaxation = None
        self.relaxations = None

    def propose(self, sub: SlotSubproblem, rng: np.random.Generator):
        """K repaired cache/download groups sampled from the SDP relaxation."""
        rel = self.relaxations.solve(sub) if self.relaxations is not None else sdr.solve_relaxation(sub)
        self.last_relaxation = rel
        z_prob, _ = sdr.extract_relaxed_decisions(rel.U, sub.num_users)
        return sdr.sample_and_repair(z_prob, self.cfg.num_samples, rng, sub.sizes, sub.storage, sub.case)

    def act(self, sub: SlotSubproblem, rng: np.random.Generator, explore: bool = True, groups=None,
            explore_rng: np.random.Generator | None = None):
        groups = self.propose(sub, rng) if groups is None else groups
        erng = rng if explore_rng is None else explore_rng
        inputs = self.feat.groups(sub, groups.download, groups.cache)
        logits = self.actor(inputs)
        probs = sigmoid(logits)
        bits = (erng.random(probs.shape) < probs) if explore else (probs >= 0.5)
        bits = bits.astype(int)
        x, k, rewards = mask_and_select(probs, bits, groups.cache, sub)
        critic_in = self.feat.critic(sub, groups.download, groups.cache)
        # The executed bits are the best of K draws, so they are not distributed as the
        # policy; every group's draw is scored instead, credited with its own reward.
        rows = slice(None) if self.hp.credit == "groups" else slice(k, k + 1)
        record = {
            "actor_in": inputs[rows], "bits": bits[rows], "weights": active_bits(sub, groups.cache[rows]),
            "old_logp": losses.bernoulli_logp(logits[rows], bits[rows]), "critic_in": critic_in,
            "group_rewards": rewards[rows].astype(float),
            "value": float(self.critic(critic_in[None, :])[0, 0]), "reward": float(rewards[k]), "group": k,
        }
        info = {}
        if self.last_relaxation is not None:
            info = {"certificate": self.last_relaxation.certificate, "sdp_skipped": self.last_relaxation.skipped}
        return make_decision(sub, x, groups.cache[k], **info), record

    def _batch(self, episodes):
        rec = [r for ep in episodes for r in ep]
        if not rec:
            raise ValueError("no transitions to learn from")
        rewards = self._scale_rewards([r["reward"] for r in rec])
        values = np.array([r["value"] for r in rec])
        adv = []
        pos = 0
        for ep in episodes:
            n = len(ep)
            d = np.zeros(n, bool)
            d[-1] = True
            adv.append(losses.gae_advantages(rewards[pos:pos + n], values[pos:pos + n],
                                             self.hp.gamma, self.hp.gae_lambda, d))
            pos += n
        return {
            "actor_in": np.concatenate([r["actor_in"] for r in rec]),
            "bits": np.concatenate([r["bits"] for r in rec]),
            "weights": np.concatenate([r["weights"] for r in rec]),
            "old_logp": np.concatenate([r["old_logp"] for r in rec]),
            "state": np.repeat(np.arange(len(rec)), [len(r["bits"]) for r in rec]),
            # a group's TD error uses that group's reward in place of the executed one
            "offset": np.concatenate([(r["group_rewards"] - r["reward"]) / self.reward_scale for r in rec]),
            "critic_in": np.array([r["critic_in"] for r in rec]),
            "values": values, "adv": np.concatenate(adv),
        }

    def update(self, episodes, round_index: int) -> dict:
        hp = self.hp
        b = self._batch(episodes)
        lr = lr_schedule(round_index, hp.rounds, hp.lr_initial, hp.lr_final)
        adv = b["adv"]
        actor_adv = adv[b["state"]] + b["offset"]
        if hp.normalize_advantages and len(actor_adv) > 1:
            actor_adv = (actor_adv - actor_adv.mean()) / (actor_adv.std() + 1e-8)
        epochs = hp.epochs if self.kind == "ppo" else 1
        stats = []
        for _ in range(epochs):
            for idx in self._minibatches(len(adv)):
                rows = np.flatnonzero(np.isin(b["state"], idx))
                logits, cache = self.actor.forward(b["actor_in"][rows])
                row_adv = actor_adv[rows]
                if self.kind == "ppo":
                    obj, g = losses.ppo_actor_objective(logits, b["bits"][rows], b["weights"][rows],
                                                        b["old_logp"][rows], row_adv, hp.clip_pi,
                                                        hp.entropy_coef)
                else:
                    obj, g = losses.a2c_actor_objective(logits, b["bits"][rows], b["weights"][rows],
                                                        row_adv, hp.entropy_coef)
                self._apply("actor", cache, -g, lr)
                v, vcache = self.critic.forward(b["critic_in"][idx], self.rng if hp.dropout > 0 else None)
                if self.kind == "ppo":
                    loss, gv = losses.ppo_critic_loss(v, b["values"][idx], adv[idx], hp.clip_v)
                else:
                    loss, gv = losses.a2c_critic_loss(v, b["values"][idx] + adv[idx])
                self._apply("critic", vcache, gv, lr)
                stats.append((obj, loss))
        s = np.array(stats)
        return {"actor_objective": float(s[:, 0].mean()), "critic_loss": float(s[:, 1].mean()), "lr": lr}


def _action_bits(num_users: int) -> np.ndarray:
    a = np.arange(2 ** num_users)
    return (a[:, None] >> np.arange(num_users)[None, :]) & 1


class DqnAgent(OiodrlAgent):
    """Q-network over the 2^I offload bit-vectors, restricted to bits the cache allows."""

    def __init__(self, cfg: EnvConfig, hp: Hyperparams | None = None, seed: int | None = None):
        self.kind = "dqn"
        _Learner.__init__(self, cfg, hp, seed)
        if cfg.num_users > 12:
            raise ValueError("DQN action space 2^I is limited to I <= 12")
        self.qnet = self._net("qnet", self.feat.group_dim, 2 ** cfg.num_users)
        self.target = self.qnet.copy()
        self.table = _action_bits(cfg.num_users)
        self.replay = deque(maxlen=self.hp.dqn_replay_rounds)
        self.epsilon = self.hp.dqn_epsilon_start
        self.last_relaxation = None
        self.relaxations = None

    def valid_actions(self, active) -> np.ndarray:
        """(K, 2^I) mask of actions whose set bits are all active."""
        active = np.atleast_2d(active)
        return np.all(self.table[None, :, :] <= active[:, None, :], axis=2)

    def act(self, sub: SlotSubproblem, rng: np.random.Generator, explore: bool = True, groups=None,
            explore_rng: np.random.Generator | None = None):
        groups = self.propose(sub, rng) if groups is None else groups
        erng = rng if explore_rng is None else explore_rng
        inputs = self.feat.groups(sub, groups.download, groups.cache)
        q = self.qnet(inputs)
        valid = self.valid_actions(active_bits(sub, groups.cache))
        actions = np.argmax(np.where(valid, q, -np.inf), axis=1)
        if explore:
            for k in np.flatnonzero(erng.random(len(actions)) < self.epsilon):
                actions[k] = erng.choice(np.flatnonzero(valid[k]))
        bits = self.table[actions]
        x, k, rewards = mask_and_select(np.full(bits.shape, 0.5), bits, groups.cache, sub)
        record = {"state": inputs[k], "action": int(actions[k]), "valid": valid[k], "reward": float(rewards[k])}
        info = {"certificate": self.last_relaxation.certificate, "sdp_skipped": self.last_relaxation.skipped}
        return make_decision(sub, x, groups.cache[k], **info), record

    def update(self, episodes, round_index: int) -> dict:
        hp = self.hp
        new = []
        for ep in episodes:
            rewards = self._scale_rewards([r["reward"] for r in ep])
            for t, r in enumerate(ep):
                last = t == len(ep) - 1
                nxt = ep[t] if last else ep[t + 1]
                new.append((r["state"], r["action"], rewards[t], nxt["state"], nxt["valid"], float(last)))
        self.replay.append(new)
        pool = [tr for chunk in self.replay for tr in chunk]
        self.target = self.qnet.copy()
        lr = lr_schedule(round_index, hp.rounds, hp.lr_initial, hp.lr_final)
        steps = hp.epochs * max(1, len(new) // hp.batch_size)
        out = []
        for _ in range(steps):
            idx = self.rng.integers(len(pool), size=min(hp.batch_size, len(pool)))
            S = np.array([pool[i][0] for i in idx])
            A = np.array([pool[i][1] for i in idx])
            R = np.array([pool[i][2] for i in idx])
            S2 = np.array([pool[i][3] for i in idx])
            V2 = np.array([pool[i][4] for i in idx])
            D = np.array([pool[i][5] for i in idx])
            next_max = np.max(np.where(V2, self.target(S2), -np.inf), axis=1)
            q, cache = self.qnet.forward(S, self.rng if hp.dropout > 0 else None)
            loss, g = losses.dqn_loss(q, A, R, next_max, D, hp.gamma)
            self._apply("qnet", cache, g, lr)
            out.append(loss)
        frac = min(1.0, (round_index + 1) / max(1, hp.dqn_epsilon_rounds))
        self.epsilon = hp.dqn_epsilon_start + frac * (hp.dqn_epsilon_end - hp.dqn_epsilon_start)
        return {"q_loss": float(np.mean(out)), "epsilon": self.epsilon, "lr": lr}

    def load(self, path) -> None:
        super().load(path)
        self.target = self.qnet.copy()


class PpoOnlyAgent(_Learner):
    """Caching actor (J bits, storage repaired by random removal) and offloading actor, both PPO."""

    kind = "ppo_only"

    def __init__(self, cfg: EnvConfig, hp: Hyperparams | None = None, seed: int | None = None):
        super().__init__(cfg, hp, seed)
        J, I = cfg.num_services, cfg.num_users
        self.cache_actor = self._net("cache_actor", self.feat.service_dim, J)
        self.offload_actor = self._net("offload_actor", self.feat.task_dim + J + I, I)
        self.critic = self._net("critic", self.feat.service_dim, 1)

    def act(self, sub: SlotSubproblem, rng: np.random.Generator, explore: bool = True,
            explore_rng: np.random.Generator | None = None):
        erng = rng if explore_rng is None else explore_rng
        s = self.feat.services(sub)
        c_logits = self.cache_actor(s[None, :])[0]
        pc = sigmoid(c_logits)
        zbits = ((erng.random(pc.shape) < pc) if explore else (pc >= 0.5)).astype(int)
        z = sdr.repair_storage(zbits, sub.sizes, sub.storage, rng)
        o_in = np.concatenate([self.feat.tasks(sub), z, self.feat.requested_cached(sub, z)[0]])
        o_logits = self.offload_actor(o_in[None, :])[0]
        po = sigmoid(o_logits)
        xbits = ((erng.random(po.shape) < po) if explore else (po >= 0.5)).astype(int)
        x = offload_matrix(sub, xbits) * z[None, :]
        d = make_decision(sub, x, z)
        record = {
            "state": s, "zbits": zbits, "z_logp": losses.bernoulli_logp(c_logits, zbits),
            "offload_in": o_in, "xbits": xbits, "x_logp": losses.bernoulli_logp(o_logits, xbits),
            "weights": active_bits(sub, z)[0], "value": float(self.critic(s[None, :])[0, 0]),
            "reward": -d.value,
        }
        return d, record

    def update(self, episodes, round_index: int) -> dict:
        hp = self.hp
        rec = [r for ep in episodes for r in ep]
        rewards = self._scale_rewards([r["reward"] for r in rec])
        values = np.array([r["value"] for r in rec])
        adv, pos = [], 0
        for ep in episodes:
            n = len(ep)
            d = np.zeros(n, bool)
            d[-1] = True
            adv.append(losses.gae_advantages(rewards[pos:pos + n], values[pos:pos + n],
                                             hp.gamma, hp.gae_lambda, d))
            pos += n
        adv = np.concatenate(adv)
        nadv = (adv - adv.mean()) / (adv.std() + 1e-8) if hp.normalize_advantages and len(adv) > 1 else adv
        S = np.array([r["state"] for r in rec])
        Z = np.array([r["zbits"] for r in rec])
        ZL = np.array([r["z_logp"] for r in rec])
        O = np.array([r["offload_in"] for r in rec])
        X = np.array([r["xbits"] for r in rec])
        XL = np.array([r["x_logp"] for r in rec])
        W = np.array([r["weights"] for r in rec])
        lr = lr_schedule(round_index, hp.rounds, hp.lr_initial, hp.lr_final)
        stats = []
        for _ in range(hp.epochs):
            for idx in self._minibatches(len(adv)):
                lc, cc = self.cache_actor.forward(S[idx])
                oc, gc = losses.ppo_actor_objective(lc, Z[idx], np.ones_like(lc), ZL[idx], nadv[idx],
                                                    hp.clip_pi, hp.entropy_coef)
                self._apply("cache_actor", cc, -gc, lr)
                lo, co = self.offload_actor.forward(O[idx])
                oo, go = losses.ppo_actor_objective(lo, X[idx], W[idx], XL[idx], nadv[idx],
                                                    hp.clip_pi, hp.entropy_coef)
                self._apply("offload_actor", co, -go, lr)
                v, vc = self.critic.forward(S[idx], self.rng if hp.dropout > 0 else None)
                loss, gv = losses.ppo_critic_loss(v, values[idx], adv[idx], hp.clip_v)
                self._apply("critic", vc, gv, lr)
                stats.append((oc + oo, loss))
        s = np.array(stats)
        return {"actor_objective": float(s[:, 0].mean()), "critic_loss": float(s[:, 1].mean()), "lr": lr}


def make_agent(kind: str, cfg: EnvConfig, hp: Hyperparams | None = None, seed: int | None = None):
    kind = kind.lower().replace("-", "_")
    if kind in ("ppo", "oiodrl", "a2c"):
        return OiodrlAgent(cfg, hp, seed, algorithm="a2c" if kind == "a2c" else "ppo")
    if kind == "dqn":
        return DqnAgent(cfg, hp, seed)
    if kind == "ppo_only":
        return PpoOnlyAgent(cfg, hp, seed)
    raise ValueError(f"unknown agent kind {kind!r}")


def load_agent(path, cfg: EnvConfig, hp: Hyperparams | None = None):
    """Rebuild an agent of the stored kind and hidden layout, then restore its weights."""
    arrays = load_arrays(path)
    code = float(arrays["meta.kind"][0])
    kind = {v: k for k, v in AGENT_CODES.items()}.get(code)
    if kind is None:
        raise ValueError("unknown agent kind in checkpoint")
    hidden = tuple(int(h) for h in arrays["meta.hidden"])
    hp = Hyperparams(**{**(hp or Hyperparams()).__dict__, "hidden": hidden})
    agent = make_agent(kind, cfg, hp)
    agent.load(path)
    return agent
