"""Rollout collection and training loops for the learning-stage agents."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from ..env import EdgeEnv
from ..lyapunov import build_subproblem
from ..policy import to_slot_decision
from ..rng import keyed_rng


@dataclass
class LearningCurve:
    """Per-round mean per-slot reward of the greedy policy (``mean_reward``) and of
    the exploring behaviour policy (``behaviour_reward``)."""

    rounds: list = field(default_factory=list)
    episodes: list = field(default_factory=list)
    mean_reward: list = field(default_factory=list)
    behaviour_reward: list = field(default_factory=list)
    stats: list = field(default_factory=list)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.mean_reward, float)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["round", "episodes", "mean_reward", "behaviour_reward"])
            for r, e, m, b in zip(self.rounds, self.episodes, self.mean_reward, self.behaviour_reward):
                w.writerow([r, e, "%.9g" % m, "%.9g" % b])


def episode_seed(base: int, round_index: int, episode: int) -> int:
    """Environment seed for one training episode; shared by every agent trained from ``base``."""
    return int(np.random.SeedSequence([base, round_index, episode]).generate_state(1)[0])


def eval_seed(base: int, episode: int) -> int:
    """Seed of the fixed greedy evaluation episodes (the same every round)."""
    return int(np.random.SeedSequence([base, 2 ** 31 - 1, episode]).generate_state(1)[0])


def run_episode(agent, cfg, seed: int, explore: bool = True, horizon: int | None = None):
    """Play one episode; returns the agent's records (rewards are ``-P2 objective``)."""
    env_cfg = cfg if horizon is None else cfg.replace(horizon=horizon)
    env = EdgeEnv(env_cfg, seed=seed)
    rng = keyed_rng(seed, "sampling")
    erng = keyed_rng(seed, "explore")
    records = []
    while not env.done:
        sub = build_subproblem(env_cfg, env.services, env.tasks, env.queue, env.aoi_max)
        decision, record = agent.act(sub, rng, explore=explore, explore_rng=erng)
        env.step(to_slot_decision(decision, env.tasks, env_cfg))
        records.append(record)
    return records


def train_agent(agent, rounds: int | None = None, base_seed: int | None = None, progress=None) -> LearningCurve:
    """Alternate ``update_period`` exploratory episodes and one update, ``rounds`` times.

    After each update the greedy policy plays ``eval_episodes`` fixed episodes;
    their mean reward is the learning curve (behaviour reward when that is 0).
    """
    hp = agent.hp
    rounds = hp.rounds if rounds is None else rounds
    base = hp.rng_seed if base_seed is None else base_seed
    curve = LearningCurve()
    for r in range(rounds):
        episodes = [run_episode(agent, agent.cfg, episode_seed(base, r, e), True, hp.episode_length)
                    for e in range(hp.update_period)]
        behaviour = float(np.mean([rec["reward"] for ep in episodes for rec in ep]))
        stats = agent.update(episodes, r)
        greedy = [rec["reward"] for e in range(hp.eval_episodes)
                  for rec in run_episode(agent, agent.cfg, eval_seed(base, e), False, hp.episode_length)]
        curve.rounds.append(r)
        curve.episodes.append((r + 1) * hp.update_period)
        curve.mean_reward.append(float(np.mean(greedy)) if greedy else behaviour)
        curve.behaviour_reward.append(behaviour)
        curve.stats.append(stats)
        if progress is not None:
            progress(r, curve.mean_reward[-1], stats)
    return curve


def plateau(curve, window: int = 10, band: float = 0.05, tail: int = 20):
    """Return ``(level, first_round)``.

    ``level`` is the mean of the last ``tail`` rounds; ``first_round`` is the
    first round from which every ``window``-round moving average stays within
    ``band`` (relative) of the level, or ``None`` if that never happens.
    """
    y = np.asarray(curve, float)
    if len(y) < max(window, tail):
        raise ValueError("curve shorter than the plateau window")
    level = float(np.mean(y[-tail:]))
    ma = np.convolve(y, np.ones(window) / window, mode="valid")
    ok = np.abs(ma - level) <= band * abs(level)
    for start in range(len(ok)):
        if np.all(ok[start:]):
            return level, start + window - 1
    return level, None
