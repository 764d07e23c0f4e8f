"""Random per-slot subproblems for tests and demos."""
from __future__ import annotations

import numpy as np

from .config import EnvConfig
from .env import generate_tasks, initial_services
from .lyapunov import SlotSubproblem, build_subproblem


def random_subproblem(rng: np.random.Generator, num_users: int = 3, num_services: int = 4,
                      cfg: EnvConfig | None = None, idle_prob: float = 0.2) -> SlotSubproblem:
    """A slot drawn from the environment's processes with random history.

    Queues, ES ages and the previous cache are randomised so that all three
    download cases appear; some users are made idle.
    """
    cfg = (cfg or EnvConfig()).replace(num_users=num_users, num_services=num_services,
                                      fixed_services=tuple(range(min(2, num_services))))
    J = num_services
    services = initial_services(cfg, rng)
    services.aoi_cs = rng.integers(0, 6, size=J).astype(float)
    services.cached = (rng.random(J) < 0.5).astype(int)
    stale = rng.integers(0, 6, size=J).astype(float)
    services.aoi_es = np.where(services.cached == 1, services.aoi_cs + stale, services.aoi_cs)
    # the previous cache must fit the budget
    while np.dot(services.size, services.cached) > cfg.storage_capacity:
        services.cached[np.flatnonzero(services.cached)[0]] = 0
    services.aoi_es = np.where(services.cached == 1, services.aoi_es, services.aoi_cs)
    tasks = generate_tasks(cfg, rng)
    idle = rng.random(num_users) < idle_prob
    for arr in (tasks.up, tasks.down, tasks.cycles):
        arr[idle] = 0.0
    queue = rng.uniform(0, 20, size=J) * (rng.random(J) < 0.6)
    aoi_max = rng.uniform(*cfg.aoi_threshold_range, size=J)
    return build_subproblem(cfg, services, tasks, queue, aoi_max)
