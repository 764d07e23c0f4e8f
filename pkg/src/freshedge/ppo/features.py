"""State encodings for the learning stage.

Task information is per user: [task present, CPU cycles (scaled), one-hot of
the requested service].  Uplink and downlink sizes are proportional to the
cycle count under the task model, so they add no information.
"""
from __future__ import annotations

import numpy as np

from ..config import EnvConfig
from ..lyapunov import SlotSubproblem


def _signed_log(x):
    return np.sign(x) * np.log1p(np.abs(x)) / 10.0


class Featurizer:
    def __init__(self, cfg: EnvConfig):
        self.num_users = cfg.num_users
        self.num_services = cfg.num_services
        self.num_samples = cfg.num_samples
        self.cycle_scale = cfg.cycles_per_byte * cfg.task_size_max
        self.storage = cfg.storage_capacity

    @property
    def task_dim(self) -> int:
        return self.num_users * (2 + self.num_services)

    @property
    def group_dim(self) -> int:
        return self.task_dim + 2 * self.num_services + self.num_users

    @property
    def critic_dim(self) -> int:
        return self.task_dim + 2 * self.num_services * self.num_samples

    @property
    def service_dim(self) -> int:
        return self.task_dim + 7 * self.num_services

    def _check(self, sub: SlotSubproblem):
        if sub.num_users != self.num_users or sub.num_services != self.num_services:
            raise ValueError("subproblem size does not match the featurizer")

    def tasks(self, sub: SlotSubproblem) -> np.ndarray:
        self._check(sub)
        I, J = self.num_users, self.num_services
        req = sub.requests
        out = np.zeros((I, 2 + J))
        on = req >= 0
        out[on, 0] = 1.0
        out[on, 1] = sub.cycles[on, req[on]] / self.cycle_scale
        out[np.flatnonzero(on), 2 + req[on]] = 1.0
        return out.ravel()

    def requested_cached(self, sub: SlotSubproblem, cache) -> np.ndarray:
        """(K, I) indicator that user i's requested service is cached in the group."""
        cache = np.atleast_2d(cache)
        req = sub.requests
        out = np.zeros((len(cache), self.num_users))
        on = req >= 0
        out[:, on] = cache[:, req[on]]
        return out

    def groups(self, sub: SlotSubproblem, download, cache) -> np.ndarray:
        """Actor input, one row per candidate group (shared weights across groups)."""
        download, cache = np.atleast_2d(download), np.atleast_2d(cache)
        xi = np.broadcast_to(self.tasks(sub), (len(cache), self.task_dim))
        return np.hstack([xi, download, cache, self.requested_cached(sub, cache)]).astype(float)

    def critic(self, sub: SlotSubproblem, download, cache) -> np.ndarray:
        download, cache = np.atleast_2d(download), np.atleast_2d(cache)
        if len(cache) != self.num_samples:
            raise ValueError(f"critic expects {self.num_samples} groups, got {len(cache)}")
        return np.concatenate([self.tasks(sub), download.ravel(), cache.ravel()]).astype(float)

    def services(self, sub: SlotSubproblem) -> np.ndarray:
        """Task information plus per-service state (for the learner without the optimization stage)."""
        per = np.column_stack([
            sub.sizes / self.storage,
            _signed_log(sub.G),
            _signed_log(sub.H),
            sub.cached_prev,
            sub.case == 1, sub.case == 2, sub.case == 3,
        ]).astype(float)
        return np.concatenate([self.tasks(sub), per.ravel()])
