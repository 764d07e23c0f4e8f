"""Plain data containers shared by the environment, the allocators and the policies."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Services:
    """Per-service state, one array entry per service type."""

    size: np.ndarray
    purchase_price: np.ndarray
    refresh_price: np.ndarray
    aoi_cs: np.ndarray
    aoi_es: np.ndarray  # ES-side AoI after the previous slot
    cached: np.ndarray  # caching decision of the previous slot

    @property
    def num_services(self) -> int:
        return len(self.size)

    def copy(self) -> "Services":
        return Services(*(np.array(getattr(self, n)) for n in
                          ("size", "purchase_price", "refresh_price", "aoi_cs", "aoi_es", "cached")))


@dataclass
class TaskBatch:
    """Tasks of one slot; arrays are (num_users, num_services)."""

    up: np.ndarray
    down: np.ndarray
    cycles: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.up.shape

    @property
    def present(self) -> np.ndarray:
        return self.up > 0

    def requests(self) -> np.ndarray:
        """Requested service per user, -1 for users without a task."""
        req = np.argmax(self.present, axis=1)
        req[~self.present.any(axis=1)] = -1
        return req

    @classmethod
    def empty(cls, num_users: int, num_services: int) -> "TaskBatch":
        z = np.zeros((num_users, num_services))
        return cls(z.copy(), z.copy(), z.copy())

    def validate(self) -> None:
        if np.any(self.present.sum(axis=1) > 1):
            raise ValueError("a user requests more than one service in a slot")
        absent = ~self.present
        if np.any(self.down[absent] != 0) or np.any(self.cycles[absent] != 0):
            raise ValueError("absent task carries nonzero downlink size or cycles")


@dataclass
class SlotDecision:
    offload: np.ndarray  # x[i, j], 1 = processed at the ES
    download: np.ndarray  # y[j]
    cache: np.ndarray  # z[j]
    bw_up: np.ndarray | None = None
    bw_down: np.ndarray | None = None
    compute: np.ndarray | None = None

    @classmethod
    def zeros(cls, num_users: int, num_services: int) -> "SlotDecision":
        return cls(np.zeros((num_users, num_services), int), np.zeros(num_services, int),
                   np.zeros(num_services, int), np.zeros((num_users, num_services)),
                   np.zeros((num_users, num_services)), np.zeros((num_users, num_services)))


@dataclass
class SlotOutcome:
    cost: float
    utility: float
    cost_offload_baseline: float  # C'(t): cost if everything were offloaded
    delays: np.ndarray
    aoi_es: np.ndarray
    queue: np.ndarray
    prices: np.ndarray = field(default_factory=lambda: np.zeros(0))
