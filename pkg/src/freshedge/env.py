"""Slotted MEC environment: service/task processes, AoI and virtual queues."""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import truncnorm

from . import delay_alloc
from .config import EnvConfig
from .model import Services, SlotDecision, SlotOutcome, TaskBatch
from .rng import keyed_rng

FEAS_RTOL = 1e-9


class ConstraintViolation(ValueError):
    def __init__(self, constraint: str, detail: str = ""):
        self.constraint = constraint
        super().__init__(f"{constraint} constraint violated" + (f": {detail}" if detail else ""))


def initial_services(cfg: EnvConfig, rng: np.random.Generator) -> Services:
    J = cfg.num_services
    size = rng.uniform(*cfg.service_size_range, size=J)
    purchase = rng.uniform(*cfg.purchase_price_range, size=J)
    zeros = np.zeros(J)
    return Services(size, purchase, cfg.refresh_price_ratio * purchase, zeros.copy(), zeros.copy(),
                    np.zeros(J, int))


def draw_aoi_thresholds(cfg: EnvConfig, rng: np.random.Generator) -> np.ndarray:
    if cfg.aoi_thresholds:
        return np.asarray(cfg.aoi_thresholds, float)
    return rng.uniform(*cfg.aoi_threshold_range, size=cfg.num_services)


def advance_services(services: Services, rng: np.random.Generator, cfg: EnvConfig) -> Services:
    """Move the CS side one slot forward: AoI resets on update, sizes are redrawn."""
    out = services.copy()
    updated = rng.random(services.num_services) < cfg.cs_update_prob
    out.aoi_cs = np.where(updated, 0.0, services.aoi_cs + 1.0)
    out.size = rng.uniform(*cfg.service_size_range, size=services.num_services)
    return out


def generate_tasks(cfg: EnvConfig, rng: np.random.Generator) -> TaskBatch:
    I, J = cfg.num_users, cfg.num_services
    requests = rng.integers(J, size=I)
    a = (cfg.task_size_min - cfg.task_size_mean) / cfg.task_size_std
    b = (cfg.task_size_max - cfg.task_size_mean) / cfg.task_size_std
    sizes = truncnorm.rvs(a, b, loc=cfg.task_size_mean, scale=cfg.task_size_std, size=I, random_state=rng)
    sizes = np.clip(sizes, cfg.task_size_min, cfg.task_size_max)
    tasks = TaskBatch.empty(I, J)
    users = np.arange(I)
    tasks.up[users, requests] = sizes
    tasks.down[users, requests] = cfg.result_size_ratio * sizes
    tasks.cycles[users, requests] = cfg.cycles_per_byte * sizes
    return tasks


def update_aoi(cache, download, aoi_cs, aoi_es_prev) -> np.ndarray:
    """ES-side AoI after the slot's caching/downloading decision."""
    z = np.asarray(cache)
    y = np.asarray(download)
    if np.any((z == 0) & (y == 1)):
        raise ConstraintViolation("coupling", "download without caching")
    aoi_cs = np.asarray(aoi_cs, float)
    kept = (z == 1) & (y == 0)
    return np.where(kept, np.asarray(aoi_es_prev, float) + 1.0, aoi_cs)


def update_queue(queue, aoi_es, aoi_max) -> np.ndarray:
    return np.maximum(np.asarray(queue, float) - aoi_max + aoi_es, 0.0)


def complete_decision(tasks: TaskBatch, offload, download, cache, cfg: EnvConfig) -> SlotDecision:
    """Attach the closed-form bandwidth and compute allocations to binary decisions."""
    eta_up, eta_down = cfg.byte_efficiency()
    x = np.asarray(offload, int) * tasks.present
    w_u, w_d = delay_alloc.allocate_bandwidth(tasks, eta_up, eta_down, cfg.uplink_bw, cfg.downlink_bw)
    f_e = delay_alloc.allocate_compute(tasks, x, cfg.compute_capacity)
    return SlotDecision(x, np.asarray(download, int), np.asarray(cache, int), w_u, w_d, f_e)


def check_decision(decision: SlotDecision, tasks: TaskBatch, services: Services, cfg: EnvConfig) -> None:
    x, y, z = decision.offload, decision.download, decision.cache
    for name, arr in (("offload", x), ("download", y), ("cache", z)):
        if not np.all((arr == 0) | (arr == 1)):
            raise ConstraintViolation("binary", f"{name} is not binary")
    if np.any(x > z[None, :]):
        raise ConstraintViolation("offload", "task processed at the ES without a cached service")
    if np.dot(services.size, z) > cfg.storage_capacity * (1 + FEAS_RTOL):
        raise ConstraintViolation("storage")
    prev = services.cached
    if np.any((prev == 0) & (y != z)):
        raise ConstraintViolation("coupling", "uncached service must be downloaded iff cached")
    if np.any((prev == 1) & (y > z)):
        raise ConstraintViolation("coupling", "download without caching")
    for name, arr, budget in (("compute", decision.compute, cfg.compute_capacity),
                              ("bandwidth", decision.bw_up, cfg.uplink_bw),
                              ("bandwidth", decision.bw_down, cfg.downlink_bw)):
        if arr is None:
            raise ConstraintViolation(name, "allocation missing")
        if np.any(arr < 0) or arr.sum() > budget * (1 + FEAS_RTOL):
            raise ConstraintViolation(name)


@dataclass
class Trace:
    """Exogenous realisation of a run: tasks, service sizes, CS AoI, prices, thresholds."""

    aoi_max: np.ndarray
    purchase_price: np.ndarray
    refresh_price: np.ndarray
    sizes: list = field(default_factory=list)
    aoi_cs: list = field(default_factory=list)
    tasks: list = field(default_factory=list)

    def __len__(self):
        return len(self.tasks)

    def dump(self, directory: str | os.PathLike) -> None:
        """Write ``tasks.csv`` (slot, user) and ``services.csv`` (slot, service)."""
        os.makedirs(directory, exist_ok=True)
        with open(os.path.join(directory, "tasks.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["slot", "user", "service", "up", "down", "cycles"])
            for t, tb in enumerate(self.tasks):
                req = tb.requests()
                for i, j in enumerate(req):
                    if j < 0:
                        w.writerow([t, i, -1, 0.0, 0.0, 0.0])
                    else:
                        vals = (tb.up[i, j], tb.down[i, j], tb.cycles[i, j])
                        w.writerow([t, i, j, *(repr(float(v)) for v in vals)])
        with open(os.path.join(directory, "services.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["slot", "service", "size", "purchase_price", "refresh_price", "aoi_cs", "aoi_max"])
            for t in range(len(self.tasks)):
                for j in range(len(self.aoi_max)):
                    vals = (self.sizes[t][j], self.purchase_price[j], self.refresh_price[j], self.aoi_cs[t][j],
                            self.aoi_max[j])
                    w.writerow([t, j, *(repr(float(v)) for v in vals)])

    @classmethod
    def load(cls, directory: str | os.PathLike, num_users: int, num_services: int) -> "Trace":
        with open(os.path.join(directory, "services.csv")) as fh:
            rows = list(csv.DictReader(fh))
        T = max(int(r["slot"]) for r in rows) + 1
        sizes = np.zeros((T, num_services))
        aoi = np.zeros((T, num_services))
        pp = np.zeros(num_services)
        pr = np.zeros(num_services)
        amax = np.zeros(num_services)
        for r in rows:
            t, j = int(r["slot"]), int(r["service"])
            sizes[t, j] = float(r["size"])
            aoi[t, j] = float(r["aoi_cs"])
            pp[j], pr[j], amax[j] = float(r["purchase_price"]), float(r["refresh_price"]), float(r["aoi_max"])
        tasks = [TaskBatch.empty(num_users, num_services) for _ in range(T)]
        with open(os.path.join(directory, "tasks.csv")) as fh:
            for r in csv.DictReader(fh):
                j = int(r["service"])
                if j < 0:
                    continue
                tb = tasks[int(r["slot"])]
                i = int(r["user"])
                tb.up[i, j], tb.down[i, j], tb.cycles[i, j] = float(r["up"]), float(r["down"]), float(r["cycles"])
        return cls(amax, pp, pr, list(sizes), list(aoi), tasks)


class EdgeEnv:
    """One ES serving ``num_users`` users over ``horizon`` slots.

    Slot ``t`` exposes ``services`` (with the CS AoI of slot t and the ES AoI
    and cache of slot t-1), ``tasks`` and ``queue``; :meth:`step` applies a
    decision and moves to slot t+1. With ``trace`` given, the exogenous
    processes are replayed instead of sampled.
    """

    def __init__(self, cfg: EnvConfig, seed: int | None = None, trace: Trace | None = None):
        self.cfg = cfg
        self.seed = cfg.rng_seed if seed is None else seed
        self._replay = trace
        self.reset()

    def reset(self) -> None:
        cfg = self.cfg
        self.t = 0
        self.queue = np.zeros(cfg.num_services)
        if self._replay is None:
            self._rng_services = keyed_rng(self.seed, "services")
            self._rng_tasks = keyed_rng(self.seed, "tasks")
            self.services = initial_services(cfg, keyed_rng(self.seed, "prices"))
            self.aoi_max = draw_aoi_thresholds(cfg, keyed_rng(self.seed, "aoi_thresholds"))
            self.tasks = generate_tasks(cfg, self._rng_tasks)
            self.trace = Trace(self.aoi_max.copy(), self.services.purchase_price.copy(),
                               self.services.refresh_price.copy())
        else:
            tr = self._replay
            J = cfg.num_services
            self.aoi_max = np.asarray(tr.aoi_max, float)
            self.services = Services(np.array(tr.sizes[0], float), np.array(tr.purchase_price, float),
                                     np.array(tr.refresh_price, float), np.array(tr.aoi_cs[0], float),
                                     np.array(tr.aoi_cs[0], float), np.zeros(J, int))
            self.tasks = tr.tasks[0]
            self.trace = tr
        self.services.aoi_es = self.services.aoi_cs.copy()
        if self._replay is None:
            self._record()

    def _record(self) -> None:
        self.trace.sizes.append(self.services.size.copy())
        self.trace.aoi_cs.append(self.services.aoi_cs.copy())
        self.trace.tasks.append(self.tasks)

    @property
    def done(self) -> bool:
        return self.t >= self.cfg.horizon

    def prices(self) -> np.ndarray:
        s = self.services
        return delay_alloc.effective_price(s.purchase_price, s.refresh_price, s.cached)

    def step(self, decision: SlotDecision) -> SlotOutcome:
        if self.done:
            raise RuntimeError("episode finished; call reset()")
        cfg, s = self.cfg, self.services
        check_decision(decision, self.tasks, s, cfg)
        prices = self.prices()
        cb = delay_alloc.slot_cost_and_utility(self.tasks, decision, prices, cfg)
        aoi_es = update_aoi(decision.cache, decision.download, s.aoi_cs, s.aoi_es)
        self.queue = update_queue(self.queue, aoi_es, self.aoi_max)
        outcome = SlotOutcome(cb.cost, cb.utility, cb.cost_offload_baseline, cb.delays, aoi_es,
                              self.queue.copy(), prices)
        nxt = s.copy()
        nxt.aoi_es = aoi_es
        nxt.cached = np.asarray(decision.cache, int).copy()
        self.t += 1
        if not self.done:
            if self._replay is None:
                nxt = advance_services(nxt, self._rng_services, cfg)
                self.services = nxt
                self.tasks = generate_tasks(cfg, self._rng_tasks)
                self._record()
            else:
                nxt.size = np.array(self._replay.sizes[self.t], float)
                nxt.aoi_cs = np.array(self._replay.aoi_cs[self.t], float)
                self.services = nxt
                self.tasks = self._replay.tasks[self.t]
        else:
            self.services = nxt
        return outcome
