"""Per-slot drift-plus-penalty subproblem.

The long-term AoI constraint is tracked by one virtual queue per service.
Each slot the decision minimizes

    sum_j G_j z_j - V * sum_ij [Lambda_ij - lambda_D * Y_ij / f_ij] x_ij

where ``G_j`` folds the caching and downloading terms once the download
decision has been fixed by the three-case rule in :func:`classify_and_gain`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .delay_alloc import backhaul_delay, cloud_delay, sqrt_share
from .model import Services, TaskBatch

FRESH_NEEDED, REFRESH_WORTHWHILE, KEEP_STALE = 1, 2, 3
FEAS_RTOL = 1e-9


class InfeasibleDecision(ValueError):
    pass


def drift_coefficients(queue, aoi_cs, aoi_es_prev, aoi_max):
    """Return ``(H, I_const)``: the decision-dependent and constant parts of the drift bound."""
    Q = np.asarray(queue, float)
    Ac = np.asarray(aoi_cs, float)
    stale = np.asarray(aoi_es_prev, float) + 1.0
    Am = np.asarray(aoi_max, float)
    H = (stale ** 2 - Ac ** 2) / 2.0 + Q * (stale - Ac)
    I_const = (Am ** 2 + Ac ** 2) / 2.0 - Q * (Am - Ac)
    return H, I_const


def classify_and_gain(cached_prev, purchase, refresh, H, V, lambda_p):
    """Case tag, effective cache weight G and the price paid on download."""
    prev = np.asarray(cached_prev) > 0
    H = np.asarray(H, float)
    p_eff = np.where(prev, refresh, purchase).astype(float)
    refresh_weight = V * lambda_p * np.asarray(refresh, float)
    case = np.where(~prev, FRESH_NEEDED,
                    np.where(refresh_weight - H < 0, REFRESH_WORTHWHILE, KEEP_STALE))
    G = np.where(case == KEEP_STALE, H, V * lambda_p * p_eff)
    return case.astype(int), G, p_eff


def derive_download(case, cache) -> np.ndarray:
    z = np.asarray(cache, int)
    return np.where(np.asarray(case) == KEEP_STALE, 0, z)


@dataclass
class SlotSubproblem:
    H: np.ndarray
    I_const: np.ndarray
    G: np.ndarray
    case: np.ndarray
    p_eff: np.ndarray
    Lam: np.ndarray  # (I, J) offload-avoidance gain per task
    cycles: np.ndarray  # (I, J)
    requests: np.ndarray  # (I,), -1 when the user is idle
    sizes: np.ndarray
    cached_prev: np.ndarray
    V: float
    lambda_D: float
    lambda_p: float
    storage: float
    compute: float

    @property
    def num_users(self) -> int:
        return self.Lam.shape[0]

    @property
    def num_services(self) -> int:
        return self.Lam.shape[1]

    @property
    def present(self) -> np.ndarray:
        return self.cycles > 0


def build_subproblem(cfg, services: Services, tasks: TaskBatch, queue, aoi_max) -> SlotSubproblem:
    H, I_const = drift_coefficients(queue, services.aoi_cs, services.aoi_es, aoi_max)
    V = cfg.lyapunov_V
    case, G, p_eff = classify_and_gain(services.cached, services.purchase_price, services.refresh_price,
                                       H, V, cfg.lambda_p)
    Lam = (cfg.lambda_D * (backhaul_delay(tasks, cfg.es_cs_rate) + cloud_delay(tasks, cfg.cloud_rate_per_task))
           + cfg.lambda_c * cfg.lambda_s * tasks.up)
    Lam = np.where(tasks.present, Lam, 0.0)
    return SlotSubproblem(H, I_const, G, case, p_eff, Lam, tasks.cycles.copy(), tasks.requests(),
                          services.size.copy(), np.asarray(services.cached, int).copy(), V, cfg.lambda_D,
                          cfg.lambda_p, cfg.storage_capacity, cfg.compute_capacity)


def closed_form_compute(sub: SlotSubproblem, offload) -> np.ndarray:
    return sqrt_share(sub.cycles * np.asarray(offload), sub.compute)


def check_feasible(sub: SlotSubproblem, offload, cache, compute=None) -> None:
    x = np.asarray(offload)
    z = np.asarray(cache)
    if np.any(x > z[None, :]):
        raise InfeasibleDecision("offload to the ES without caching")
    if np.dot(sub.sizes, z) > sub.storage * (1 + FEAS_RTOL):
        raise InfeasibleDecision("storage capacity exceeded")
    if compute is not None and (np.any(compute < 0) or np.sum(compute) > sub.compute * (1 + FEAS_RTOL)):
        raise InfeasibleDecision("computing capacity exceeded")


def p2_objective(sub: SlotSubproblem, offload, cache, compute=None) -> float:
    """Per-slot objective (smaller is better); compute defaults to the closed form."""
    x = np.asarray(offload, float) * sub.present
    z = np.asarray(cache, float)
    check_feasible(sub, x, z, compute)
    f = closed_form_compute(sub, x) if compute is None else np.asarray(compute, float)
    local = x > 0
    if np.any(local & (f <= 0)):
        raise InfeasibleDecision("local task without computing rate")
    delay = np.zeros_like(x)
    delay[local] = sub.cycles[local] / f[local]
    return float(np.dot(sub.G, z) - sub.V * np.sum((sub.Lam - sub.lambda_D * delay) * x))


def reward(sub: SlotSubproblem, offload, cache, compute=None) -> float:
    return -p2_objective(sub, offload, cache, compute)


def drift_bound(sub: SlotSubproblem, offload, cache, compute=None) -> float:
    """Right-hand side of the drift-plus-penalty bound for a decision (I_const included)."""
    return p2_objective(sub, offload, cache, compute) + float(np.sum(sub.I_const))
