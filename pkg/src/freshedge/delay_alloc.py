"""Delay model, slot cost/utility, and the closed-form resource allocations.

All functions are pure and vectorized over (user, service) arrays.
Allocations give a task a share proportional to the square root of its
load, which is the Lagrangian solution of ``min sum load/alloc`` under a
single budget.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import SlotDecision, TaskBatch


class ZeroAllocationError(ArithmeticError):
    """A present task was given zero bandwidth or compute."""


def sqrt_share(load: np.ndarray, budget: float) -> np.ndarray:
    load = np.asarray(load, float)
    root = np.sqrt(np.clip(load, 0.0, None))
    total = root.sum()
    if total <= 0:
        return np.zeros_like(root)
    return budget * root / total


def allocate_bandwidth(tasks: TaskBatch, eta_up, eta_down, bw_up: float, bw_down: float):
    """Uplink/downlink split minimizing the total transmission delay.

    ``eta_*`` are per-user efficiencies (bytes/s/Hz); tasks of size zero get
    nothing and do not enter the normalization.
    """
    eta_up = np.asarray(eta_up, float).reshape(-1, 1)
    eta_down = np.asarray(eta_down, float).reshape(-1, 1)
    w_u = sqrt_share(tasks.up / eta_up, bw_up)
    w_d = sqrt_share(tasks.down / eta_down, bw_down)
    return w_u, w_d


def allocate_compute(tasks: TaskBatch, offload, capacity: float) -> np.ndarray:
    """ES computing rates for the locally processed tasks (x = 1)."""
    return sqrt_share(tasks.cycles * np.asarray(offload), capacity)


def _ratio(num, den, what):
    num = np.asarray(num, float)
    den = np.broadcast_to(np.asarray(den, float), num.shape)
    bad = (num > 0) & (den <= 0)
    if np.any(bad):
        raise ZeroAllocationError(f"present task has zero {what}")
    out = np.zeros(num.shape)
    ok = num > 0
    out[ok] = num[ok] / den[ok]
    return out


def transmission_delays(tasks: TaskBatch, w_u, w_d, eta_up, eta_down):
    eta_up = np.asarray(eta_up, float).reshape(-1, 1)
    eta_down = np.asarray(eta_down, float).reshape(-1, 1)
    d_up = _ratio(tasks.up, eta_up * w_u, "uplink bandwidth")
    d_down = _ratio(tasks.down, eta_down * w_d, "downlink bandwidth")
    return d_up, d_down


def local_delay(tasks: TaskBatch, w_u, w_d, f_e, eta_up, eta_down) -> np.ndarray:
    """Uplink + ES processing + downlink delay, seconds."""
    d_up, d_down = transmission_delays(tasks, w_u, w_d, eta_up, eta_down)
    return d_up + _ratio(tasks.cycles, f_e, "computing rate") + d_down


def backhaul_delay(tasks: TaskBatch, es_cs_rate: float) -> np.ndarray:
    return (tasks.up + tasks.down) / es_cs_rate


def cloud_delay(tasks: TaskBatch, cloud_rate: float) -> np.ndarray:
    return tasks.cycles / cloud_rate


def offload_delay(tasks: TaskBatch, w_u, w_d, es_cs_rate, cloud_rate, eta_up, eta_down) -> np.ndarray:
    """Uplink + ES-CS transfer + cloud processing + downlink delay, seconds."""
    d_up, d_down = transmission_delays(tasks, w_u, w_d, eta_up, eta_down)
    return d_up + backhaul_delay(tasks, es_cs_rate) + cloud_delay(tasks, cloud_rate) + d_down


@dataclass
class CostBreakdown:
    cost: float
    utility: float
    cost_offload_baseline: float
    delays: np.ndarray
    delay_local: np.ndarray
    delay_offload: np.ndarray


def effective_price(purchase, refresh, cached_prev):
    """Price paid when downloading: refresh price if cached last slot."""
    cached_prev = np.asarray(cached_prev)
    return np.where(cached_prev > 0, refresh, purchase).astype(float)


def slot_cost_and_utility(tasks: TaskBatch, decision: SlotDecision, prices, cfg) -> CostBreakdown:
    """Total ES cost C(t) and utility U(t) of one slot.

    ``prices`` is the per-service effective price (see :func:`effective_price`).
    ``cfg`` supplies the weights, link rates and efficiencies (an EnvConfig).
    """
    eta_up, eta_down = cfg.byte_efficiency()
    x = np.asarray(decision.offload, float)
    y = np.asarray(decision.download, float)
    present = tasks.present
    w_u, w_d, f_e = decision.bw_up, decision.bw_down, decision.compute
    d_off = np.where(present, offload_delay(tasks, w_u, w_d, cfg.es_cs_rate, cfg.cloud_rate_per_task,
                                            eta_up, eta_down), 0.0)
    d_loc = np.zeros_like(d_off)
    local = present & (x > 0)
    if local.any():
        f_eff = np.where(local, f_e, 0.0)
        t_loc = tasks.cycles * local
        masked = TaskBatch(tasks.up * local, tasks.down * local, t_loc)
        d_loc = local_delay(masked, w_u, w_d, f_eff, eta_up, eta_down)
    delays = np.where(local, d_loc, d_off)
    compute_cost = cfg.lambda_s * tasks.up * (1 - x)
    price_cost = cfg.lambda_p * float(np.dot(prices, y))
    cost = float(np.sum(cfg.lambda_D * delays + cfg.lambda_c * compute_cost) + price_cost)

    baseline = float(np.sum(cfg.lambda_D * d_off + cfg.lambda_c * cfg.lambda_s * tasks.up))
    compute_delay = np.zeros_like(d_off)
    if local.any():
        compute_delay[local] = tasks.cycles[local] / f_e[local]
    gain = (cfg.lambda_D * (backhaul_delay(tasks, cfg.es_cs_rate) + cloud_delay(tasks, cfg.cloud_rate_per_task)
                            - compute_delay) + cfg.lambda_c * cfg.lambda_s * tasks.up) * x
    utility = float(np.sum(gain * present) - price_cost)
    return CostBreakdown(cost, utility, baseline, delays, d_loc, d_off)
