"""Per-slot decision policies: exhaustive oracle, SDR rounding, JSCR-style search, fixed caching.

All policies take a :class:`SlotSubproblem` and return a :class:`PolicyDecision`
holding binary offload/download/cache decisions plus the closed-form compute
rates; :func:`to_slot_decision` adds the bandwidth allocation for the env.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field

import numpy as np

from . import sdr
from .env import complete_decision
from .lyapunov import FEAS_RTOL, KEEP_STALE, SlotSubproblem, closed_form_compute, derive_download

ORACLE_LIMIT = 22
JSCR_MAX_ROUNDS = 50
ROUND_DOWN_TOL = 1e-6


class PolicyKind(enum.Enum):
    OIODRL = "oiodrl"
    OPTIMAL = "optimal"
    PPO_ONLY = "ppo_only"
    SDP_ONLY = "sdp_only"
    JSCR = "jscr"
    FIXED = "fixed"

    @classmethod
    def parse(cls, name: str) -> "PolicyKind":
        key = name.strip().lower().replace("-", "_")
        for kind in cls:
            if kind.value == key:
                return kind
        raise ValueError(f"unknown policy {name!r}; choose from {[k.value for k in cls]}")


class OracleTooLarge(ValueError):
    pass


class InvalidDecision(ValueError):
    pass


@dataclass
class PolicyDecision:
    offload: np.ndarray  # (I, J)
    download: np.ndarray  # (J,)
    cache: np.ndarray  # (J,)
    compute: np.ndarray  # (I, J)
    value: float
    info: dict = field(default_factory=dict)


def objective_value(sub: SlotSubproblem, offload, cache) -> float:
    """P2 objective with closed-form compute: sum_ij Y/f = (sum sqrt(Y x))^2 / F."""
    x = np.asarray(offload, float) * sub.present
    z = np.asarray(cache, float)
    root = np.sqrt(sub.cycles * x).sum()
    return float(np.dot(sub.G, z) - sub.V * np.sum(sub.Lam * x)
                 + sub.V * sub.lambda_D * root * root / sub.compute)


def make_decision(sub: SlotSubproblem, offload, cache, **info) -> PolicyDecision:
    z = np.asarray(cache, int)
    x = np.asarray(offload, int) * sub.present
    return PolicyDecision(x, derive_download(sub.case, z), z, closed_form_compute(sub, x),
                          objective_value(sub, x, z), dict(info))


def validate_decision(sub: SlotSubproblem, d: PolicyDecision) -> None:
    """Shared check of every decision invariant against the subproblem."""
    x, y, z = d.offload, d.download, d.cache
    for name, arr in (("offload", x), ("download", y), ("cache", z)):
        if not np.all((arr == 0) | (arr == 1)):
            raise InvalidDecision(f"{name} is not binary")
    if np.any(x > z[None, :]):
        raise InvalidDecision("offload to the ES without caching")
    if np.any(x > sub.present):
        raise InvalidDecision("offload decision for an absent task")
    if np.dot(sub.sizes, z) > sub.storage * (1 + FEAS_RTOL):
        raise InvalidDecision("storage capacity exceeded")
    prev = sub.cached_prev > 0
    if np.any(~prev & (y != z)) or np.any(prev & (y > z)):
        raise InvalidDecision("download/cache coupling violated")
    if np.any((sub.case == KEEP_STALE) & (y == 1)):
        raise InvalidDecision("refresh in the keep-stale case")
    if np.any(d.compute < 0) or d.compute.sum() > sub.compute * (1 + FEAS_RTOL):
        raise InvalidDecision("computing capacity exceeded")
    if np.any((x == 0) & (d.compute > 0)):
        raise InvalidDecision("compute allocated to an offloaded task")


def to_slot_decision(d: PolicyDecision, tasks, cfg):
    return complete_decision(tasks, d.offload, d.download, d.cache, cfg)


def _all_binary(n: int) -> np.ndarray:
    """All 0/1 vectors of length n in lexicographic order, shape (2**n, n)."""
    return np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.int64).reshape(2 ** n, n)


def oracle_solve_p2(sub: SlotSubproblem) -> PolicyDecision:
    """Exhaustive minimisation of P2 over storage-feasible caches and offloads.

    Offload patterns only range over present tasks whose service is cached.
    Ties go to the lexicographically smallest (z, x) in enumeration order.
    """
    I, J = sub.num_users, sub.num_services
    if I + J > ORACLE_LIMIT:
        raise OracleTooLarge(f"exhaustive search limited to I+J <= {ORACLE_LIMIT}, got {I + J}")
    Z = _all_binary(J)
    Z = Z[Z @ sub.sizes <= sub.storage * (1 + FEAS_RTOL)]
    users = np.flatnonzero(sub.requests >= 0)
    req = sub.requests[users]
    lam = sub.Lam[users, req]
    root = np.sqrt(sub.cycles[users, req])
    M = _all_binary(len(users))
    X = Z[:, None, req] * M[None, :, :]  # (nz, nm, n_users)
    vals = ((Z @ sub.G)[:, None] - sub.V * (X @ lam)
            + sub.V * sub.lambda_D * (X @ root) ** 2 / sub.compute)
    k = int(np.argmin(vals.ravel()))
    iz, im = divmod(k, len(M))
    x = np.zeros((I, J), int)
    x[users, req] = X[iz, im]
    return make_decision(sub, x, Z[iz].astype(int))


def _round(sub, rel, threshold, rng):
    z_prob, x_prob = sdr.extract_relaxed_decisions(rel.U, sub.num_users)
    z = (z_prob >= threshold).astype(int)
    z = sdr.repair_storage(z, sub.sizes, sub.storage, rng)
    x = (x_prob >= threshold).astype(int) * sub.present * z[None, :]
    return x, z, z_prob, x_prob


def _relaxation_info(rel) -> dict:
    return {"sdp_objective": rel.objective, "certificate": rel.certificate, "sdp_skipped": rel.skipped}


def sdp_only_decide(sub: SlotSubproblem, rng: np.random.Generator, relaxed=None) -> PolicyDecision:
    """Threshold the SDP relaxation at 0.5, repair storage at random, mask offloads."""
    rel = relaxed if relaxed is not None else sdr.solve_relaxation(sub)
    x, z, _, _ = _round(sub, rel, 0.5, rng)
    return make_decision(sub, x, z, **_relaxation_info(rel))


def _best_z_flip(sub, x, z):
    """Best single cache flip; adding serves the service's requests locally, removing offloads them."""
    best = (objective_value(sub, x, z), None)
    for j in range(sub.num_services):
        z2 = z.copy()
        z2[j] ^= 1
        if np.dot(sub.sizes, z2) > sub.storage * (1 + FEAS_RTOL):
            continue
        x2 = x.copy()
        x2[:, j] = sub.present[:, j] if z2[j] else 0
        v = objective_value(sub, x2, z2)
        if v < best[0] - 1e-12 * max(1.0, abs(best[0])):
            best = (v, (x2, z2))
    return best[1]


def _best_x_flip(sub, x, z):
    best = (objective_value(sub, x, z), None)
    for i, j in zip(*np.nonzero(sub.present * z[None, :])):
        x2 = x.copy()
        x2[i, j] ^= 1
        v = objective_value(sub, x2, z)
        if v < best[0] - 1e-12 * max(1.0, abs(best[0])):
            best = (v, x2)
    return best[1]


def local_search(sub: SlotSubproblem, x, z, max_rounds: int = JSCR_MAX_ROUNDS):
    """Alternate best cache flips and best offload flips while the objective decreases."""
    x, z = np.array(x, int), np.array(z, int)
    trajectory = [objective_value(sub, x, z)]
    for _ in range(max_rounds):
        moved = False
        step = _best_z_flip(sub, x, z)
        if step is not None:
            x, z = step
            moved = True
        while True:
            x2 = _best_x_flip(sub, x, z)
            if x2 is None:
                break
            x, moved = x2, True
        trajectory.append(objective_value(sub, x, z))
        if not moved:
            break
    return x, z, trajectory


def jscr_decide(sub: SlotSubproblem, rng: np.random.Generator, relaxed=None) -> PolicyDecision:
    """JSCR-style: round the relaxation down, then alternate cache and offload improvements."""
    rel = relaxed if relaxed is not None else sdr.solve_relaxation(sub)
    x, z, _, _ = _round(sub, rel, 1.0 - ROUND_DOWN_TOL, rng)
    x, z, traj = local_search(sub, x, z)
    return make_decision(sub, x, z, trajectory=traj, **_relaxation_info(rel))


def fixed_cache(sub: SlotSubproblem, service_set) -> np.ndarray:
    z = np.zeros(sub.num_services, int)
    z[list(service_set)] = 1
    while np.dot(sub.sizes, z) > sub.storage * (1 + FEAS_RTOL):
        cached = np.flatnonzero(z)
        z[cached[np.argmax(sub.sizes[cached])]] = 0
    return z


def fixed_decide(sub: SlotSubproblem, service_set) -> PolicyDecision:
    """Always cache ``service_set`` and serve its requests locally."""
    if len(service_set) == 0:
        raise ValueError("fixed service set must be nonempty")
    if min(service_set) < 0 or max(service_set) >= sub.num_services:
        raise ValueError("fixed service index out of range")
    z = fixed_cache(sub, service_set)
    x = sub.present * z[None, :]
    return make_decision(sub, x, z)
