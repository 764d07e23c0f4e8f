"""QCQP lifting of the slot subproblem, its SDP relaxation, and sampling.

Each service j owns a lifted vector

    u_j = [z, x_1..x_I, f_1..f_I, Dbar_1..Dbar_I, 1]      (length 3I+2)

where ``Dbar_i`` upper-bounds the ES processing delay ``Y_ij x_i / f_i``.
The relaxation replaces ``u_j u_j^T`` by a PSD matrix ``U_j``; the last row
of ``U_j`` then carries relaxed caching/offloading probabilities.
"""
from __future__ import annotations

import hashlib
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from . import lyapunov
from .lyapunov import SlotSubproblem, derive_download
from .matrixio import dump_matrices
from .sdp_solver import Constraint, SdpInstance, SolveCertificate, solve_sdp

EXTRACT_TOL = 1e-6


class ExtractionError(ValueError):
    pass


def layout(num_users: int) -> dict:
    I = num_users
    return {"z": 0, "x": 1, "f": 1 + I, "d": 1 + 2 * I, "one": 3 * I + 1, "n": 3 * I + 2}


def _from_linear(b):
    """Symmetric matrix F with u^T F u = b . v for u = [v, 1]."""
    n = len(b) + 1
    F = np.zeros((n, n))
    F[:-1, -1] = F[-1, :-1] = np.asarray(b, float) / 2
    return F


@dataclass
class QcqpInstance:
    objective: np.ndarray  # (J, n, n)
    storage: np.ndarray  # (J, n, n)
    compute: np.ndarray  # (n, n), same for every service
    offload_le_cache: np.ndarray  # (I, n, n): x_i - z <= 0
    binary_x: np.ndarray  # (I, n, n): x_i - x_i^2 = 0
    binary_z: np.ndarray  # (n, n): z - z^2 = 0
    aux_delay: np.ndarray  # (J, I, n, n): Y x_i - f_i Dbar_i <= 0
    z_cap: np.ndarray  # (n, n): z <= 1
    storage_budget: float
    compute_budget: float

    @property
    def dim(self) -> int:
        return self.objective.shape[-1]

    def matrices(self) -> dict:
        out = {"compute": self.compute, "binary_z": self.binary_z, "z_cap": self.z_cap}
        for j in range(len(self.objective)):
            out[f"objective[{j}]"] = self.objective[j]
            out[f"storage[{j}]"] = self.storage[j]
            for i in range(len(self.binary_x)):
                out[f"aux_delay[{j},{i}]"] = self.aux_delay[j, i]
        for i in range(len(self.binary_x)):
            out[f"offload_le_cache[{i}]"] = self.offload_le_cache[i]
            out[f"binary_x[{i}]"] = self.binary_x[i]
        out["budgets"] = np.array([[self.storage_budget, self.compute_budget]])
        return out

    def dump(self) -> str:
        return dump_matrices(self.matrices())


def build_qcqp(sub: SlotSubproblem) -> QcqpInstance:
    I, J = sub.num_users, sub.num_services
    if sub.Lam.shape != sub.cycles.shape or len(sub.G) != J or len(sub.sizes) != J:
        raise ValueError("subproblem arrays have inconsistent dimensions")
    L = layout(I)
    n = L["n"]
    xs = slice(L["x"], L["x"] + I)
    fs = slice(L["f"], L["f"] + I)
    ds = slice(L["d"], L["d"] + I)

    objective = np.zeros((J, n, n))
    storage = np.zeros((J, n, n))
    aux = np.zeros((J, I, n, n))
    for j in range(J):
        b = np.zeros(n - 1)
        b[L["z"]] = sub.G[j]
        b[xs] = -sub.V * sub.Lam[:, j]
        b[ds] = sub.V * sub.lambda_D
        objective[j] = _from_linear(b)
        bs = np.zeros(n - 1)
        bs[L["z"]] = sub.sizes[j]
        storage[j] = _from_linear(bs)
    bf = np.zeros(n - 1)
    bf[fs] = 1.0
    compute = _from_linear(bf)

    xz = np.zeros((I, n, n))
    bx = np.zeros((I, n, n))
    for i in range(I):
        b = np.zeros(n - 1)
        b[L["z"]] = -1.0
        b[L["x"] + i] = 1.0
        xz[i] = _from_linear(b)
        b = np.zeros(n - 1)
        b[L["x"] + i] = 1.0
        bx[i] = _from_linear(b)
        bx[i, L["x"] + i, L["x"] + i] = -1.0
        for j in range(J):
            b = np.zeros(n - 1)
            b[L["x"] + i] = sub.cycles[i, j]
            aux[j, i] = _from_linear(b)
            aux[j, i, L["f"] + i, L["d"] + i] = aux[j, i, L["d"] + i, L["f"] + i] = -0.5
    bz = np.zeros(n - 1)
    bz[L["z"]] = 1.0
    binary_z = _from_linear(bz)
    binary_z[L["z"], L["z"]] = -1.0
    z_cap = _from_linear(bz)
    return QcqpInstance(objective, storage, compute, xz, bx, binary_z, aux, z_cap,
                        float(sub.storage), float(sub.compute))


def lift(sub: SlotSubproblem, offload, cache, compute=None) -> np.ndarray:
    """Lifted vectors u_j (J, 3I+2) of a decision; Dbar is set to the actual delay."""
    I, J = sub.num_users, sub.num_services
    x = np.asarray(offload, float) * sub.present
    z = np.asarray(cache, float)
    f = lyapunov.closed_form_compute(sub, x) if compute is None else np.asarray(compute, float)
    dbar = np.zeros_like(x)
    local = x > 0
    dbar[local] = sub.cycles[local] / f[local]
    L = layout(I)
    u = np.zeros((J, L["n"]))
    u[:, L["z"]] = z
    u[:, L["x"]:L["x"] + I] = x.T
    u[:, L["f"]:L["f"] + I] = f.T
    u[:, L["d"]:L["d"] + I] = dbar.T
    u[:, L["one"]] = 1.0
    return u


def qcqp_objective(q: QcqpInstance, U) -> float:
    """sum_j Tr(F^P_j U_j); U may be lifted vectors (J, n) or matrices (J, n, n)."""
    U = np.asarray(U, float)
    if U.ndim == 2:
        U = np.einsum("ja,jb->jab", U, U)
    return float(np.einsum("jab,jab->", q.objective, U))


def delay_bounds(sub: SlotSubproblem) -> np.ndarray:
    """Upper bound on Dbar_ij at any optimum (closed-form f with every task local)."""
    root = np.sqrt(sub.cycles)
    return root * root.sum() / sub.compute


@dataclass
class Relaxation:
    """Scaled, compacted SDP for one slot plus the map back to full lifted matrices."""

    instance: SdpInstance | None
    services: list  # services with an SDP block
    keep: list  # per block: kept coordinates of the 3I+2 layout
    scale: list  # per block: diagonal variable scaling
    objective_scale: float
    num_users: int
    num_services: int

    def expand(self, X_blocks) -> np.ndarray:
        n = layout(self.num_users)["n"]
        U = np.zeros((self.num_services, n, n))
        U[:, -1, -1] = 1.0
        for blk, j in enumerate(self.services):
            d = self.scale[blk]
            k = self.keep[blk]
            U[j][np.ix_(k, k)] = d[:, None] * X_blocks[blk] * d[None, :]
        return U


def relax_to_sdp(q: QcqpInstance, sub: SlotSubproblem, compact: bool = True) -> Relaxation:
    """Semidefinite relaxation of the lifted QCQP.

    With ``compact`` only services with at least one request get a block,
    and within a block only the coordinates of requesting users are kept;
    the dropped coordinates can be fixed at zero without changing the
    optimum because their objective weight is zero (G_j >= 0).
    Two families of redundant bounds, ``f_i^2 <= F^2`` and
    ``Dbar_i^2 <= Dmax_i^2``, keep the optimal face bounded; both hold at
    every optimum of the unrelaxed problem.
    """
    I, J = sub.num_users, sub.num_services
    L = layout(I)
    n = L["n"]
    dmax = delay_bounds(sub)
    requested = sub.present.any(axis=0)
    services = [j for j in range(J) if requested[j] or not compact or sub.G[j] < 0]
    blocks, keep, scale = [], [], []
    for j in services:
        users = [i for i in range(I) if sub.present[i, j] or not compact]
        k = [L["z"]] + [L["x"] + i for i in users] + [L["f"] + i for i in users] \
            + [L["d"] + i for i in users] + [L["one"]]
        d = np.ones(len(k))
        nu = len(users)
        d[1 + nu:1 + 2 * nu] = sub.compute
        d[1 + 2 * nu:1 + 3 * nu] = [dmax[i, j] if dmax[i, j] > 0 else 1.0 for i in users]
        keep.append(np.array(k))
        scale.append(d)
        blocks.append((j, users))
    if not services:
        return Relaxation(None, [], [], [], 1.0, I, J)

    def sub_mat(M, blk):
        k, d = keep[blk], scale[blk]
        return d[:, None] * M[np.ix_(k, k)] * d[None, :]

    objective = [sub_mat(q.objective[j], blk) for blk, (j, _) in enumerate(blocks)]
    obj_scale = max(float(np.max(np.abs(C))) for C in objective) or 1.0
    objective = [C / obj_scale for C in objective]

    constraints = []

    def add(coeffs, sense, rhs):
        norm = np.sqrt(sum(np.sum(A * A) for A in coeffs.values()))
        if norm == 0:
            return
        constraints.append(Constraint({b: A / norm for b, A in coeffs.items()}, sense, rhs / norm))

    for blk, (j, users) in enumerate(blocks):
        m = len(keep[blk])
        for i in users:
            add({blk: sub_mat(q.offload_le_cache[i], blk)}, "<=", 0.0)
            add({blk: sub_mat(q.binary_x[i], blk)}, "=", 0.0)
            add({blk: sub_mat(q.aux_delay[j, i], blk)}, "<=", 0.0)
        add({blk: sub_mat(q.binary_z, blk)}, "=", 0.0)
        add({blk: sub_mat(q.z_cap, blk)}, "<=", 1.0)
        corner = np.zeros((m, m))
        corner[-1, -1] = 1.0
        add({blk: corner}, "=", 1.0)
        nu = len(users)
        for pos in range(1 + nu, 1 + 3 * nu):
            E = np.zeros((m, m))
            E[pos, pos] = 1.0
            add({blk: E}, "<=", 1.0)
    add({blk: sub_mat(q.storage[j], blk) for blk, (j, _) in enumerate(blocks)}, "<=", q.storage_budget)
    add({blk: sub_mat(q.compute, blk) for blk in range(len(blocks))}, "<=", q.compute_budget)
    inst = SdpInstance([len(k) for k in keep], objective, constraints)
    return Relaxation(inst, services, keep, scale, obj_scale, I, J)


@dataclass
class RelaxedSolution:
    U: np.ndarray  # (J, 3I+2, 3I+2)
    objective: float
    certificate: SolveCertificate | None
    max_violation: float = 0.0
    duality_gap: float = 0.0
    skipped: bool = False


def solve_relaxation(sub: SlotSubproblem, tol: float = 1e-7, compact: bool = True,
                     max_iters: int = 100) -> RelaxedSolution:
    q = build_qcqp(sub)
    rel = relax_to_sdp(q, sub, compact=compact)
    if rel.instance is None:
        U = rel.expand([])
        return RelaxedSolution(U, qcqp_objective(q, U), None, skipped=True)
    sol, cert = solve_sdp(rel.instance, tol=tol, max_iters=max_iters)
    U = rel.expand(sol.X)
    return RelaxedSolution(U, qcqp_objective(q, U), cert, cert.primal_infeasibility, cert.duality_gap)


class RelaxationCache:
    """Bounded memo of :func:`solve_relaxation` keyed by the subproblem's data.

    The solver is deterministic, so a hit returns exactly what a fresh solve
    would; this only saves time when several runs revisit the same slot.
    """

    def __init__(self, maxsize: int = 20000):
        self.maxsize = maxsize
        self._store: OrderedDict = OrderedDict()
        self.hits = self.misses = 0

    @staticmethod
    def key(sub: SlotSubproblem, tol: float) -> bytes:
        h = hashlib.sha1()
        for arr in (sub.G, sub.Lam, sub.cycles, sub.sizes, sub.case, sub.cached_prev):
            h.update(np.ascontiguousarray(arr, dtype=float).tobytes())
        h.update(np.array([sub.V, sub.lambda_D, sub.storage, sub.compute, tol]).tobytes())
        return h.digest()

    def solve(self, sub: SlotSubproblem, tol: float = 1e-7) -> "RelaxedSolution":
        k = self.key(sub, tol)
        if k in self._store:
            self.hits += 1
            self._store.move_to_end(k)
            return self._store[k]
        self.misses += 1
        rel = solve_relaxation(sub, tol)
        self._store[k] = rel
        if len(self._store) > self.maxsize:
            self._store.popitem(last=False)
        return rel


def extract_relaxed_decisions(U, num_users: int) -> tuple[np.ndarray, np.ndarray]:
    """Relaxed (z_prob[J], x_prob[I, J]) read from the last row of each U_j."""
    U = np.asarray(U, float)
    L = layout(num_users)
    if np.any(np.abs(U[:, -1, -1] - 1.0) > EXTRACT_TOL):
        raise ExtractionError("corner entry of a relaxed matrix is not 1")
    z = U[:, -1, L["z"]]
    x = U[:, -1, L["x"]:L["x"] + num_users].T
    for arr in (z, x):
        if np.any(arr < -EXTRACT_TOL) or np.any(arr > 1 + EXTRACT_TOL):
            raise ExtractionError("relaxed decision outside [0, 1]")
    return np.clip(z, 0.0, 1.0), np.clip(x, 0.0, 1.0)


@dataclass
class SampleSet:
    cache: np.ndarray  # (K, J)
    download: np.ndarray  # (K, J)
    raw: np.ndarray = field(default=None)  # draws before repair


def repair_storage(z, sizes, capacity, rng) -> np.ndarray:
    z = np.array(z, int)
    while np.dot(sizes, z) > capacity * (1 + lyapunov.FEAS_RTOL):
        cached = np.flatnonzero(z)
        z[rng.choice(cached)] = 0
    return z


def sample_and_repair(z_prob, K: int, rng: np.random.Generator, sizes, capacity, case) -> SampleSet:
    z_prob = np.asarray(z_prob, float)
    raw = (rng.random((K, len(z_prob))) < z_prob).astype(int)
    cache = np.array([repair_storage(r, sizes, capacity, rng) for r in raw]).reshape(K, len(z_prob))
    download = np.array([derive_download(case, c) for c in cache]).reshape(K, len(z_prob))
    return SampleSet(cache, download, raw)
