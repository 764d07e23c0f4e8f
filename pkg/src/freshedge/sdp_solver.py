"""Dense primal-dual interior-point solver for small block SDPs.

Problem form::

    min   sum_b <C_b, X_b>
    s.t.  sum_b <A_kb, X_b>  (= or <=)  rhs_k
          X_b PSD

Inequalities get a nonnegative slack each, so internally the cone is a set
of dense PSD blocks plus one nonnegative orthant. Search directions are
HKM (``dX = (R_c - X dZ) Z^-1`` symmetrized) with a Mehrotra
predictor-corrector, and steps follow the fraction-to-boundary rule.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

STEP_FRACTION = 0.98


class SdpError(RuntimeError):
    pass


class NumericalFailure(SdpError):
    pass


class Infeasible(SdpError):
    pass


class MaxIterations(SdpError):
    def __init__(self, msg, solution=None, certificate=None):
        super().__init__(msg)
        self.solution = solution
        self.certificate = certificate


@dataclass
class Constraint:
    coeffs: dict  # block index -> symmetric matrix
    sense: str  # "=" or "<="
    rhs: float

    def __post_init__(self):
        if self.sense not in ("=", "<="):
            raise ValueError(f"bad constraint sense {self.sense!r}")


@dataclass
class SdpInstance:
    block_sizes: list
    objective: list  # one symmetric matrix per block
    constraints: list = field(default_factory=list)
    tol: float = 1e-7

    def __post_init__(self):
        if any(n < 1 for n in self.block_sizes):
            raise ValueError("block sizes must be >= 1")
        if len(self.objective) != len(self.block_sizes):
            raise ValueError("one objective matrix per block required")
        for b, C in enumerate(self.objective):
            _check_sym(C, self.block_sizes[b], "objective")
        for c in self.constraints:
            for b, A in c.coeffs.items():
                _check_sym(A, self.block_sizes[b], "constraint")

    def constraint_value(self, k: int, X) -> float:
        return sum(float(np.sum(A * X[b])) for b, A in self.constraints[k].coeffs.items())

    def constraint_norm(self, k: int) -> float:
        return float(np.sqrt(sum(np.sum(A * A) for A in self.constraints[k].coeffs.values())))


def _check_sym(A, n, what):
    A = np.asarray(A)
    if A.shape != (n, n):
        raise ValueError(f"{what} matrix has shape {A.shape}, expected {(n, n)}")
    if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise ValueError(f"{what} matrix is not symmetric")


@dataclass
class SdpSolution:
    X: list
    y: np.ndarray
    Z: list
    slack: np.ndarray
    slack_dual: np.ndarray
    primal_objective: float
    dual_objective: float
    iterations: int = 0
    status: str = "optimal"


@dataclass
class SolveCertificate:
    primal_objective: float
    dual_objective: float
    duality_gap: float
    primal_infeasibility: float
    dual_infeasibility: float
    min_eigenvalue: float
    iterations: int

    def ok(self, tol: float) -> bool:
        return (self.duality_gap <= tol and self.primal_infeasibility <= tol
                and self.min_eigenvalue >= -tol)


def check_certificates(solution: SdpSolution, instance: SdpInstance) -> SolveCertificate:
    """Recompute every certificate quantity directly from the instance data."""
    X = [np.asarray(x, float) for x in solution.X]
    pobj = sum(float(np.sum(C * x)) for C, x in zip(instance.objective, X))
    y = np.asarray(solution.y, float)
    rhs = np.array([c.rhs for c in instance.constraints], float)
    dobj = float(rhs @ y) if len(rhs) else 0.0
    pinf = 0.0
    for k, c in enumerate(instance.constraints):
        r = instance.constraint_value(k, X) - c.rhs
        if c.sense == "<=":
            r = max(r, 0.0)
        pinf = max(pinf, abs(r) / max(instance.constraint_norm(k), 1e-300))
    # dual residual C - A^T y - Z, plus sign conditions on inequality multipliers
    dinf = 0.0
    cnorm = 1.0 + max((np.linalg.norm(C) for C in instance.objective), default=0.0)
    for b, C in enumerate(instance.objective):
        S = np.array(C, float)
        for k, c in enumerate(instance.constraints):
            if b in c.coeffs:
                S = S - y[k] * c.coeffs[b]
        if solution.Z is not None and len(solution.Z) == len(X):
            dinf = max(dinf, np.linalg.norm(S - solution.Z[b]) / cnorm)
    for k, c in enumerate(instance.constraints):
        if c.sense == "<=":
            dinf = max(dinf, max(y[k], 0.0) / cnorm)
    min_eig = min((float(np.linalg.eigvalsh((x + x.T) / 2)[0]) for x in X), default=0.0)
    gap = abs(pobj - dobj) / (1.0 + abs(pobj))
    return SolveCertificate(pobj, dobj, gap, pinf, dinf, min_eig, solution.iterations)


class _StandardForm:
    """Equality form with a slack orthant; dependent equality rows removed."""

    def __init__(self, inst: SdpInstance):
        self.inst = inst
        self.sizes = list(inst.block_sizes)
        cons = inst.constraints
        m = len(cons)
        self.m_all = m
        self.b_all = np.array([c.rhs for c in cons], float)
        ineq = [k for k, c in enumerate(cons) if c.sense == "<="]
        self.C = [np.asarray(C, float) for C in inst.objective]
        total = sum(n * n for n in self.sizes) + len(ineq)
        dense = np.zeros((m, total))
        off = 0
        self.offsets = []
        for b, n in enumerate(self.sizes):
            self.offsets.append(off)
            for k, c in enumerate(cons):
                if b in c.coeffs:
                    dense[k, off:off + n * n] = np.asarray(c.coeffs[b], float).ravel()
            off += n * n
        for s, k in enumerate(ineq):
            dense[k, off + s] = 1.0
        keep = self._independent_rows(dense, self.b_all)
        self.keep = keep
        self.m = len(keep)
        self.b = self.b_all[keep]
        self.ns = len(ineq)
        slack_row = np.full(len(ineq), -1)
        pos = {k: r for r, k in enumerate(keep)}
        for s, k in enumerate(ineq):
            slack_row[s] = pos.get(k, -1)
        if np.any(slack_row < 0):
            raise NumericalFailure("inequality row removed as dependent")
        self.slack_row = slack_row
        self.A_blocks = []
        self.idx_blocks = []
        for b, n in enumerate(self.sizes):
            rows = [r for r, k in enumerate(keep) if b in cons[k].coeffs]
            mats = np.array([np.asarray(cons[keep[r]].coeffs[b], float) for r in rows]).reshape(len(rows), n, n)
            self.idx_blocks.append(np.array(rows, int))
            self.A_blocks.append(mats)
        self.nu = sum(self.sizes) + self.ns

    @staticmethod
    def _independent_rows(dense, b):
        m = dense.shape[0]
        if m == 0:
            return []
        _, r, piv = sla.qr(dense.T, mode="economic", pivoting=True)
        diag = np.abs(np.diag(r))
        tol = max(dense.shape) * np.finfo(float).eps * (diag[0] if len(diag) else 1.0) * 1e3
        rank = int(np.sum(diag > tol))
        if rank == m:
            return list(range(m))
        keep = sorted(piv[:rank].tolist())
        sol, *_ = np.linalg.lstsq(dense[keep].T, dense.T, rcond=None)
        # dependent rows must have consistent right-hand sides
        resid = b - sol.T @ b[keep]
        if np.any(np.abs(resid) > 1e-9 * (1 + np.abs(b).max())):
            raise Infeasible("contradictory linear constraints")
        return keep

    def A(self, X, s):
        out = np.zeros(self.m)
        for b, (idx, A) in enumerate(zip(self.idx_blocks, self.A_blocks)):
            if len(idx):
                out[idx] += A.reshape(len(idx), -1) @ X[b].ravel()
        out[self.slack_row] += s
        return out

    def AT(self, y):
        mats = []
        for b, (idx, A) in enumerate(zip(self.idx_blocks, self.A_blocks)):
            n = self.sizes[b]
            if len(idx):
                mats.append(np.tensordot(y[idx], A, axes=1))
            else:
                mats.append(np.zeros((n, n)))
        return mats, y[self.slack_row].copy()


def _sym(M):
    return (M + M.T) / 2


def _size_groups(sizes):
    groups = {}
    for b, n in enumerate(sizes):
        groups.setdefault(n, []).append(b)
    return list(groups.values())


def _max_step_blocks(X, dX, groups):
    """Block-wise :func:`_max_step`, batched over blocks of equal size."""
    alpha = np.inf
    for g in groups:
        Xs = np.stack([X[b] for b in g])
        Ds = np.stack([dX[b] for b in g])
        try:
            L = np.linalg.cholesky(Xs)
        except np.linalg.LinAlgError as exc:
            raise NumericalFailure("iterate lost positive definiteness") from exc
        Li = np.linalg.inv(L)
        S = Li @ Ds @ Li.transpose(0, 2, 1)
        lam = np.linalg.eigvalsh((S + S.transpose(0, 2, 1)) / 2)[:, 0].min()
        if lam < 0:
            alpha = min(alpha, -1.0 / lam)
    return alpha


def _max_step_lp(x, dx):
    neg = dx < 0
    if not np.any(neg):
        return np.inf
    return float(np.min(-x[neg] / dx[neg]))


def solve_sdp(instance: SdpInstance, tol: float | None = None, max_iters: int = 100, callback=None) -> tuple:
    """Solve ``instance``; returns ``(SdpSolution, SolveCertificate)``.

    ``callback``, if given, receives every iterate as an :class:`SdpSolution`.

    Raises :class:`Infeasible` for contradictory data or when a Farkas
    direction is detected, :class:`NumericalFailure` if the Schur system
    breaks down, and :class:`MaxIterations` (carrying the best iterate)
    when the tolerance is not reached.
    """
    tol = instance.tol if tol is None else tol
    sf = _StandardForm(instance)
    nb = len(sf.sizes)
    groups = _size_groups(sf.sizes)
    bnorm = 1.0 + np.linalg.norm(sf.b)
    cnorm = 1.0 + max((np.linalg.norm(C) for C in sf.C), default=0.0)

    # starting point scaled to the data
    X, Z = [], []
    for b, n in enumerate(sf.sizes):
        A = sf.A_blocks[b]
        anorms = np.sqrt(np.sum(A * A, axis=(1, 2))) if len(A) else np.zeros(0)
        brow = np.abs(sf.b[sf.idx_blocks[b]]) if len(A) else np.zeros(0)
        xi = max(10.0, np.sqrt(n), n * float(np.max((1 + brow) / (1 + anorms), initial=0.0)))
        eta = max(10.0, np.sqrt(n), float(np.linalg.norm(sf.C[b])), float(np.max(anorms, initial=0.0)))
        X.append(xi * np.eye(n))
        Z.append(eta * np.eye(n))
    s = np.full(sf.ns, max(10.0, float(np.max(np.abs(sf.b), initial=0.0))))
    zs = np.full(sf.ns, 10.0)
    y = np.zeros(sf.m)

    def objectives(X, y):
        return sum(float(np.sum(C * x)) for C, x in zip(sf.C, X)), float(sf.b @ y)

    best = None
    it = 0
    for it in range(1, max_iters + 1):
        ATy, ATy_s = sf.AT(y)
        Rp = sf.b - sf.A(X, s)
        Rd = [C - a - z for C, a, z in zip(sf.C, ATy, Z)]
        rd_s = -ATy_s - zs
        pobj, dobj = objectives(X, y)
        mu = (sum(float(np.sum(x * z)) for x, z in zip(X, Z)) + float(s @ zs)) / sf.nu
        gap = abs(pobj - dobj) / (1 + abs(pobj))
        pinf = np.linalg.norm(Rp) / bnorm
        dinf = max([np.linalg.norm(r) for r in Rd] + [np.linalg.norm(rd_s)]) / cnorm
        score = max(gap, pinf, dinf)
        if callback is not None:
            callback(_make_solution(sf, X, y, Z, s, zs, it, "iterate"))
        if best is None or score < best[0]:
            best = (score, [x.copy() for x in X], y.copy(), [z.copy() for z in Z], s.copy(), zs.copy())
        if gap <= tol and pinf <= tol and dinf <= tol:
            sol = _make_solution(sf, X, y, Z, s, zs, it, "optimal")
            cert = check_certificates(sol, instance)
            if cert.primal_infeasibility <= tol and cert.duality_gap <= tol:
                return sol, cert
        _farkas_check(sf, y, dobj, pobj)

        try:
            Zi = [np.linalg.inv(z) for z in Z]
        except np.linalg.LinAlgError as exc:
            raise NumericalFailure("dual slack became singular") from exc
        # Schur complement M_kl = <A_k, X A_l Z^-1>
        M = np.zeros((sf.m, sf.m))
        for b in range(nb):
            idx = sf.idx_blocks[b]
            if not len(idx):
                continue
            A = sf.A_blocks[b]
            G = X[b] @ A @ Zi[b]
            Mb = A.reshape(len(idx), -1) @ G.transpose(0, 2, 1).reshape(len(idx), -1).T
            M[np.ix_(idx, idx)] += Mb
        np.add.at(M, (sf.slack_row, sf.slack_row), s / zs)
        M = _sym(M)
        try:
            cho = sla.cho_factor(M, lower=True)
        except np.linalg.LinAlgError:
            try:
                cho = sla.cho_factor(M + 1e-14 * np.trace(M) / sf.m * np.eye(sf.m), lower=True)
            except np.linalg.LinAlgError as exc:
                raise NumericalFailure("Schur complement is not positive definite") from exc

        def direction(Rc, rc_s):
            # M dy = Rp - A(Rc Z^-1) + A(X Rd Z^-1)
            W = [(rc - x @ rd) @ zi for rc, x, rd, zi in zip(Rc, X, Rd, Zi)]
            w_s = (rc_s - s * rd_s) / zs
            rhs = Rp - sf.A([_sym(w) for w in W], w_s)
            dy = sla.cho_solve(cho, rhs)
            if not np.all(np.isfinite(dy)):
                raise NumericalFailure("non-finite search direction")
            ATdy, ATdy_s = sf.AT(dy)
            dZ = [rd - a for rd, a in zip(Rd, ATdy)]
            dzs = rd_s - ATdy_s
            dX = [_sym((rc - x @ dz) @ zi) for rc, x, dz, zi in zip(Rc, X, dZ, Zi)]
            dxs = (rc_s - s * dzs) / zs
            return dX, dy, dZ, dxs, dzs

        def steps(dX, dZ, dxs, dzs):
            ap = min(_max_step_blocks(X, dX, groups), _max_step_lp(s, dxs))
            ad = min(_max_step_blocks(Z, dZ, groups), _max_step_lp(zs, dzs))
            return ap, ad

        # predictor
        Rc = [-x @ z for x, z in zip(X, Z)]
        rc_s = -s * zs
        dX, dy, dZ, dxs, dzs = direction(Rc, rc_s)
        ap, ad = steps(dX, dZ, dxs, dzs)
        ap, ad = min(1.0, ap), min(1.0, ad)
        mu_aff = (sum(float(np.sum((x + ap * dx) * (z + ad * dz))) for x, dx, z, dz in zip(X, dX, Z, dZ))
                  + float((s + ap * dxs) @ (zs + ad * dzs))) / sf.nu
        sigma = min(1.0, max(0.0, mu_aff / mu)) ** 3
        # corrector
        Rc = [sigma * mu * np.eye(len(x)) - x @ z - dx @ dz for x, z, dx, dz in zip(X, Z, dX, dZ)]
        rc_s = sigma * mu - s * zs - dxs * dzs
        dX, dy, dZ, dxs, dzs = direction(Rc, rc_s)
        ap, ad = steps(dX, dZ, dxs, dzs)
        ap, ad = min(1.0, STEP_FRACTION * ap), min(1.0, STEP_FRACTION * ad)
        X = [_sym(x + ap * d) for x, d in zip(X, dX)]
        s = s + ap * dxs
        y = y + ad * dy
        Z = [_sym(z + ad * d) for z, d in zip(Z, dZ)]
        zs = zs + ad * dzs
        if not all(np.all(np.isfinite(x)) for x in X) or not np.all(np.isfinite(y)):
            raise NumericalFailure("non-finite iterate")

    _, X, y, Z, s, zs = best
    sol = _make_solution(sf, X, y, Z, s, zs, it, "max_iterations")
    cert = check_certificates(sol, instance)
    if cert.ok(tol):
        return sol, cert
    raise MaxIterations(f"tolerance {tol:g} not reached in {max_iters} iterations", sol, cert)


def _farkas_check(sf: _StandardForm, y, dobj, pobj):
    """Raise Infeasible when y is (numerically) a primal infeasibility certificate."""
    if dobj <= 0 or dobj < 1e6 * (1 + abs(pobj)):
        return
    d = y / dobj
    ATd, ATd_s = sf.AT(d)
    scale = 1.0 + np.linalg.norm(d)
    worst = min([float(np.linalg.eigvalsh(-a)[0]) for a in ATd] + [float(np.min(-ATd_s, initial=0.0))])
    if worst >= -1e-6 * scale:
        raise Infeasible("primal infeasible: dual improving ray found")


def _make_solution(sf, X, y, Z, s, zs, it, status) -> SdpSolution:
    y_full = np.zeros(sf.m_all)
    y_full[sf.keep] = y
    pobj = sum(float(np.sum(C * x)) for C, x in zip(sf.C, X))
    dobj = float(sf.b_all @ y_full)
    return SdpSolution([x.copy() for x in X], y_full, [z.copy() for z in Z], s.copy(), zs.copy(),
                       pobj, dobj, it, status)
