import numpy as np
import pytest

from freshedge import matrixio
from freshedge.sdp_solver import (Constraint, Infeasible, MaxIterations, SdpInstance, SdpSolution,
                                  check_certificates, solve_sdp)

cp = pytest.importorskip("cvxpy")


def E(n, i, j):
    M = np.zeros((n, n))
    M[i, j] = M[j, i] = 1.0
    return M


def test_trace_minimum_analytic():
    inst = SdpInstance([2], [np.eye(2)], [Constraint({0: E(2, 0, 0)}, "=", 1.0)])
    sol, cert = solve_sdp(inst)
    assert np.isclose(cert.primal_objective, 1.0, atol=1e-7)
    assert np.allclose(sol.X[0], np.diag([1.0, 0.0]), atol=1e-6)


def test_max_correlation_analytic():
    inst = SdpInstance([2], [-E(2, 0, 1)], [Constraint({0: E(2, 0, 0)}, "=", 1.0),
                                            Constraint({0: E(2, 1, 1)}, "=", 1.0)])
    sol, cert = solve_sdp(inst)
    assert np.isclose(cert.primal_objective, -2.0, atol=1e-7)
    assert np.allclose(sol.X[0], np.ones((2, 2)), atol=1e-6)


def test_contradictory_equalities_infeasible():
    inst = SdpInstance([2], [np.eye(2)], [Constraint({0: E(2, 0, 0)}, "=", 1.0),
                                          Constraint({0: E(2, 0, 0)}, "=", 2.0)])
    with pytest.raises(Infeasible):
        solve_sdp(inst)


def test_iteration_limit_returns_best_iterate():
    inst = SdpInstance([2], [-E(2, 0, 1)], [Constraint({0: E(2, 0, 0)}, "=", 1.0),
                                            Constraint({0: E(2, 1, 1)}, "=", 1.0)])
    with pytest.raises(MaxIterations) as err:
        solve_sdp(inst, tol=1e-7, max_iters=2)
    assert isinstance(err.value.solution, SdpSolution) and err.value.certificate is not None


def test_certificates_of_exact_solution():
    inst = SdpInstance([2], [np.eye(2)], [Constraint({0: E(2, 0, 0)}, "=", 1.0)])
    exact = SdpSolution([np.diag([1.0, 0.0])], np.array([1.0]), [np.diag([0.0, 1.0])], np.zeros(0),
                        np.zeros(0), 1.0, 1.0)
    cert = check_certificates(exact, inst)
    assert cert.duality_gap == 0.0 and cert.primal_infeasibility == 0.0 and cert.dual_infeasibility == 0.0
    perturbed = SdpSolution([exact.X[0] + 1e-3 * np.eye(2)], exact.y, exact.Z, exact.slack, exact.slack_dual,
                            0.0, 0.0)
    assert np.isclose(check_certificates(perturbed, inst).primal_infeasibility, 1e-3, rtol=1e-9)
    bad = SdpSolution([np.diag([1.0, -0.5])], exact.y, exact.Z, exact.slack, exact.slack_dual, 0.0, 0.0)
    assert check_certificates(bad, inst).min_eigenvalue == -0.5


def random_instance(rng, sizes, m_eq=4, m_ineq=2):
    """Strictly feasible, bounded instance built around a positive definite point."""
    X0 = []
    for n in sizes:
        R = rng.normal(size=(n, n))
        X0.append(R @ R.T / n + 0.5 * np.eye(n))
    sym = lambda n: (lambda A: (A + A.T) / 2)(rng.normal(size=(n, n)))
    cons = []
    for k in range(m_eq + m_ineq):
        blocks = [b for b in range(len(sizes)) if rng.random() < 0.7] or [0]
        coeffs = {b: sym(sizes[b]) for b in blocks}
        val = sum(float(np.sum(A * X0[b])) for b, A in coeffs.items())
        if k < m_eq:
            cons.append(Constraint(coeffs, "=", val))
        else:
            cons.append(Constraint(coeffs, "<=", val + rng.uniform(0.1, 1)))
    for b, n in enumerate(sizes):
        cons.append(Constraint({b: np.eye(n)}, "<=", float(np.trace(X0[b])) + 1.0))
    return SdpInstance(list(sizes), [sym(n) for n in sizes], cons)


def cvxpy_reference(inst):
    X = [cp.Variable((n, n), PSD=True) for n in inst.block_sizes]
    cons = []
    for c in inst.constraints:
        expr = sum(cp.trace(A @ X[b]) for b, A in c.coeffs.items())
        cons.append(expr == c.rhs if c.sense == "=" else expr <= c.rhs)
    prob = cp.Problem(cp.Minimize(sum(cp.trace(C @ x) for C, x in zip(inst.objective, X))), cons)
    prob.solve(solver="CLARABEL", tol_gap_abs=1e-10, tol_gap_rel=1e-10, tol_feas=1e-10)
    assert prob.status == "optimal"
    return prob.value


@pytest.mark.parametrize("seed", range(25))
def test_matches_independent_reference(seed):
    rng = np.random.default_rng(seed)
    sizes = [int(rng.integers(1, 18))] + [int(rng.integers(1, 6)) for _ in range(rng.integers(0, 3))]
    inst = random_instance(rng, sizes, m_eq=int(rng.integers(1, 8)), m_ineq=int(rng.integers(0, 4)))
    sol, cert = solve_sdp(inst)
    ref = cvxpy_reference(inst)
    assert abs(cert.primal_objective - ref) <= 1e-6 * (1 + abs(ref))
    assert cert.ok(1e-7)


@pytest.mark.parametrize("seed", range(8))
def test_weak_duality_every_iteration(seed):
    rng = np.random.default_rng(100 + seed)
    inst = random_instance(rng, [int(rng.integers(2, 12)), 3], m_eq=3, m_ineq=2)
    iterates = []
    sol, cert = solve_sdp(inst, callback=iterates.append)
    assert len(iterates) >= 2
    ineq = [k for k, c in enumerate(inst.constraints) if c.sense == "<="]
    for it in iterates:
        y = it.y
        pobj = sum(float(np.sum(C * x)) for C, x in zip(inst.objective, it.X))
        dobj = float(np.dot([c.rhs for c in inst.constraints], y))
        corr = 0.0
        for b, C in enumerate(inst.objective):
            Rd = C - it.Z[b] - sum(y[k] * c.coeffs[b] for k, c in enumerate(inst.constraints) if b in c.coeffs)
            corr += float(np.sum(Rd * it.X[b]))
        Ax = np.array([inst.constraint_value(k, it.X) for k in range(len(inst.constraints))])
        Rp = np.array([c.rhs for c in inst.constraints]) - Ax
        Rp[ineq] -= it.slack
        rd_s = -y[ineq] - it.slack_dual
        # pobj - dobj = <X, Z> + s'zs + residual terms; the first two are nonnegative in the interior
        complementarity = pobj - dobj - corr + float(Rp @ y) - float(it.slack @ rd_s)
        scale = 1 + abs(pobj) + abs(dobj)
        assert complementarity >= -1e-9 * scale
        assert all(np.linalg.eigvalsh(x)[0] > 0 for x in it.X)
        assert all(np.linalg.eigvalsh(z)[0] > 0 for z in it.Z)
        assert np.all(it.slack > 0) and np.all(it.slack_dual > 0)
    assert cert.dual_objective <= cert.primal_objective + 1e-7 * (1 + abs(cert.primal_objective))


@pytest.mark.parametrize("seed", range(6))
def test_row_scaling_invariance(seed):
    rng = np.random.default_rng(200 + seed)
    inst = random_instance(rng, [6, 2], m_eq=4, m_ineq=2)
    scaled = SdpInstance(inst.block_sizes, inst.objective, [
        Constraint({b: c * A for b, A in con.coeffs.items()}, con.sense, c * con.rhs)
        for con, c in zip(inst.constraints, rng.uniform(0.01, 100, len(inst.constraints)))])
    _, a = solve_sdp(inst)
    _, b = solve_sdp(scaled)
    assert abs(a.primal_objective - b.primal_objective) <= 1e-6 * (1 + abs(a.primal_objective))


def test_deterministic():
    inst = random_instance(np.random.default_rng(7), [8], m_eq=3, m_ineq=1)
    a, _ = solve_sdp(inst)
    b, _ = solve_sdp(inst)
    assert np.array_equal(a.X[0], b.X[0]) and np.array_equal(a.y, b.y)


def test_text_round_trip_and_solve():
    inst = random_instance(np.random.default_rng(8), [5, 3], m_eq=3, m_ineq=2)
    text = matrixio.dump_sdp(inst)
    back = matrixio.load_sdp(text)
    assert matrixio.dump_sdp(back) == text
    sol, cert = solve_sdp(back)
    sol_back = matrixio.load_solution(matrixio.dump_solution(sol))
    for a, b in zip(sol.X, sol_back.X):
        assert np.array_equal(a, b)
    assert np.array_equal(sol.y, sol_back.y)


def test_malformed_text_rejected():
    with pytest.raises(matrixio.FormatError):
        matrixio.load_sdp("sdp 1\nblocks 1 2\nobjective\nblock 0\n1.0 0.0\n")
