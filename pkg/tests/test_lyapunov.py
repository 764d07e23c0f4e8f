import numpy as np
import pytest

from freshedge import lyapunov as L
from freshedge.config import EnvConfig
from freshedge.env import generate_tasks, initial_services, update_aoi
from freshedge.instances import random_subproblem
from freshedge.policy import oracle_solve_p2
from oracles import brute_force_p2


def test_drift_coefficients_examples():
    H, _ = L.drift_coefficients([2.0], [1.0], [4.0], [5.0])
    assert H[0] == 20.0
    H, _ = L.drift_coefficients([7.0], [3.0], [2.0], [5.0])
    assert H[0] == 0.0
    _, I = L.drift_coefficients([2.0], [1.0], [4.0], [5.0])
    assert I[0] == (25 + 1) / 2 - 2 * 4


def test_h_nondecreasing_in_queue():
    q = np.linspace(0, 50, 11)
    H, _ = L.drift_coefficients(q, np.full(11, 1.0), np.full(11, 3.0), np.full(11, 5.0))
    assert np.all(np.diff(H) >= 0)


def test_classification_cases():
    case, G, p = L.classify_and_gain([0, 1, 1], [10.0] * 3, [2.0] * 3, [5.0, 30.0, 1.0], V=2.0, lambda_p=1.0)
    assert list(case) == [L.FRESH_NEEDED, L.REFRESH_WORTHWHILE, L.KEEP_STALE]
    assert np.allclose(G, [20.0, 4.0, 1.0])
    assert np.allclose(p, [10.0, 2.0, 2.0])


def test_tie_goes_to_keep_stale():
    case, G, _ = L.classify_and_gain([1], [10.0], [2.0], [4.0], V=2.0, lambda_p=1.0)
    assert case[0] == L.KEEP_STALE and G[0] == 4.0


def test_derive_download():
    assert L.derive_download([L.FRESH_NEEDED], [1])[0] == 1
    assert L.derive_download([L.KEEP_STALE], [1])[0] == 0
    assert L.derive_download([L.REFRESH_WORTHWHILE], [0])[0] == 0


def test_all_zero_decision_is_zero():
    sub = random_subproblem(np.random.default_rng(0))
    assert L.p2_objective(sub, np.zeros((3, 4)), np.zeros(4)) == 0.0


def test_infeasible_decision_rejected():
    sub = random_subproblem(np.random.default_rng(1))
    i = int(np.flatnonzero(sub.requests >= 0)[0])
    x = np.zeros((3, 4))
    x[i, sub.requests[i]] = 1
    with pytest.raises(L.InfeasibleDecision):
        L.p2_objective(sub, x, np.zeros(4))
    with pytest.raises(L.InfeasibleDecision):
        L.p2_objective(sub, np.zeros((3, 4)), np.ones(4) * 10)


@pytest.mark.parametrize("seed", range(15))
def test_oracle_matches_brute_force(seed):
    sub = random_subproblem(np.random.default_rng(seed), 3, 4)
    best = brute_force_p2(sub, L.p2_objective)
    d = oracle_solve_p2(sub)
    assert np.isclose(d.value, best[0], rtol=1e-9, atol=1e-6)
    assert np.isclose(L.p2_objective(sub, d.offload, d.cache), d.value, rtol=1e-9, atol=1e-6)


def test_reward_is_negative_objective():
    sub = random_subproblem(np.random.default_rng(3))
    d = oracle_solve_p2(sub)
    assert L.reward(sub, d.offload, d.cache) == -L.p2_objective(sub, d.offload, d.cache)


def _state(seed, I=3, J=4):
    rng = np.random.default_rng(seed)
    cfg = EnvConfig(num_users=I, num_services=J, fixed_services=(0,), lyapunov_V=float(rng.uniform(0.1, 5)))
    s = initial_services(cfg, rng)
    s.aoi_cs = rng.integers(0, 5, J).astype(float)
    s.cached = (rng.random(J) < 0.5).astype(int)
    s.aoi_es = s.aoi_cs + s.cached * rng.integers(0, 6, J)
    s.size = np.full(J, 1e9)
    q = rng.uniform(0, 10, J)
    amax = rng.uniform(5, 10, J)
    return cfg, s, generate_tasks(cfg, rng), q, amax


@pytest.mark.parametrize("seed", range(10))
def test_drift_bound_equals_pointwise_bracket(seed):
    cfg, s, tasks, q, amax = _state(seed)
    sub = L.build_subproblem(cfg, s, tasks, q, amax)
    rng = np.random.default_rng(100 + seed)
    for _ in range(20):
        z = (rng.random(4) < 0.5).astype(int)
        x = (rng.random((3, 4)) < 0.5) * tasks.present * z[None, :]
        y = L.derive_download(sub.case, z)
        a_e = update_aoi(z, y, s.aoi_cs, s.aoi_es)
        drift = np.sum(0.5 * a_e ** 2 + 0.5 * amax ** 2 + q * (a_e - amax))
        f = L.closed_form_compute(sub, x)
        gain = np.zeros_like(f)
        loc = x > 0
        gain[loc] = sub.Lam[loc] - cfg.lambda_D * tasks.cycles[loc] / f[loc]
        penalty = cfg.lyapunov_V * (cfg.lambda_p * np.dot(sub.p_eff, y) - np.sum(gain))
        assert np.isclose(L.drift_bound(sub, x, z), drift + penalty, rtol=1e-9, atol=1e-9)


def test_argmin_invariant_to_constant_shift():
    sub = random_subproblem(np.random.default_rng(5))
    a = oracle_solve_p2(sub)
    sub.I_const = sub.I_const + 1e6
    b = oracle_solve_p2(sub)
    assert np.array_equal(a.cache, b.cache) and np.array_equal(a.offload, b.offload)


@pytest.mark.parametrize("seed", range(10))
def test_zero_v_never_keeps_stale_copies(seed):
    cfg, s, tasks, q, amax = _state(seed)
    sub = L.build_subproblem(cfg.replace(lyapunov_V=0.0), s, tasks, q, amax)
    d = oracle_solve_p2(sub)
    stale = (sub.case == L.KEEP_STALE) & (sub.H > 0)
    assert not np.any(d.cache[stale])
