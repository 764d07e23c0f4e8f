import numpy as np
import pytest
from hypothesis import given, strategies as st

from freshedge import delay_alloc as da
from freshedge.config import EnvConfig
from freshedge.model import SlotDecision, TaskBatch
from oracles import allocation_objective, newton_allocation


def _tasks(up, I=None, J=3):
    up = np.asarray(up, float)
    I = len(up) if I is None else I
    tb = TaskBatch.empty(I, J)
    for i, s in enumerate(up):
        if s > 0:
            j = i % J
            tb.up[i, j] = s
            tb.down[i, j] = s / 10
            tb.cycles[i, j] = 330 * s
    return tb


def test_equal_loads_split_evenly():
    tb = _tasks([1e9, 1e9])
    w_u, w_d = da.allocate_bandwidth(tb, [1, 1], [1, 1], 10.0, 4.0)
    assert np.isclose(w_u.sum(), 10) and np.allclose(w_u[w_u > 0], 5)
    assert np.allclose(w_d[w_d > 0], 2)


def test_single_task_gets_everything():
    tb = _tasks([7e8, 0, 0])
    w_u, _ = da.allocate_bandwidth(tb, [3, 3, 3], [4, 4, 4], 40e6, 40e6)
    assert w_u[0, 0] == 40e6 and np.count_nonzero(w_u) == 1


def test_square_root_proportionality():
    tb = _tasks([1e9, 4e9])
    w_u, _ = da.allocate_bandwidth(tb, [1, 1], [1, 1], 3.0, 3.0)
    assert np.isclose(w_u[1, 1] / w_u[0, 0], 2.0, rtol=1e-12)
    f = da.allocate_compute(tb, (tb.up > 0).astype(int), 9.0)
    assert np.isclose(f[1, 1] / f[0, 0], 2.0, rtol=1e-12)


def test_compute_only_for_local_tasks():
    tb = _tasks([1e9, 2e9, 5e8])
    x = np.zeros((3, 3), int)
    x[1, 1] = 1
    f = da.allocate_compute(tb, x, 5.4e9)
    assert f[1, 1] == 5.4e9 and np.count_nonzero(f) == 1
    assert not da.allocate_compute(tb, np.zeros((3, 3)), 5.4e9).any()


def test_no_tasks_gives_zero_allocation():
    tb = TaskBatch.empty(2, 2)
    w_u, w_d = da.allocate_bandwidth(tb, [1, 1], [1, 1], 1.0, 1.0)
    assert not w_u.any() and not w_d.any()


@pytest.mark.parametrize("seed", range(20))
def test_closed_forms_match_newton_minimizer(seed):
    rng = np.random.default_rng(seed)
    n = rng.integers(1, 8)
    loads = rng.uniform(0.1, 10, n) * (rng.random(n) < 0.8)
    budget = rng.uniform(1, 100)
    ref = newton_allocation(loads, budget)
    got = da.sqrt_share(loads, budget)
    on = loads > 0
    if on.any():
        assert np.allclose(got[on], ref[on], rtol=1e-6, atol=0)
        assert allocation_objective(loads, got) <= allocation_objective(loads, ref) * (1 + 1e-12)
    assert not got[~on].any()


def test_local_delay_unit_ratios():
    tb = TaskBatch(np.array([[2.0]]), np.array([[3.0]]), np.array([[5.0]]))
    d = da.local_delay(tb, np.array([[2.0]]), np.array([[3.0]]), np.array([[5.0]]), [1.0], [1.0])
    assert np.isclose(d[0, 0], 3.0)


def test_local_delay_desk_values():
    tb = TaskBatch(np.array([[1e9]]), np.array([[1e8]]), np.array([[3.3e11]]))
    # eta * w = 2.5e7 B/s on both links
    d = da.local_delay(tb, np.array([[2.5e7]]), np.array([[2.5e7]]), np.array([[5.4e9]]), [1.0], [1.0])
    assert np.isclose(d[0, 0], 40 + 3.3e11 / 5.4e9 + 4, rtol=1e-12)
    assert np.isclose(d[0, 0], 105.11, atol=5e-3)


def test_doubling_compute_halves_middle_term():
    tb = TaskBatch(np.array([[1e9]]), np.array([[1e8]]), np.array([[3.3e11]]))
    args = (np.array([[2.5e7]]), np.array([[2.5e7]]))
    d1 = da.local_delay(tb, *args, np.array([[5.4e9]]), [1.0], [1.0])
    d2 = da.local_delay(tb, *args, np.array([[10.8e9]]), [1.0], [1.0])
    assert np.isclose(d1 - d2, 3.3e11 / 10.8e9)


def test_offload_delay_terms():
    tb = TaskBatch(np.array([[1e9]]), np.array([[1e8]]), np.array([[3.3e11]]))
    assert np.isclose(da.backhaul_delay(tb, 2.5e7)[0, 0], 44.0)
    assert np.isclose(da.cloud_delay(tb, 2e9)[0, 0], 165.0)
    w = np.array([[2.5e7]])
    d = da.offload_delay(tb, w, w, 1e300, 1e300, [1.0], [1.0])
    assert np.isclose(d[0, 0], 44.0)


def test_zero_allocation_is_an_error():
    tb = TaskBatch(np.array([[1e9]]), np.array([[1e8]]), np.array([[3.3e11]]))
    with pytest.raises(da.ZeroAllocationError):
        da.local_delay(tb, np.array([[1.0]]), np.array([[1.0]]), np.array([[0.0]]), [1.0], [1.0])


@given(st.floats(0.01, 100), st.lists(st.floats(1e8, 2e9), min_size=1, max_size=5))
def test_bandwidth_shares_scale_free(c, sizes):
    tb = _tasks(sizes, J=5)
    scaled = TaskBatch(tb.up * c, tb.down * c, tb.cycles * c)
    eta = np.ones(len(sizes))
    a, _ = da.allocate_bandwidth(tb, eta, eta, 1.0, 1.0)
    b, _ = da.allocate_bandwidth(scaled, eta, eta, 1.0, 1.0)
    assert np.allclose(a, b, rtol=1e-9, atol=1e-15)


@given(st.floats(1e6, 1e9), st.floats(1.01, 10))
def test_delay_decreases_with_own_allocation(w, factor):
    tb = TaskBatch(np.array([[1e9]]), np.array([[1e8]]), np.array([[3.3e11]]))
    f = np.array([[5e9]])
    lo = da.local_delay(tb, np.array([[w]]), np.array([[w]]), f, [1.0], [1.0])
    hi = da.local_delay(tb, np.array([[w * factor]]), np.array([[w]]), f, [1.0], [1.0])
    assert hi[0, 0] < lo[0, 0]


def _decision(tb, x, cfg):
    from freshedge.env import complete_decision
    z = (x.sum(axis=0) > 0).astype(int)
    return complete_decision(tb, x, z, z, cfg)


def test_utility_zero_when_everything_offloaded():
    cfg = EnvConfig(num_users=3, num_services=3)
    tb = _tasks([1e9, 6e8, 1.5e9])
    d = SlotDecision.zeros(3, 3)
    d = _decision(tb, d.offload, cfg)
    cb = da.slot_cost_and_utility(tb, d, np.full(3, 10.0), cfg)
    assert cb.utility == 0.0
    assert np.isclose(cb.cost, cb.cost_offload_baseline, rtol=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_cost_equals_baseline_minus_utility(seed):
    rng = np.random.default_rng(seed)
    cfg = EnvConfig(num_users=4, num_services=3)
    tb = _tasks(rng.uniform(5e8, 2e9, 4) * (rng.random(4) < 0.8))
    x = ((tb.up > 0) & (rng.random((4, 3)) < 0.6)).astype(int)
    d = _decision(tb, x, cfg)
    cb = da.slot_cost_and_utility(tb, d, rng.uniform(1, 50, 3), cfg)
    # C is a difference of terms of size C', so the tolerance is relative to C'
    assert abs(cb.cost - (cb.cost_offload_baseline - cb.utility)) <= 1e-9 * cb.cost_offload_baseline


def test_single_local_task_utility_sign():
    cfg = EnvConfig(num_users=1, num_services=1, fixed_services=(0,))
    tb = _tasks([1e9], J=1)
    d = _decision(tb, np.array([[1]]), cfg)
    cb = da.slot_cost_and_utility(tb, d, np.zeros(1), cfg)
    gain = cfg.lambda_D * (cb.delay_offload - cb.delay_local)[0, 0] + cfg.lambda_c * cfg.lambda_s * 1e9
    assert np.isclose(cb.utility, gain, rtol=1e-12) and cb.utility > 0
    assert np.isclose(cfg.lambda_s * 1e9 * cfg.lambda_c, 1e10)
