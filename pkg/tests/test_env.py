import numpy as np
import pytest
from hypothesis import given, strategies as st

from freshedge import env as E
from freshedge.config import EnvConfig
from freshedge.model import Services, SlotDecision
from freshedge.rng import keyed_rng


def _services(J=3, cached=None, aoi_cs=None):
    cached = np.zeros(J, int) if cached is None else np.asarray(cached, int)
    aoi = np.zeros(J) if aoi_cs is None else np.asarray(aoi_cs, float)
    return Services(np.full(J, 3e9), np.full(J, 10.0), np.full(J, 1.0), aoi, aoi.copy(), cached)


def test_update_aoi_branches():
    assert E.update_aoi([1], [1], [2], [7])[0] == 2
    assert E.update_aoi([1], [0], [2], [7])[0] == 8
    assert E.update_aoi([0], [0], [2], [7])[0] == 2
    with pytest.raises(E.ConstraintViolation):
        E.update_aoi([0], [1], [2], [7])


def test_update_queue_examples():
    assert E.update_queue([3.0], [4.0], 5.0)[0] == 2.0
    assert E.update_queue([0.0], [1.0], 5.0)[0] == 0.0
    assert E.update_queue([0.0], [5.0], 5.0)[0] == 0.0


@given(st.lists(st.floats(0, 100), min_size=1, max_size=6), st.floats(0, 50), st.floats(1, 10))
def test_queue_never_negative(q, a, amax):
    assert np.all(E.update_queue(q, a, amax) >= 0)


def test_advance_services_update_rules():
    cfg = EnvConfig(num_services=2)
    s = _services(2, aoi_cs=[3.0, 3.0])
    always = E.advance_services(s, keyed_rng(0, "x"), cfg.replace(cs_update_prob=1.0))
    never = E.advance_services(s, keyed_rng(0, "x"), cfg.replace(cs_update_prob=0.0))
    assert np.all(always.aoi_cs == 0) and np.all(never.aoi_cs == 4)
    lo, hi = cfg.service_size_range
    assert np.all((never.size >= lo) & (never.size <= hi))
    assert np.array_equal(never.purchase_price, s.purchase_price)


def test_cs_update_frequency():
    cfg = EnvConfig(num_services=10)
    rng = keyed_rng(1, "services")
    s = _services(10, aoi_cs=np.ones(10))
    resets = 0
    for _ in range(1000):
        s = E.advance_services(s, rng, cfg)
        resets += int(np.sum(s.aoi_cs == 0))
    assert abs(resets / 10000 - 0.25) <= 0.02


def test_generate_tasks_sizes():
    cfg = EnvConfig()
    rng = keyed_rng(3, "tasks")
    ups = []
    for _ in range(2000):
        tb = E.generate_tasks(cfg, rng)
        tb.validate()
        assert np.all(tb.present.sum(axis=1) == 1)
        assert np.allclose(tb.down, tb.up / 10)
        assert np.allclose(tb.cycles, 330 * tb.up)
        ups.append(tb.up[tb.present])
    ups = np.concatenate(ups)
    assert len(ups) == 10000
    assert ups.min() >= 5e8 and ups.max() <= 2e9


def _step_all_zero(env):
    I, J = env.cfg.num_users, env.cfg.num_services
    d = E.complete_decision(env.tasks, np.zeros((I, J), int), np.zeros(J, int), np.zeros(J, int), env.cfg)
    return env.step(d)


def test_empty_slot_has_zero_cost_and_utility():
    cfg = EnvConfig(num_users=2, num_services=2, horizon=3)
    env = E.EdgeEnv(cfg, seed=0)
    env.tasks = env.tasks.empty(2, 2)
    out = _step_all_zero(env)
    assert out.cost == 0.0 and out.utility == 0.0


def test_identical_seeds_identical_trajectories():
    cfg = EnvConfig(horizon=30)
    runs = []
    for _ in range(2):
        env = E.EdgeEnv(cfg, seed=11)
        outs = []
        while not env.done:
            o = _step_all_zero(env)
            outs.append((o.cost, o.utility, o.aoi_es.tobytes(), o.queue.tobytes()))
        runs.append(outs)
    assert runs[0] == runs[1]


def test_refresh_price_charged_when_previously_cached():
    cfg = EnvConfig(num_users=1, num_services=2, horizon=3, lambda_p=2.0)
    env = E.EdgeEnv(cfg, seed=4)
    env.tasks = env.tasks.empty(1, 2)
    z = np.array([1, 0])
    env.step(E.complete_decision(env.tasks, np.zeros((1, 2), int), z, z, cfg))
    env.tasks = env.tasks.empty(1, 2)
    out = env.step(E.complete_decision(env.tasks, np.zeros((1, 2), int), z, z, cfg))
    assert np.isclose(out.cost, 2.0 * env.services.refresh_price[0])
    assert np.isclose(-out.utility, 2.0 * env.services.refresh_price[0])


@pytest.mark.parametrize("name,mutate", [
    ("offload", lambda d: d.offload.__setitem__((0, 0), 1)),
    ("storage", lambda d: (d.cache.__setitem__(slice(None), 1), d.download.__setitem__(slice(None), 1))),
    ("coupling", lambda d: d.cache.__setitem__(0, 1)),
    ("compute", lambda d: d.compute.__setitem__((0, 0), 1e20)),
    ("bandwidth", lambda d: d.bw_up.__setitem__((0, 0), 1e20)),
])
def test_step_names_violated_constraint(name, mutate):
    cfg = EnvConfig(horizon=2)
    env = E.EdgeEnv(cfg, seed=0)
    I, J = cfg.num_users, cfg.num_services
    d = E.complete_decision(env.tasks, np.zeros((I, J), int), np.zeros(J, int), np.zeros(J, int), cfg)
    mutate(d)
    with pytest.raises(E.ConstraintViolation) as err:
        env.step(d)
    assert err.value.constraint == name


def test_es_aoi_never_fresher_than_cs_and_queue_nonnegative():
    cfg = EnvConfig(horizon=200)
    env = E.EdgeEnv(cfg, seed=2)
    rng = np.random.default_rng(0)
    while not env.done:
        s = env.services
        z = np.zeros(cfg.num_services, int)
        for j in rng.permutation(cfg.num_services):
            if np.dot(s.size, z) + s.size[j] <= cfg.storage_capacity and rng.random() < 0.5:
                z[j] = 1
        y = np.where(s.cached == 1, z * (rng.random(cfg.num_services) < 0.5), z)
        x = env.tasks.present * z[None, :]
        out = env.step(E.complete_decision(env.tasks, x, y, z, cfg))
        cs = env.services.aoi_cs if env.done else None
        assert np.all(out.queue >= 0)
        assert np.all(out.aoi_es >= s.aoi_cs)
        assert np.all(out.aoi_es[z == 0] == s.aoi_cs[z == 0])
        del cs


def test_threshold_trigger_policy_meets_aoi_constraint():
    cfg = EnvConfig()
    env = E.EdgeEnv(cfg, seed=5)
    total = np.zeros(cfg.num_services)
    while not env.done:
        s = env.services
        # refresh services whose queue has built up, keep the rest cached where possible
        need = env.queue > 0
        z = np.zeros(cfg.num_services, int)
        for j in np.argsort(-env.queue):
            if np.dot(s.size, z) + s.size[j] <= cfg.storage_capacity:
                z[j] = 1
        y = np.where(s.cached == 1, z * need, z)
        out = env.step(E.complete_decision(env.tasks, env.tasks.present * z[None, :], y, z, cfg))
        total += out.aoi_es
    assert np.all(total / cfg.horizon <= env.aoi_max + 0.5)


def test_trace_replay_reproduces_outcomes(tmp_path):
    cfg = EnvConfig(horizon=15)
    env = E.EdgeEnv(cfg, seed=9)
    decisions, outs = [], []
    while not env.done:
        z = np.zeros(cfg.num_services, int)
        z[:2] = 1
        d = E.complete_decision(env.tasks, env.tasks.present * z[None, :], z, z, cfg)
        if env.services.cached[0]:
            d.download = np.zeros_like(z)
        decisions.append(d)
        outs.append(env.step(d))
    env.trace.dump(tmp_path)
    trace = E.Trace.load(tmp_path, cfg.num_users, cfg.num_services)
    replay = E.EdgeEnv(cfg, trace=trace)
    for d, o in zip(decisions, outs):
        r = replay.step(d)
        assert r.cost == o.cost and r.utility == o.utility
        assert np.array_equal(r.aoi_es, o.aoi_es) and np.array_equal(r.queue, o.queue)


def test_step_after_horizon_raises():
    env = E.EdgeEnv(EnvConfig(horizon=1), seed=0)
    _step_all_zero(env)
    with pytest.raises(RuntimeError):
        _step_all_zero(env)


def test_zero_decision_helper_shapes():
    d = SlotDecision.zeros(2, 3)
    assert d.offload.shape == (2, 3) and d.cache.shape == (3,)
