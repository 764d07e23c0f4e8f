"""Experiment runner: policies x sweep values x seeds -> per-slot metric CSVs and a summary.

Per-run CSV columns, in order::

    slot, policy, seed, sweep_value, utility, cost, cumulative_utility, reward,
    failed, aoi_es_0..aoi_es_{J-1}, queue_0..queue_{J-1}

Floats are written with 9 significant digits.  The first line is a comment
carrying the run's AoI thresholds (``# aoi_max=a0,a1,...``).
"""
from __future__ import annotations

import csv
import io
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from . import policy as pol
from .config import EnvConfig
from .env import EdgeEnv
from .lyapunov import build_subproblem
from .ppo import Hyperparams, make_agent, train_agent
from .rng import keyed_rng
from .sdp_solver import SdpError
from .sdr import ExtractionError, RelaxationCache

log = logging.getLogger(__name__)

SWEEP_AXES = ("none", "V", "F", "S", "S_with_proportional_F")
CERT_TOL = 1e-6
FLOAT_FMT = "%.9g"
BASE_COLUMNS = ["slot", "policy", "seed", "sweep_value", "utility", "cost", "cumulative_utility",
                "reward", "failed"]
LEARNED = (pol.PolicyKind.OIODRL, pol.PolicyKind.PPO_ONLY)
SDR_BASED = (pol.PolicyKind.OIODRL, pol.PolicyKind.SDP_ONLY, pol.PolicyKind.JSCR)


class MetricsFormatError(ValueError):
    pass


def sweep_config(cfg: EnvConfig, axis: str, value: float | None) -> EnvConfig:
    """Apply one sweep value; the joint axis scales S and F by the same factor."""
    if axis == "none" or value is None:
        return cfg
    if value <= 0:
        raise ValueError("sweep values must be positive")
    if axis == "V":
        return cfg.replace(lyapunov_V=float(value))
    if axis == "F":
        return cfg.replace(compute_capacity=float(value))
    if axis == "S":
        return cfg.replace(storage_capacity=float(value))
    if axis == "S_with_proportional_F":
        return cfg.replace(storage_capacity=cfg.storage_capacity * value,
                           compute_capacity=cfg.compute_capacity * value)
    raise ValueError(f"unknown sweep axis {axis!r}; choose from {SWEEP_AXES}")


def parse_sweep(text: str | None) -> tuple[str, tuple]:
    """``"V=0.1,1,10"`` -> ``("V", (0.1, 1.0, 10.0))``."""
    if not text:
        return "none", ()
    if "=" not in text:
        raise ValueError("sweep must look like axis=v1,v2,...")
    axis, vals = text.split("=", 1)
    axis = axis.strip()
    if axis not in SWEEP_AXES or axis == "none":
        raise ValueError(f"unknown sweep axis {axis!r}")
    values = tuple(float(v) for v in vals.split(",") if v.strip())
    if not values or min(values) <= 0:
        raise ValueError("sweep values must be positive")
    return axis, values


@dataclass
class ExperimentSpec:
    cfg: EnvConfig
    policies: list
    out_dir: str
    hp: Hyperparams = field(default_factory=Hyperparams)
    sweep_axis: str = "none"
    sweep_values: tuple = ()
    replications: int = 1
    base_seed: int | None = None
    # trained agents for the learned policies; missing ones are trained on the base config
    agents: dict = field(default_factory=dict)

    def __post_init__(self):
        self.policies = [p if isinstance(p, pol.PolicyKind) else pol.PolicyKind.parse(p) for p in self.policies]
        self.validate()

    def validate(self) -> None:
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.sweep_axis not in SWEEP_AXES:
            raise ValueError(f"unknown sweep axis {self.sweep_axis!r}")
        if self.sweep_axis != "none" and (not self.sweep_values or min(self.sweep_values) <= 0):
            raise ValueError("sweep values must be positive")
        if not self.policies:
            raise ValueError("at least one policy is required")

    @property
    def seeds(self) -> list:
        base = self.cfg.rng_seed if self.base_seed is None else self.base_seed
        return [base + r for r in range(self.replications)]

    def points(self) -> list:
        return [None] if self.sweep_axis == "none" else list(self.sweep_values)


@dataclass
class RunResult:
    policy: str
    seed: int
    sweep_value: float | None
    rows: list
    aoi_max: np.ndarray
    sdp_solves: int = 0
    sdp_failures: int = 0
    failed_slots: int = 0
    errors: list = field(default_factory=list)
    path: str | None = None

    @property
    def utility(self) -> np.ndarray:
        return np.array([r["utility"] for r in self.rows])

    @property
    def aoi_es(self) -> np.ndarray:
        return np.array([r["aoi_es"] for r in self.rows])

    @property
    def queue(self) -> np.ndarray:
        return np.array([r["queue"] for r in self.rows])


def decide(kind: pol.PolicyKind, sub, rng, cfg: EnvConfig, agent=None, relaxations=None):
    if kind is pol.PolicyKind.OPTIMAL:
        return pol.oracle_solve_p2(sub)
    if kind is pol.PolicyKind.FIXED:
        return pol.fixed_decide(sub, cfg.fixed_services)
    if kind in (pol.PolicyKind.SDP_ONLY, pol.PolicyKind.JSCR):
        rel = relaxations.solve(sub) if relaxations is not None else None
        fn = pol.sdp_only_decide if kind is pol.PolicyKind.SDP_ONLY else pol.jscr_decide
        return fn(sub, rng, rel)
    if agent is None:
        raise ValueError(f"policy {kind.value} needs a trained agent")
    return agent.decide(sub, rng)


def run_policy(cfg: EnvConfig, kind: pol.PolicyKind, seed: int, agent=None, sweep_value=None,
               relaxations: RelaxationCache | None = None) -> RunResult:
    """One episode of ``cfg.horizon`` slots; solver or decision errors fall back to FIXED for that slot."""
    kind = kind if isinstance(kind, pol.PolicyKind) else pol.PolicyKind.parse(kind)
    env = EdgeEnv(cfg, seed=seed)
    rng = keyed_rng(seed, "policy")
    if agent is not None and getattr(agent, "relaxations", "absent") is None and relaxations is not None:
        agent.relaxations = relaxations
    res = RunResult(kind.value, seed, sweep_value, [], env.aoi_max.copy())
    cum = 0.0
    while not env.done:
        sub = build_subproblem(cfg, env.services, env.tasks, env.queue, env.aoi_max)
        failed = False
        try:
            d = decide(kind, sub, rng, cfg, agent, relaxations)
            pol.validate_decision(sub, d)
            if kind in SDR_BASED and not d.info.get("sdp_skipped", False):
                res.sdp_solves += 1
                cert = d.info.get("certificate")
                if cert is None or not (cert.duality_gap <= CERT_TOL and cert.primal_infeasibility <= CERT_TOL):
                    res.sdp_failures += 1
                    raise SdpError("relaxation certificate outside tolerance")
        except (SdpError, ExtractionError, pol.InvalidDecision, FloatingPointError) as exc:
            if isinstance(exc, SdpError) and "certificate" not in str(exc):
                res.sdp_solves += 1
                res.sdp_failures += 1
            log.warning("slot %d (%s, seed %d): %s; using FIXED", env.t, kind.value, seed, exc)
            res.errors.append((env.t, str(exc)))
            d = pol.fixed_decide(sub, cfg.fixed_services)
            failed = True
        outcome = env.step(pol.to_slot_decision(d, env.tasks, cfg))
        cum += outcome.utility
        res.failed_slots += failed
        res.rows.append({"slot": env.t - 1, "utility": outcome.utility, "cost": outcome.cost,
                         "cumulative_utility": cum, "reward": -d.value, "failed": int(failed),
                         "aoi_es": outcome.aoi_es.copy(), "queue": outcome.queue.copy()})
    return res


def _fmt(v) -> str:
    return FLOAT_FMT % v


def metrics_csv(res: RunResult) -> str:
    J = len(res.aoi_max)
    out = io.StringIO()
    out.write("# aoi_max=" + ",".join(_fmt(a) for a in res.aoi_max) + "\n")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(BASE_COLUMNS + [f"aoi_es_{j}" for j in range(J)] + [f"queue_{j}" for j in range(J)])
    sweep = "" if res.sweep_value is None else _fmt(res.sweep_value)
    for r in res.rows:
        w.writerow([r["slot"], res.policy, res.seed, sweep, _fmt(r["utility"]), _fmt(r["cost"]),
                    _fmt(r["cumulative_utility"]), _fmt(r["reward"]), r["failed"]]
                   + [_fmt(a) for a in r["aoi_es"]] + [_fmt(q) for q in r["queue"]])
    return out.getvalue()


def run_file_name(res: RunResult, axis: str) -> str:
    tag = "" if res.sweep_value is None else f"_{axis}{_fmt(res.sweep_value)}"
    return f"{res.policy}{tag}_seed{res.seed}.csv"


def ensure_agents(spec: ExperimentSpec, progress=None) -> dict:
    """Train (on the base config) any learned policy that has no agent yet."""
    agents = dict(spec.agents)
    for kind in spec.policies:
        if kind in LEARNED and kind not in agents:
            agent = make_agent("ppo" if kind is pol.PolicyKind.OIODRL else "ppo_only", spec.cfg, spec.hp)
            train_agent(agent, progress=progress)
            agents[kind] = agent
    return agents


def run_experiment(spec: ExperimentSpec, progress=None) -> tuple[list, list]:
    """Run every (sweep value, policy, seed); returns ``(results, summary_rows)``."""
    os.makedirs(spec.out_dir, exist_ok=True)
    agents = ensure_agents(spec)
    relaxations = RelaxationCache()
    results = []
    for value in spec.points():
        cfg = sweep_config(spec.cfg, spec.sweep_axis, value)
        for kind in spec.policies:
            for seed in spec.seeds:
                res = run_policy(cfg, kind, seed, agents.get(kind), value, relaxations)
                res.path = os.path.join(spec.out_dir, run_file_name(res, spec.sweep_axis))
                with open(res.path, "w", newline="") as fh:
                    fh.write(metrics_csv(res))
                results.append(res)
                if progress is not None:
                    progress(res)
    rows = summarize([r.path for r in results])
    write_summary(rows, os.path.join(spec.out_dir, "summary.csv"))
    return results, rows


def read_metrics(path) -> dict:
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith("# aoi_max="):
            raise MetricsFormatError(f"{path}: missing aoi_max header")
        try:
            aoi_max = np.array([float(v) for v in first.split("=", 1)[1].split(",")])
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            if header[:len(BASE_COLUMNS)] != BASE_COLUMNS:
                raise MetricsFormatError(f"{path}: unexpected columns")
            J = len(aoi_max)
            rows = list(reader)
            util = np.array([float(r["utility"]) for r in rows])
            cum = np.array([float(r["cumulative_utility"]) for r in rows])
            failed = np.array([int(r["failed"]) for r in rows])
            aoi = np.array([[float(r[f"aoi_es_{j}"]) for j in range(J)] for r in rows]).reshape(len(rows), J)
            queue = np.array([[float(r[f"queue_{j}"]) for j in range(J)] for r in rows]).reshape(len(rows), J)
            cost = np.array([float(r["cost"]) for r in rows])
        except (KeyError, ValueError, TypeError) as exc:
            raise MetricsFormatError(f"{path}: {exc}") from exc
    if not rows:
        raise MetricsFormatError(f"{path}: no rows")
    return {"policy": rows[0]["policy"], "seed": int(rows[0]["seed"]), "sweep_value": rows[0]["sweep_value"],
            "aoi_max": aoi_max, "utility": util, "cumulative_utility": cum, "failed": failed,
            "aoi_es": aoi, "queue": queue, "cost": cost}


def summarize(paths) -> list:
    """One summary row per metrics file (long-term averages and AoI-threshold check)."""
    out = []
    for path in paths:
        m = read_metrics(path)
        avg_aoi = m["aoi_es"].mean(axis=0)
        row = {"policy": m["policy"], "seed": m["seed"], "sweep_value": m["sweep_value"],
               "slots": len(m["utility"]), "avg_utility": float(m["utility"].mean()),
               "cumulative_utility": float(m["cumulative_utility"][-1]), "avg_cost": float(m["cost"].mean()),
               "avg_queue": float(m["queue"].mean()), "max_queue": float(m["queue"].max()),
               "ok_fraction": float(1 - m["failed"].mean()),
               "aoi_satisfied": bool(np.all(avg_aoi <= m["aoi_max"])),
               "avg_aoi": avg_aoi, "aoi_max": m["aoi_max"]}
        out.append(row)
    return out


def write_summary(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["policy", "seed", "sweep_value", "slots", "avg_utility", "cumulative_utility", "avg_cost",
                    "avg_queue", "max_queue", "ok_fraction", "aoi_satisfied", "avg_aoi", "aoi_max"])
        for r in rows:
            w.writerow([r["policy"], r["seed"], r["sweep_value"], r["slots"], _fmt(r["avg_utility"]),
                        _fmt(r["cumulative_utility"]), _fmt(r["avg_cost"]), _fmt(r["avg_queue"]),
                        _fmt(r["max_queue"]), _fmt(r["ok_fraction"]), int(r["aoi_satisfied"]),
                        " ".join(_fmt(a) for a in r["avg_aoi"]), " ".join(_fmt(a) for a in r["aoi_max"])])


def aggregate(rows) -> list:
    """Average the per-seed summary rows for each (policy, sweep value)."""
    groups: dict = {}
    for r in rows:
        groups.setdefault((r["policy"], r["sweep_value"]), []).append(r)
    out = []
    for (policy, sweep), rs in groups.items():
        out.append({"policy": policy, "sweep_value": sweep, "seeds": len(rs),
                    "avg_utility": float(np.mean([r["avg_utility"] for r in rs])),
                    "cumulative_utility": float(np.mean([r["cumulative_utility"] for r in rs])),
                    "avg_queue": float(np.mean([r["avg_queue"] for r in rs])),
                    "max_queue": float(np.max([r["max_queue"] for r in rs])),
                    "ok_fraction": float(np.mean([r["ok_fraction"] for r in rs])),
                    "aoi_satisfied": all(r["aoi_satisfied"] for r in rs)})
    return out
