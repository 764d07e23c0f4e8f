"""Command line: ``freshedge run | summarize | train``."""
from __future__ import annotations

import argparse
import glob
import logging
import os
import sys

from . import harness
from .config import ConfigError, load_config
from .policy import PolicyKind
from .ppo import Hyperparams, load_agent, make_agent, train_agent


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="freshedge", description="Freshness-aware edge caching experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run policies over the horizon and write metric CSVs")
    run.add_argument("--config", help="key=value config file (FRESHEDGE_<KEY> variables override it)")
    run.add_argument("--policy", default="optimal",
                     help="comma-separated list of " + ",".join(k.value for k in PolicyKind))
    run.add_argument("--sweep", help="axis=v1,v2,... with axis in V, F, S, S_with_proportional_F")
    run.add_argument("--seeds", type=int, default=1, help="replications (seeds base, base+1, ...)")
    run.add_argument("--out", default="results")
    run.add_argument("--checkpoint", action="append", default=[],
                     help="trained agent for oiodrl/ppo_only (repeatable); untrained ones are trained first")
    run.add_argument("--rounds", type=int, help="training rounds when an agent must be trained")

    summ = sub.add_parser("summarize", help="summarize metric CSVs")
    summ.add_argument("paths", nargs="+", help="metric CSV files or directories")
    summ.add_argument("--out", help="write the summary CSV here")

    tr = sub.add_parser("train", help="train a learning-stage agent")
    tr.add_argument("--config")
    tr.add_argument("--agent", default="ppo", choices=["ppo", "a2c", "dqn", "ppo_only"])
    tr.add_argument("--rounds", type=int, default=Hyperparams.rounds)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--checkpoint", required=True, help="output checkpoint path")
    tr.add_argument("--curve", help="write the learning curve CSV here")
    return p


def _metric_files(paths):
    out = []
    for p in paths:
        if os.path.isdir(p):
            out += sorted(f for f in glob.glob(os.path.join(p, "*.csv")) if os.path.basename(f) != "summary.csv")
        else:
            out.append(p)
    return out


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    policies = [PolicyKind.parse(p) for p in args.policy.split(",") if p.strip()]
    axis, values = harness.parse_sweep(args.sweep)
    hp = Hyperparams(rounds=args.rounds) if args.rounds else Hyperparams()
    agents = {}
    for path in args.checkpoint:
        agent = load_agent(path, cfg, hp)
        kind = PolicyKind.PPO_ONLY if agent.kind == "ppo_only" else PolicyKind.OIODRL
        agents[kind] = agent
    spec = harness.ExperimentSpec(cfg, policies, args.out, hp, axis, values, args.seeds, agents=agents)
    results, rows = harness.run_experiment(
        spec, progress=lambda r: print(f"{r.policy} seed={r.seed} sweep={r.sweep_value}: "
                                       f"avg utility {r.utility.mean():.6g}, failed slots {r.failed_slots}"))
    _print_table(harness.aggregate(rows))
    return 0


def _print_table(rows) -> None:
    print(f"{'policy':<10} {'sweep':>10} {'seeds':>5} {'avg_utility':>14} {'avg_queue':>10} {'ok':>6} aoi_ok")
    for r in rows:
        print(f"{r['policy']:<10} {str(r['sweep_value']):>10} {r['seeds']:>5} {r['avg_utility']:>14.6g} "
              f"{r['avg_queue']:>10.4g} {r['ok_fraction']:>6.3f} {r['aoi_satisfied']}")


def _cmd_summarize(args) -> int:
    rows = harness.summarize(_metric_files(args.paths))
    if args.out:
        harness.write_summary(rows, args.out)
    _print_table(harness.aggregate(rows))
    return 0


def _cmd_train(args) -> int:
    cfg = load_config(args.config)
    hp = Hyperparams(rounds=args.rounds, rng_seed=args.seed)
    agent = make_agent(args.agent, cfg, hp)
    curve = train_agent(agent, progress=lambda r, m, s: print(f"round {r}: mean reward {m:.6g}"))
    agent.save(args.checkpoint)
    if args.curve:
        curve.write_csv(args.curve)
    return 0


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return {"run": _cmd_run, "summarize": _cmd_summarize, "train": _cmd_train}[args.command](args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"freshedge: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
