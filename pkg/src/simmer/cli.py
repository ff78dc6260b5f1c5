"""Command line entry point: ``simmer run|sweep|report|oracle``."""

from __future__ import annotations

import argparse
import glob
import json
import logging
import os
import sys
from pathlib import Path

from simmer import config as config_mod
from simmer import harness, oracle
from simmer.envs import load_grid


def _load_config(path, overrides):
    cfg = config_mod.load(path) if path else config_mod.TrainConfig()
    return config_mod.apply_overrides(cfg, config_mod.parse_overrides(overrides))


def _seed(value):
    if value is not None:
        return value
    env = os.environ.get("SIMMER_SEED")
    return int(env) if env not in (None, "") else None


def cmd_run(args):
    cfg = _load_config(args.config, args.set)
    seed = _seed(args.seed)
    if seed is not None:
        cfg = config_mod.apply_overrides(cfg, {"seed": str(seed)})
    out = Path(args.out) if args.out else Path("runs") / cfg.name / f"seed_{cfg.seed}"
    run_dir = harness.run_experiment(cfg, out)
    summary = json.loads((run_dir / "summary.json").read_text())
    print(json.dumps(summary, indent=2))
    return 0 if summary["status"] == "ok" else 1


def cmd_sweep(args):
    paths = sorted(p for pattern in args.configs for p in glob.glob(pattern))
    if not paths:
        print(f"no config files match {args.configs}", file=sys.stderr)
        return 2
    configs = [_load_config(p, args.set) for p in paths]
    table = harness.sweep(configs, harness.parse_seeds(args.seeds), args.out, jobs=args.jobs)
    print(table.read_text(), end="")
    return 0


def cmd_report(args):
    path = harness.report(args.runs)
    print(f"wrote {path} and plots in {path.parent}")
    return 0


def cmd_oracle(args):
    grid = load_grid(args.grid)
    rep = oracle.separation_report(grid, args.budget)
    out = Path(args.out) if args.out else oracle.default_golden_path()
    oracle.write_golden(rep, out)
    for key in sorted(rep):
        print(f"{key} = {rep[key]!r}")
    print(f"wrote {out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="simmer", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="train one config for one seed")
    p.add_argument("--config", help="INI config file (defaults when omitted)")
    p.add_argument("--seed", type=int, help="overrides the config seed; falls back to $SIMMER_SEED")
    p.add_argument("--out", help="run directory (default runs/<name>/seed_<seed>)")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config field")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run configs over several seeds")
    p.add_argument("--configs", nargs="+", required=True, help="config files or glob patterns")
    p.add_argument("--seeds", default="0..2", help="'a..b' or a comma list")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default="runs")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="aggregate curves and draw SVG plots")
    p.add_argument("--runs", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("oracle", help="exact grid solvers")
    osub = p.add_subparsers(dest="oracle_command", required=True)
    regen = osub.add_parser("regen", help="recompute the separation golden file")
    regen.add_argument("--grid", help="grid file (default: the shipped crossing fixture)")
    regen.add_argument("--budget", type=int, help="override the grid's budget")
    regen.add_argument("--out", help="golden file path (default: the packaged one)")
    regen.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
