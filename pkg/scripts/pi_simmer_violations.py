"""Fixed target budget vs PI Simmer for the probability-one learner on the pendulum.

Trains both configs over several seeds, prints the number of trajectories whose
discounted cost exceeded the target budget, and draws the training curves.

    python scripts/pi_simmer_violations.py --seeds 0..2 --out runs/pi_simmer
"""

import argparse
import json
from pathlib import Path

from simmer import config as config_mod
from simmer.harness import parse_seeds, report, sweep

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--seeds", default="0..2")
    parser.add_argument("--epochs", type=int, default=None, help="shorten the runs")
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--out", default="runs/pi_simmer")
    args = parser.parse_args()

    configs = []
    for name in ("swingup_fixed", "swingup_pi"):
        cfg = config_mod.load(CONFIGS / f"{name}.ini")
        if args.epochs:
            cfg = config_mod.apply_overrides(cfg, {"epochs": str(args.epochs)})
        configs.append(cfg)
    sweep(configs, parse_seeds(args.seeds), args.out, jobs=args.jobs)
    report(args.out)

    runs = json.loads((Path(args.out) / "runs.json").read_text())
    by_seed = {}
    for r in runs:
        by_seed.setdefault(r["seed"], {})[r["name"]] = r.get("total_n_violations")
    print(f"{'seed':>4}  {'fixed':>6}  {'pi':>6}")
    for seed, row in sorted(by_seed.items()):
        print(f"{seed:>4}  {row.get('swingup_fixed')!s:>6}  {row.get('swingup_pi')!s:>6}")


if __name__ == "__main__":
    main()
