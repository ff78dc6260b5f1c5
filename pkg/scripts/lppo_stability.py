"""Lagrangian PPO with and without the safety state on the pendulum.

Prints, per seed, the final mean discounted cost of the augmented learner and the
standard deviation of both return curves over the last 50 epochs.

    python scripts/lppo_stability.py --seeds 0..2 --out runs/lppo
"""

import argparse
from pathlib import Path

import numpy as np

from simmer import config as config_mod
from simmer.harness import parse_seeds, read_epochs, report, sweep

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--seeds", default="0..2")
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--window", type=int, default=50)
    parser.add_argument("--out", default="runs/lppo")
    args = parser.parse_args()

    names = ("lppo_saute", "lppo_plain")
    configs = [config_mod.load(CONFIGS / f"{n}.ini") for n in names]
    seeds = parse_seeds(args.seeds)
    sweep(configs, seeds, args.out, jobs=args.jobs)
    report(args.out)

    d_target = configs[0].d_target
    print(f"target budget {d_target:g}")
    for seed in seeds:
        rows = {n: read_epochs(Path(args.out) / n / f"seed_{seed}" / "epochs.csv") for n in names}
        cost = np.mean(rows[names[0]]["cost_stat"][-10:])
        stds = [np.std(rows[n]["mean_return"][-args.window:]) for n in names]
        print(f"seed {seed}: final cost {cost:.2f}  return std augmented {stds[0]:.3f}  plain {stds[1]:.3f}")


if __name__ == "__main__":
    main()
