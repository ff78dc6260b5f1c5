"""Q Simmer on a synthetic plant whose cost follows the budget level.

The plant reports ``cost = budget + noise`` for a while, then is forced unsafe
(``cost = budget + offset``). Prints the level and greedy action each epoch.

    python scripts/q_simmer_plant.py --seed 0 --warmup 100 --forced 200
"""

import argparse

import numpy as np

from simmer.controllers import BudgetSchedule, QSimmer, QSimmerConfig, q_greedy


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--warmup", type=int, default=100)
    parser.add_argument("--forced", type=int, default=200)
    parser.add_argument("--offset", type=float, default=10.0)
    parser.add_argument("--noise", type=float, default=0.2)
    parser.add_argument("--every", type=int, default=10)
    args = parser.parse_args()

    ctrl = QSimmer(BudgetSchedule(), QSimmerConfig(), np.random.default_rng(args.seed))
    noise = np.random.default_rng(args.seed + 10_000)
    for k in range(args.warmup + args.forced):
        extra = args.offset if k >= args.warmup else 0.0
        ctrl.update(k, ctrl.budget + extra + args.noise * noise.standard_normal())
        if k % args.every == 0 or k == args.warmup:
            phase = "forced" if extra else "tracking"
            greedy = q_greedy(ctrl.state.q, ctrl.state.level)
            print(f"{k:4d} {phase:8s} budget {ctrl.budget:5.1f}  filtered cost {ctrl.state.filtered_cost:6.2f}  greedy {greedy:+d}")


if __name__ == "__main__":
    main()
