"""Budget-aware vs budget-blind policies on the crossing grid.

Solves the augmented grid exactly, searches the best policy that only sees the
cell, and draws the paths each one takes from every start cell.

    python scripts/grid_separation.py [--grid my.grid] [--budget 2]
"""

import argparse

from simmer.envs import grid_move, load_grid
from simmer.oracle import best_markov_policy, rollout, solve_augmented


def blind_path(grid, policy, start):
    cells = [start]
    while cells[-1] != grid.goal and len(cells) <= grid.horizon:
        cells.append(grid_move(cells[-1], policy[cells[-1]], grid))
    return cells


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--grid")
    parser.add_argument("--budget", type=int)
    args = parser.parse_args()

    grid = load_grid(args.grid)
    budget = int(grid.budget if args.budget is None else args.budget)
    r_star, mdp, _, policy = solve_augmented(grid, budget)
    blind_ret, feasible, blind = best_markov_policy(grid, budget)
    print(f"budget {budget}: budget-aware optimum {r_star:g}, best budget-blind {blind_ret:g} (feasible={feasible})")
    for i, start in enumerate(grid.starts):
        roll = rollout(mdp, policy, i)
        print(f"\nstart {start}, budget-aware: return {roll.ret:g}, cost {roll.cost:g}")
        print(grid.render(roll.cells))
        if blind is not None:
            print(f"start {start}, budget-blind:")
            print(grid.render(blind_path(grid, blind, start)))


if __name__ == "__main__":
    main()
