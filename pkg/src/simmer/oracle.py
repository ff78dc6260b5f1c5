"""Independent ground truth: exact solvers for the augmented grid and gradient checks.

The augmented grid MDP enumerates ``(t, z, cell)`` with integer budgets and
``gamma_l = 1``, so it is finite and acyclic; value iteration on it is exact.
:func:`best_markov_policy` searches the policies that see only the cell, which is
what a learner without the safety state can represent.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from simmer.envs import GridSpec, grid_move
from simmer.saute import reshape_reward


@dataclass
class FiniteMdp:
    """Deterministic finite MDP: ``next_state[s, a]``, ``reward[s, a]``."""

    next_state: np.ndarray
    reward: np.ndarray
    terminal: np.ndarray
    gamma: float = 1.0

    @property
    def n_states(self):
        return self.next_state.shape[0]


def q_values(mdp: FiniteMdp, values: np.ndarray) -> np.ndarray:
    cont = np.where(mdp.terminal[mdp.next_state], 0.0, values[mdp.next_state])
    q = mdp.reward + mdp.gamma * cont
    q[mdp.terminal] = 0.0
    return q


def greedy_policy(q: np.ndarray, atol: float = 1e-9) -> np.ndarray:
    """Argmax with ties broken toward the lowest action index (N, S, E, W)."""
    best = q.max(axis=1, keepdims=True)
    return np.argmax(q >= best - atol, axis=1)


def value_iteration(mdp: FiniteMdp, tol: float = 1e-10, max_iter: int = 100_000):
    """Synchronous value iteration until the Bellman residual drops below ``tol``.

    Returns ``(values, greedy_policy)``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    values = np.zeros(mdp.n_states)
    for _ in range(max_iter):
        new = q_values(mdp, values).max(axis=1)
        new[mdp.terminal] = 0.0
        residual = np.max(np.abs(new - values)) if values.size else 0.0
        values = new
        if residual < tol:
            break
    else:
        raise RuntimeError("value iteration did not converge")
    return values, greedy_policy(q_values(mdp, values))


class AugmentedGridMdp(FiniteMdp):
    """The grid with state ``(t, z, cell)``; ``z`` counts remaining integer budget.

    ``z`` ranges over ``d, d-1, ..., d-H`` and is stored as ``zi = d - z``.
    Reaching the goal or the horizon is terminal.
    """

    def __init__(self, grid: GridSpec, budget: int, delta_penalty: float | None = None, augmented: bool = True):
        if budget != int(budget):
            raise ValueError("the exact grid oracle needs an integer budget")
        self.grid = grid
        self.budget = int(budget)
        self.horizon = H = grid.horizon
        self.delta_penalty = float(H if delta_penalty is None else delta_penalty)
        self.n_z = H + 1
        n_cells = grid.n_cells
        n_states = (H + 1) * self.n_z * n_cells
        next_state = np.zeros((n_states, 4), dtype=np.int64)
        reward = np.zeros((n_states, 4))
        terminal = np.zeros(n_states, dtype=bool)
        goal = grid.index(grid.goal)
        for t in range(H + 1):
            for zi in range(self.n_z):
                z = self.budget - zi
                for ci in range(n_cells):
                    s = self.index(t, zi, ci)
                    if t == H or ci == goal:
                        terminal[s] = True
                        next_state[s] = s
                        continue
                    cell = grid.cell(ci)
                    for a in range(4):
                        nxt = grid_move(cell, a, grid)
                        c = int(grid.cost(nxt))
                        r = grid.goal_reward if nxt == grid.goal else -grid.step_penalty
                        if augmented:
                            r = reshape_reward(r, z, self.delta_penalty)
                        next_state[s, a] = self.index(t + 1, min(zi + c, self.n_z - 1), grid.index(nxt))
                        reward[s, a] = r
        super().__init__(next_state, reward, terminal, gamma=1.0)

    def index(self, t, zi, ci):
        return (t * self.n_z + zi) * self.grid.n_cells + ci

    def decode(self, s):
        rest, ci = divmod(int(s), self.grid.n_cells)
        t, zi = divmod(rest, self.n_z)
        return t, self.budget - zi, self.grid.cell(ci)

    def start_state(self, i=0):
        return self.index(0, 0, self.grid.index(self.grid.starts[i]))


@dataclass
class Rollout:
    cells: list
    actions: list
    ret: float
    cost: float
    z_final: float
    reached_goal: bool
    min_z: float


def rollout(mdp: AugmentedGridMdp, policy: np.ndarray, start: int = 0) -> Rollout:
    """Follow a greedy table from start ``start``; returns raw return and cost."""
    grid = mdp.grid
    s = mdp.start_state(start)
    cells = [grid.starts[start]]
    actions = []
    ret = cost = 0.0
    z = min_z = float(mdp.budget)
    while not mdp.terminal[s]:
        a = int(policy[s])
        s = int(mdp.next_state[s, a])
        cell = mdp.decode(s)[2]
        c = grid.cost(cell)
        ret += grid.goal_reward if cell == grid.goal else -grid.step_penalty
        cost += c
        z -= c
        min_z = min(min_z, z)
        cells.append(cell)
        actions.append(a)
    return Rollout(cells, actions, ret, cost, z, cells[-1] == grid.goal, min_z)


def solve_augmented(grid: GridSpec, budget: int, delta_penalty=None, tol=1e-10):
    """Optimal budget-aware value averaged over start cells, plus the solution."""
    mdp = AugmentedGridMdp(grid, budget, delta_penalty)
    values, policy = value_iteration(mdp, tol)
    r_star = float(np.mean([values[mdp.start_state(i)] for i in range(len(grid.starts))]))
    return r_star, mdp, values, policy


class EnumerationLimitError(RuntimeError):
    pass


def _goal_distances(grid: GridSpec):
    dist = {grid.goal: 0}
    queue = deque([grid.goal])
    while queue:
        cell = queue.popleft()
        for a in range(4):
            prev = grid_move(cell, a, grid)  # moves are symmetric on an open grid
            if prev not in dist:
                dist[prev] = dist[cell] + 1
                queue.append(prev)
    return dist


def best_markov_policy(grid: GridSpec, budget: int, max_nodes: int = 2_000_000):
    """Best budget-blind deterministic stationary policy (cell -> action).

    A policy is feasible when, from every start cell, it reaches the goal within
    the horizon with accumulated cost ``<= budget``. The objective is the mean
    return over start cells. The search assigns actions lazily, only on visited
    cells, so every policy is covered up to behaviour on unvisited cells; branches
    are cut with the augmented optimum as an upper bound.

    Returns ``(best_mean_return, feasible, policy_dict)``.
    Raises :class:`EnumerationLimitError` after ``max_nodes`` search nodes.
    """
    H = grid.horizon
    budget = int(budget)
    _, mdp, values, _ = solve_augmented(grid, budget)
    dist = _goal_distances(grid)
    n_starts = len(grid.starts)
    start_bound = [values[mdp.start_state(i)] for i in range(n_starts)]
    future_bound = [sum(start_bound[i + 1 :]) for i in range(n_starts)]

    policy: dict = {}
    best = {"ret": -math.inf, "policy": None}
    nodes = 0

    def bound(i, cell, t, cost):
        return values[mdp.index(t, int(cost), grid.index(cell))] + future_bound[i]

    def walk(i, cell, t, cost, ret, visited, done_ret):
        nonlocal nodes
        nodes += 1
        if nodes > max_nodes:
            raise EnumerationLimitError(f"policy search exceeded {max_nodes} nodes")
        if cell == grid.goal:
            total = done_ret + ret
            if i + 1 == n_starts:
                if total > best["ret"]:
                    best["ret"] = total
                    best["policy"] = dict(policy)
                return
            walk(i + 1, grid.starts[i + 1], 0, 0, 0.0, {grid.starts[i + 1]}, total)
            return
        if t == H or dist.get(cell, math.inf) > H - t:
            return
        if done_ret + ret + bound(i, cell, t, cost) <= best["ret"] + 1e-12:
            return
        assigned = cell in policy
        for a in ([policy[cell]] if assigned else range(4)):
            nxt = grid_move(cell, a, grid)
            c = grid.cost(nxt)
            if cost + c > budget or (nxt in visited and nxt != grid.goal):
                continue
            if not assigned:
                policy[cell] = a
            r = grid.goal_reward if nxt == grid.goal else -grid.step_penalty
            visited.add(nxt)
            walk(i, nxt, t + 1, cost + c, ret + r, visited, done_ret)
            visited.discard(nxt)
        if not assigned:
            policy.pop(cell, None)

    walk(0, grid.starts[0], 0, 0, 0.0, {grid.starts[0]}, 0.0)
    if best["policy"] is None:
        return -math.inf, False, None
    return best["ret"] / n_starts, True, best["policy"]


def finite_diff_check(loss_fn, params, h: float = 1e-6) -> float:
    """Max elementwise relative error between analytic and central-difference gradients.

    ``loss_fn(params)`` returns ``(value, grads)`` with ``grads`` shaped like
    ``params`` (a list of arrays). The denominator is ``max(|g|, 1e-8)``.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    params = [np.array(p, dtype=np.float64) for p in params]
    _, grads = loss_fn(params)
    worst = 0.0
    for k, p in enumerate(params):
        flat = p.reshape(-1)
        g = np.asarray(grads[k], dtype=np.float64).reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            f_plus = loss_fn(params)[0]
            flat[j] = orig - h
            f_minus = loss_fn(params)[0]
            flat[j] = orig
            fd = (f_plus - f_minus) / (2.0 * h)
            worst = max(worst, abs(fd - g[j]) / max(abs(g[j]), 1e-8))
    return worst


# --------------------------------------------------------------------------- #
# golden files
# --------------------------------------------------------------------------- #

GOLDEN_NAME = "crossing.golden"


def separation_report(grid: GridSpec, budget: int | None = None) -> dict:
    """Budget-aware optimum vs the best budget-blind policy on ``grid``."""
    budget = int(grid.budget if budget is None else budget)
    r_star, mdp, _, policy = solve_augmented(grid, budget)
    rolls = [rollout(mdp, policy, i) for i in range(len(grid.starts))]
    markov_ret, feasible, _ = best_markov_policy(grid, budget)
    return {
        "budget": budget,
        "r_star": r_star,
        "markov_return": markov_ret,
        "markov_feasible": feasible,
        "margin": r_star - markov_ret,
        "augmented_safe": all(r.min_z >= 0 and r.reached_goal for r in rolls),
    }


def write_golden(report: dict, path) -> None:
    lines = ["# generated by `simmer oracle regen`; do not edit by hand"]
    lines += [f"{key} = {report[key]!r}" for key in sorted(report)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_golden(path=None) -> dict:
    if path is None:
        text = resources.files("simmer.data").joinpath(GOLDEN_NAME).read_text()
    else:
        text = Path(path).read_text()
    out = {}
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, value = (s.strip() for s in line.split("=", 1))
        if value in ("True", "False"):
            out[key] = value == "True"
        else:
            out[key] = float(value) if any(ch in value for ch in ".e") or value.startswith("-") else int(value)
    return out


def default_golden_path() -> Path:
    return Path(str(resources.files("simmer.data").joinpath(GOLDEN_NAME)))
