"""Tabular Q-learning on the budget-augmented grid."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np


class Transition(NamedTuple):
    state: int
    action: int
    reward: float
    next_state: int
    terminal: bool


def tabular_q_update(table: np.ndarray, tr: Transition, lr: float, gamma: float) -> np.ndarray:
    """One discounted Q-learning update; returns a new table."""
    out = table.copy()
    target = tr.reward if tr.terminal else tr.reward + gamma * table[tr.next_state].max()
    out[tr.state, tr.action] += lr * (target - table[tr.state, tr.action])
    return out


def tabular_q_update_(table: np.ndarray, tr: Transition, lr: float, gamma: float) -> None:
    """In-place variant used inside training loops."""
    target = tr.reward if tr.terminal else tr.reward + gamma * table[tr.next_state].max()
    table[tr.state, tr.action] += lr * (target - table[tr.state, tr.action])


def greedy_action(q_row: np.ndarray, atol: float = 1e-9) -> int:
    """First action (in table order) within ``atol`` of the maximum."""
    return int(np.flatnonzero(q_row >= q_row.max() - atol)[0])


def epsilon_greedy(q_row: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    if rng.random() < epsilon:
        return int(rng.integers(q_row.shape[0]))
    return greedy_action(q_row)


def run_episode(mdp, table, lr, epsilon, rng, gamma=1.0):
    """One epsilon-greedy Q-learning episode on an :class:`AugmentedGridMdp`.

    Returns the list of transitions taken (already applied to ``table``).
    """
    s = mdp.start_state(int(rng.integers(len(mdp.grid.starts))))
    transitions = []
    while not mdp.terminal[s]:
        a = epsilon_greedy(table[s], epsilon, rng)
        s2 = int(mdp.next_state[s, a])
        tr = Transition(s, a, float(mdp.reward[s, a]), s2, bool(mdp.terminal[s2]))
        tabular_q_update_(table, tr, lr, gamma)
        transitions.append(tr)
        s = s2
    return transitions
