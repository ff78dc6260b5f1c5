"""Safety-budget schedulers: fixed, naive step schedule, PI Simmer and Q Simmer.

Every controller exposes the same small protocol used by the training loop:
``budget`` (the budget to train with this epoch), ``update(epoch, statistic)``
(consume the epoch's cost statistic and move to the next budget) and
``snapshot()`` (internal state for the per-epoch log).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

DECREASE, STAY, INCREASE = -1, 0, 1
Q_ACTIONS = (DECREASE, STAY, INCREASE)  # column order of the Q table
GREEDY_TIE_ORDER = (STAY, INCREASE, DECREASE)


@dataclass
class BudgetSchedule:
    levels: tuple[float, ...] = (1.0, 5.0, 10.0, 15.0, 20.0)
    epochs_per_level: int = 60

    def __post_init__(self):
        self.levels = tuple(float(x) for x in self.levels)
        if not self.levels:
            raise ValueError("schedule needs at least one level")
        if any(b < a for a, b in zip(self.levels, self.levels[1:])):
            raise ValueError("schedule levels must be nondecreasing")
        if self.epochs_per_level < 1:
            raise ValueError("epochs_per_level must be >= 1")

    @property
    def d_start(self):
        return self.levels[0]

    @property
    def d_target(self):
        return self.levels[-1]

    @property
    def n_levels(self):
        return len(self.levels)


def naive_schedule(k: int, schedule: BudgetSchedule) -> float:
    """Step the budget up one level every ``epochs_per_level`` epochs, then hold."""
    if k < 0:
        raise ValueError("epoch index must be >= 0")
    return schedule.levels[min(k // schedule.epochs_per_level, schedule.n_levels - 1)]


class FixedBudget:
    def __init__(self, budget: float):
        self.budget = float(budget)

    def reference(self, k):
        return self.budget

    def update(self, k, statistic):
        return self.budget

    def snapshot(self):
        return {}


class NaiveBudget:
    def __init__(self, schedule: BudgetSchedule):
        self.schedule = schedule
        self.budget = schedule.d_start

    def reference(self, k):
        return naive_schedule(k, self.schedule)

    def update(self, k, statistic):
        self.budget = naive_schedule(k + 1, self.schedule)
        return self.budget

    def snapshot(self):
        return {}


# --------------------------------------------------------------------------- #
# PI Simmer
# --------------------------------------------------------------------------- #


@dataclass
class PiSimmerConfig:
    kp: float = 0.01
    ki: float = 0.005
    k_aw: float = 0.01
    tau: float = 0.995
    ti: int | None = 100  # integral window in epochs; None = unbounded
    delta_d: float = 1.0

    def __post_init__(self):
        if min(self.kp, self.ki, self.k_aw) < 0:
            raise ValueError("PI gains must be nonnegative")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        if self.delta_d <= 0:
            raise ValueError("delta_d must be positive")
        if self.ti is not None and self.ti < 1:
            raise ValueError("ti must be >= 1")


@dataclass
class PiSimmerState:
    budget: float
    d_start: float
    d_target: float
    w: float = 0.0
    window: deque = field(default_factory=deque)
    u_raw: float = 0.0
    u: float = 0.0

    @classmethod
    def fresh(cls, schedule: BudgetSchedule, cfg: PiSimmerConfig):
        return cls(
            budget=schedule.d_start,
            d_start=schedule.d_start,
            d_target=schedule.d_target,
            window=deque(maxlen=cfg.ti),
        )

    @property
    def integral(self):
        return float(sum(self.window))


def pi_simmer_step(state: PiSimmerState, d_ref: float, observed_cost: float, cfg: PiSimmerConfig) -> PiSimmerState:
    """One PI Simmer update; returns a new state holding the next budget.

    The filtered error enters both the P and the I path; the I path sums the
    last ``ti`` filtered errors (current one included). The anti-windup term
    feeds back the previous saturation error ``u - u_raw``.
    """
    if not np.isfinite(observed_cost):
        raise ValueError(f"observed cost must be finite, got {observed_cost}")
    e = d_ref - observed_cost
    w = (1.0 - cfg.tau) * state.w + cfg.tau * e
    window = deque(state.window, maxlen=cfg.ti)
    window.append(w)
    u_raw = cfg.kp * w + cfg.ki * sum(window) + cfg.k_aw * (state.u - state.u_raw)
    u = min(max(u_raw, -cfg.delta_d), cfg.delta_d)
    budget = min(max(state.budget + u, state.d_start), state.d_target)
    return PiSimmerState(budget, state.d_start, state.d_target, w, window, u_raw, u)


class PiSimmer:
    """PI Simmer tracking the naive schedule as its reference."""

    def __init__(self, schedule: BudgetSchedule, cfg: PiSimmerConfig):
        self.schedule = schedule
        self.cfg = cfg
        self.state = PiSimmerState.fresh(schedule, cfg)

    @property
    def budget(self):
        return self.state.budget

    def reference(self, k):
        return naive_schedule(k, self.schedule)

    def update(self, k, statistic):
        self.state = pi_simmer_step(self.state, self.reference(k), statistic, self.cfg)
        return self.state.budget

    def snapshot(self):
        return {"w": self.state.w, "integral": self.state.integral}


# --------------------------------------------------------------------------- #
# Q Simmer
# --------------------------------------------------------------------------- #


@dataclass
class QSimmerConfig:
    lr: float = 0.05
    epsilon: float = 0.95  # probability of acting GREEDILY
    delta: float = 1.0
    tau: float = 0.995

    def __post_init__(self):
        if not 0.0 <= self.lr <= 1.0:
            raise ValueError("lr must lie in [0, 1]")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must lie in [0, 1]")


@dataclass
class QSimmerState:
    q: np.ndarray  # (K, 3) columns ordered as Q_ACTIONS
    level: int = 0
    filtered_cost: float = 0.0

    @classmethod
    def fresh(cls, n_levels: int):
        return cls(q=np.zeros((n_levels, 3)))


def _column(a):
    if a not in Q_ACTIONS:
        raise ValueError(f"Q Simmer action must be one of {Q_ACTIONS}, got {a!r}")
    return a + 1


def q_simmer_reward(s: float, o: float, a: int, delta: float) -> float:
    """Reward of moving the budget by ``a`` when the budget is ``s`` and the cost ``o``.

    Regions overlap on ``|s - o| == delta``; the unsafe region is checked first,
    then borderline, then safe.
    """
    _column(a)
    gap = s - o
    if gap <= -delta:
        return {DECREASE: 2.0, STAY: -1.0, INCREASE: -1.0}[a]
    if abs(gap) <= delta:
        return {DECREASE: -1.0, STAY: 1.0, INCREASE: 1.0}[a]
    return {DECREASE: -1.0, STAY: 1.0, INCREASE: 2.0}[a]


def valid_actions(level: int, n_levels: int) -> list[int]:
    return [a for a in Q_ACTIONS if 0 <= level + a < n_levels]


def q_simmer_update(q: np.ndarray, s: int, a: int, r: float, s_next: int, lr: float) -> np.ndarray:
    """Undiscounted Q update, bootstrapping over the actions valid at ``s_next``."""
    if not 0.0 <= lr <= 1.0:
        raise ValueError("lr must lie in [0, 1]")
    out = q.copy()
    cols = [_column(b) for b in valid_actions(s_next, q.shape[0])]
    bootstrap = q[s_next, cols].max()
    j = _column(a)
    out[s, j] = (1.0 - lr) * q[s, j] + lr * (r + bootstrap)
    return out


def q_greedy(q: np.ndarray, s: int) -> int:
    """Argmax over valid actions; ties go to stay, then increase, then decrease."""
    valid = valid_actions(s, q.shape[0])
    ordered = [a for a in GREEDY_TIE_ORDER if a in valid]
    values = [q[s, _column(a)] for a in ordered]
    return ordered[int(np.argmax(values))]


def q_simmer_act(q: np.ndarray, s: int, epsilon: float, rng: np.random.Generator) -> int:
    """Greedy with probability ``epsilon``, otherwise uniform over valid actions."""
    if rng.random() < epsilon:
        return q_greedy(q, s)
    valid = valid_actions(s, q.shape[0])
    return valid[int(rng.integers(len(valid)))]


def q_simmer_observe(filtered_cost: float, raw_statistic: float, tau: float) -> float:
    """Low-pass filter of the observed cost statistic."""
    return (1.0 - tau) * filtered_cost + tau * raw_statistic


class QSimmer:
    """Q-learning over budget levels.

    Each epoch the filtered cost is compared with the current level's budget,
    an action is chosen, rewarded immediately from that comparison, and the
    table is updated for the resulting level change.
    """

    def __init__(self, schedule: BudgetSchedule, cfg: QSimmerConfig, rng: np.random.Generator):
        self.schedule = schedule
        self.cfg = cfg
        self.rng = rng
        self.state = QSimmerState.fresh(schedule.n_levels)

    @property
    def budget(self):
        return self.schedule.levels[self.state.level]

    def reference(self, k):
        return self.budget

    def update(self, k, statistic):
        st, cfg = self.state, self.cfg
        o = q_simmer_observe(st.filtered_cost, statistic, cfg.tau)
        s = st.level
        a = q_simmer_act(st.q, s, cfg.epsilon, self.rng)
        r = q_simmer_reward(self.schedule.levels[s], o, a, cfg.delta)
        s_next = s + a
        q = q_simmer_update(st.q, s, a, r, s_next, cfg.lr)
        self.state = QSimmerState(q, s_next, o)
        self.last = {"action": a, "reward": r}
        return self.budget

    def snapshot(self):
        return {"q_level": self.state.level, "filtered_cost": self.state.filtered_cost}
