"""Desk-scale environments: safe pendulum swing-up and a deterministic crossing grid.

Both environments are deterministic value types. Stepping functions are pure and
return a :class:`StepOutcome`; the pendulum also has a vectorised stepper used by
the rollout collector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import NamedTuple

import numpy as np

REWARD_NORMALIZER = math.pi**2 + 6.404
MAX_SPEED = 8.0


class StepOutcome(NamedTuple):
    next_state: object
    reward: float
    cost: float
    done: bool


# --------------------------------------------------------------------------- #
# Pendulum
# --------------------------------------------------------------------------- #


@dataclass(frozen=True)
class PendulumState:
    theta: float  # radians from upright, wrapped to (-pi, pi]
    theta_dot: float

    def __post_init__(self):
        object.__setattr__(self, "theta", float(wrap_angle(self.theta)))
        object.__setattr__(self, "theta_dot", float(np.clip(self.theta_dot, -MAX_SPEED, MAX_SPEED)))


@dataclass(frozen=True)
class PendulumSpec:
    dt: float = 0.05
    mass: float = 1.0
    length: float = 1.0
    gravity: float = 10.0
    torque_limit: float = 2.0
    horizon: int = 200
    delta_region: float = 25.0  # degrees
    init_theta_range: float = math.pi
    init_theta_dot_range: float = 1.0

    def __post_init__(self):
        if self.dt <= 0 or self.horizon < 1 or self.torque_limit <= 0:
            raise ValueError(f"invalid pendulum spec: {self}")


def wrap_angle(theta):
    """Wrap to (-pi, pi]."""
    wrapped = np.pi - np.mod(np.pi - np.asarray(theta, dtype=float), 2 * np.pi)
    return wrapped if np.ndim(wrapped) else float(wrapped)


def pendulum_reward(theta, theta_dot, action):
    """Swing-up reward in [0, 1]; equals 1 only upright, at rest, with zero torque."""
    return 1.0 - (theta**2 + 0.1 * theta_dot**2 + 0.001 * action**2) / REWARD_NORMALIZER


def pendulum_cost(theta_deg, delta_region=25.0):
    """Safety cost of the unsafe sector [-25, 75] degrees; peaks at ``delta_region``."""
    theta_deg = np.asarray(theta_deg, dtype=float)
    inside = (theta_deg >= -25.0) & (theta_deg <= 75.0)
    cost = np.where(inside, 1.0 - np.abs(theta_deg - delta_region) / 50.0, 0.0)
    cost = np.maximum(cost, 0.0)
    return cost if cost.ndim else float(cost)


def pendulum_dynamics(theta, theta_dot, action, spec: PendulumSpec):
    """One semi-implicit Euler step; works elementwise on arrays.

    Returns ``(theta', theta_dot', reward, cost)`` where reward and cost are
    evaluated on the pre-step angle/velocity and the clipped torque.
    """
    u = np.clip(action, -spec.torque_limit, spec.torque_limit)
    g, m, l, dt = spec.gravity, spec.mass, spec.length, spec.dt
    reward = pendulum_reward(theta, theta_dot, u)
    new_theta_dot = theta_dot + (3 * g / (2 * l) * np.sin(theta) + 3.0 / (m * l**2) * u) * dt
    new_theta_dot = np.clip(new_theta_dot, -MAX_SPEED, MAX_SPEED)
    new_theta = wrap_angle(theta + new_theta_dot * dt)
    cost = pendulum_cost(np.degrees(new_theta), spec.delta_region)
    return new_theta, new_theta_dot, reward, cost


def pendulum_step(state: PendulumState, action: float, spec: PendulumSpec) -> StepOutcome:
    theta, theta_dot, reward, cost = pendulum_dynamics(
        state.theta, state.theta_dot, float(action), spec
    )
    return StepOutcome(PendulumState(theta, theta_dot), float(reward), float(cost), False)


def pendulum_observation(theta, theta_dot):
    theta = np.asarray(theta, dtype=float)
    theta_dot = np.asarray(theta_dot, dtype=float)
    return np.stack([np.cos(theta), np.sin(theta), theta_dot / MAX_SPEED], axis=-1)


def pendulum_reset(spec: PendulumSpec, rng: np.random.Generator, n: int):
    """Sample ``n`` initial states uniformly from the configured box."""
    theta = wrap_angle(rng.uniform(-spec.init_theta_range, spec.init_theta_range, size=n))
    theta_dot = rng.uniform(-spec.init_theta_dot_range, spec.init_theta_dot_range, size=n)
    return np.asarray(theta, dtype=float), theta_dot


# --------------------------------------------------------------------------- #
# Grid
# --------------------------------------------------------------------------- #

Cell = tuple[int, int]  # (row, col); row 0 is the top edge

ACTIONS = ("N", "S", "E", "W")
MOVES = {0: (-1, 0), 1: (1, 0), 2: (0, 1), 3: (0, -1)}


@dataclass(frozen=True)
class GridSpec:
    width: int
    height: int
    starts: tuple[Cell, ...]
    goal: Cell
    hazard_cells: frozenset[Cell] = field(default_factory=frozenset)
    step_penalty: float = 1.0
    goal_reward: float = 10.0
    horizon: int = 30
    budget: float = 0.0  # safety budget this fixture is designed around

    def __post_init__(self):
        object.__setattr__(self, "starts", tuple(tuple(s) for s in self.starts))
        object.__setattr__(self, "goal", tuple(self.goal))
        object.__setattr__(self, "hazard_cells", frozenset(tuple(c) for c in self.hazard_cells))
        if not self.starts:
            raise ValueError("grid needs at least one start cell")
        for cell in (*self.starts, self.goal, *self.hazard_cells):
            if not self.in_bounds(cell):
                raise ValueError(f"cell {cell} outside {self.height}x{self.width} grid")
        if self.goal in self.starts:
            raise ValueError("start and goal must differ")
        if self.goal in self.hazard_cells or set(self.starts) & self.hazard_cells:
            raise ValueError("start and goal cells must not be hazards")

    @property
    def start(self) -> Cell:
        return self.starts[0]

    @property
    def n_cells(self) -> int:
        return self.width * self.height

    def in_bounds(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.height and 0 <= cell[1] < self.width

    def index(self, cell: Cell) -> int:
        return cell[0] * self.width + cell[1]

    def cell(self, index: int) -> Cell:
        return divmod(int(index), self.width)

    def cost(self, cell: Cell) -> float:
        return 1.0 if cell in self.hazard_cells else 0.0

    def render(self, path=()) -> str:
        path = set(path)
        rows = []
        for r in range(self.height):
            row = []
            for c in range(self.width):
                cell = (r, c)
                if cell == self.goal:
                    ch = "G"
                elif cell in self.starts:
                    ch = "S"
                elif cell in self.hazard_cells:
                    ch = "#" if cell not in path else "x"
                else:
                    ch = "*" if cell in path else "."
                row.append(ch)
            rows.append(" ".join(row))
        return "\n".join(rows)


def grid_move(cell: Cell, action: int, spec: GridSpec) -> Cell:
    dr, dc = MOVES[int(action)]
    nxt = (cell[0] + dr, cell[1] + dc)
    return nxt if spec.in_bounds(nxt) else cell


def grid_step(cell: Cell, action: int, spec: GridSpec) -> StepOutcome:
    """Move N/S/E/W (0..3). Off-grid moves leave the agent in place.

    Cost is 1 whenever the resulting cell is a hazard, including a bump that
    keeps the agent inside a hazard cell.
    """
    if isinstance(action, str):
        action = ACTIONS.index(action)
    nxt = grid_move(tuple(cell), action, spec)
    done = nxt == spec.goal
    reward = spec.goal_reward if done else -spec.step_penalty
    return StepOutcome(nxt, float(reward), spec.cost(nxt), done)


def _parse_cells(text: str) -> list[Cell]:
    cells = []
    for token in text.replace(";", " ").split():
        r, c = token.split(",")
        cells.append((int(r), int(c)))
    return cells


def parse_grid(text: str) -> GridSpec:
    """Parse the key-value grid format (``key = value`` lines, ``#`` comments).

    Cells are written ``row,col`` and separated by whitespace. ``hazards`` may be
    given as cells or with ``hazard_rect = r0,c0 r1,c1`` (inclusive rectangles,
    repeatable).
    """
    values: dict[str, str] = {}
    hazards: set[Cell] = set()
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"malformed grid line: {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key == "hazard_rect":
            (r0, c0), (r1, c1) = _parse_cells(value)
            hazards.update((r, c) for r in range(r0, r1 + 1) for c in range(c0, c1 + 1))
        elif key == "hazards":
            hazards.update(_parse_cells(value))
        else:
            values[key] = value
    starts = _parse_cells(values.pop("starts", values.pop("start", "")))
    (goal,) = _parse_cells(values.pop("goal"))
    kwargs = dict(
        width=int(values.pop("width")),
        height=int(values.pop("height")),
        starts=tuple(starts),
        goal=goal,
        hazard_cells=frozenset(hazards),
    )
    for key, cast in (("step_penalty", float), ("goal_reward", float), ("horizon", int), ("budget", float)):
        if key in values:
            kwargs[key] = cast(values.pop(key))
    if values:
        raise ValueError(f"unknown grid keys: {sorted(values)}")
    return GridSpec(**kwargs)


def load_grid(path=None) -> GridSpec:
    """Load a grid file; with no argument, the shipped ``crossing.grid`` fixture."""
    if path is None:
        text = resources.files("simmer.data").joinpath("crossing.grid").read_text()
    else:
        text = Path(path).read_text()
    return parse_grid(text)
