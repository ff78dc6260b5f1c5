"""Safety-state augmentation.

The safety state ``z`` starts at the budget ``d`` and evolves as
``z' = (z - l) / gamma_l``. Summing the recursion gives
``gamma_l**(t+1) * z_{t+1} = d - sum_k gamma_l**k * l_k``, so ``z_T >= 0`` holds
exactly when the discounted cost stays within budget.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

AVERAGE = "average"
PROB_ONE = "prob_one"


@dataclass
class SauteConfig:
    gamma_l: float = 0.99
    delta_penalty: float | None = None  # None -> environment horizon
    mode: str = PROB_ONE
    z_normalizer: float | None = None  # None -> d_target

    def __post_init__(self):
        if not 0.0 < self.gamma_l <= 1.0:
            raise ValueError(f"gamma_l must lie in (0, 1], got {self.gamma_l}")
        if self.delta_penalty is not None and self.delta_penalty <= 0:
            raise ValueError("delta_penalty must be positive")
        if self.mode not in (AVERAGE, PROB_ONE):
            raise ValueError(f"unknown constraint mode {self.mode!r}")


class AugmentedState(NamedTuple):
    env_state: object
    z: float
    t: int


def z_step(z, cost, gamma_l):
    """Advance the remaining budget by one step. No clamping below zero."""
    return (z - cost) / gamma_l


def reshape_reward(reward, z_t, delta_penalty, mode=PROB_ONE):
    """Replace the reward by ``-delta_penalty`` once the pre-step budget is negative.

    Identity in average mode. Works elementwise on arrays.
    """
    if mode == AVERAGE:
        return reward
    shaped = np.where(np.asarray(z_t) >= 0, reward, -float(delta_penalty))
    return shaped if shaped.ndim else float(shaped)


def z_trajectory(d, costs, gamma_l):
    """Safety states ``z_0 .. z_T`` for a cost sequence (last axis is time)."""
    costs = np.asarray(costs, dtype=float)
    z = np.empty(costs.shape[:-1] + (costs.shape[-1] + 1,))
    z[..., 0] = d
    for t in range(costs.shape[-1]):
        z[..., t + 1] = z_step(z[..., t], costs[..., t], gamma_l)
    return z


def discounted_cost(costs, gamma_l):
    costs = np.asarray(costs, dtype=float)
    return np.sum(costs * gamma_l ** np.arange(costs.shape[-1]), axis=-1)


class HorizonExceeded(RuntimeError):
    pass


def augmented_step(
    aug: AugmentedState,
    action,
    step_fn: Callable,
    cfg: SauteConfig,
    horizon: int,
    delta_penalty: float | None = None,
):
    """Step an environment and its safety state together.

    ``step_fn(env_state, action)`` must return a ``StepOutcome``. The reshaping
    condition is evaluated on the pre-step budget ``z_t``.

    Returns ``(next_aug, shaped_reward, raw_reward, cost)``.
    """
    if aug.t >= horizon:
        raise HorizonExceeded(f"step {aug.t} beyond horizon {horizon}")
    penalty = delta_penalty if delta_penalty is not None else cfg.delta_penalty
    if penalty is None:
        penalty = horizon
    out = step_fn(aug.env_state, action)
    shaped = reshape_reward(out.reward, aug.z, penalty, cfg.mode)
    nxt = AugmentedState(out.next_state, z_step(aug.z, out.cost, cfg.gamma_l), aug.t + 1)
    return nxt, shaped, out.reward, out.cost
