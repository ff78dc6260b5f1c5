"""Lagrange-multiplier updates for average-cost constraints."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class LagrangianState:
    lam: float = 0.0
    integral: float = 0.0


@dataclass
class LagrangianConfig:
    lr_lambda: float = 0.03
    kp: float = 0.1
    ki: float = 0.01
    init_lambda: float = 0.0


def lagrangian_update(state: LagrangianState, mean_cost: float, d: float, lr_lambda: float) -> LagrangianState:
    """Projected dual ascent on the multiplier."""
    if lr_lambda < 0:
        raise ValueError("lr_lambda must be nonnegative")
    return replace(state, lam=max(0.0, state.lam + lr_lambda * (mean_cost - d)))


def pid_lagrangian_update(state: LagrangianState, mean_cost: float, d: float, kp: float, ki: float) -> LagrangianState:
    """PI multiplier: the integral is projected to be nonnegative, as is the output."""
    if kp < 0 or ki < 0:
        raise ValueError("gains must be nonnegative")
    error = mean_cost - d
    integral = max(0.0, state.integral + ki * error)
    return LagrangianState(lam=max(0.0, kp * error + integral), integral=integral)


def mix_reward(rewards, costs, lam):
    """Penalised, rescaled reward ``(r - lam * l) / (1 + lam)``."""
    return (np.asarray(rewards) - lam * np.asarray(costs)) / (1.0 + lam)
