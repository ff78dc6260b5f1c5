"""Training configuration and its plain-text (INI style) file format.

A config file has a ``[train]`` section for top-level fields and one section
per nested config (``[ppo]``, ``[saute]``, ``[pi]`` ...). Any field can be
overridden with ``section.key=value`` (or ``key=value`` for top-level fields).
"""

from __future__ import annotations

import configparser
import dataclasses
import io
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path

from simmer.controllers import BudgetSchedule, PiSimmerConfig, QSimmerConfig
from simmer.envs import PendulumSpec
from simmer.learners.lagrangian import LagrangianConfig
from simmer.learners.ppo import PPOConfig
from simmer.saute import SauteConfig

ENVS = ("pendulum", "grid")
LEARNERS = ("ppo", "lppo", "pidl", "tabular")
CONTROLLERS = ("fixed", "naive", "pi", "q")
PI_SIGNALS = ("auto", "max_cost", "mean_cost", "violation_count")


@dataclass
class TabularConfig:
    lr: float = 0.5
    epsilon: float = 0.2


@dataclass
class TrainConfig:
    name: str = "run"
    env: str = "pendulum"
    learner: str = "ppo"
    augment: bool = True
    controller: str = "fixed"
    budget: float | None = None  # fixed-controller budget; None -> schedule target
    epochs: int = 300
    n_traj: int = 20
    seed: int = 0
    pi_signal: str = "auto"
    grid_file: str | None = None
    pendulum: PendulumSpec = field(default_factory=PendulumSpec)
    saute: SauteConfig = field(default_factory=SauteConfig)
    ppo: PPOConfig = field(default_factory=PPOConfig)
    lagrangian: LagrangianConfig = field(default_factory=LagrangianConfig)
    schedule: BudgetSchedule = field(default_factory=BudgetSchedule)
    pi: PiSimmerConfig = field(default_factory=PiSimmerConfig)
    q: QSimmerConfig = field(default_factory=QSimmerConfig)
    tabular: TabularConfig = field(default_factory=TabularConfig)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.n_traj < 1:
            raise ValueError("n_traj must be >= 1")
        for value, allowed, what in (
            (self.env, ENVS, "env"),
            (self.learner, LEARNERS, "learner"),
            (self.controller, CONTROLLERS, "controller"),
            (self.pi_signal, PI_SIGNALS, "pi_signal"),
        ):
            if value not in allowed:
                raise ValueError(f"unknown {what} {value!r}; expected one of {allowed}")
        if (self.env == "grid") != (self.learner == "tabular"):
            raise ValueError("the tabular learner runs on the grid and only there")
        if self.env == "grid" and (not self.augment or self.saute.gamma_l != 1.0):
            raise ValueError("grid runs need augment = true and gamma_l = 1")

    @property
    def d_target(self):
        return self.schedule.d_target

    @property
    def fixed_budget(self):
        return self.d_target if self.budget is None else float(self.budget)


NESTED = ("pendulum", "saute", "ppo", "lagrangian", "schedule", "pi", "q", "tabular")


def _coerce(text: str, tp):
    text = text.strip()
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if text.lower() in ("none", ""):
            return None
        return _coerce(text, args[0])
    if origin is tuple:
        (inner, *_) = typing.get_args(tp)
        return tuple(_coerce(t, inner) for t in text.replace(",", " ").split())
    if tp is bool:
        lowered = text.lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if tp is int:
        return int(float(text)) if "e" in text.lower() else int(text)
    if tp is float:
        return float(text)
    return text


def _format(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


def _hints(cls):
    return typing.get_type_hints(cls)


def _apply(obj, updates: dict):
    hints = _hints(type(obj))
    kwargs = {}
    for key, text in updates.items():
        if key not in hints:
            raise KeyError(f"unknown config key {type(obj).__name__}.{key}")
        kwargs[key] = _coerce(text, hints[key]) if isinstance(text, str) else text
    return dataclasses.replace(obj, **kwargs)


def apply_overrides(cfg: TrainConfig, overrides: dict[str, str]) -> TrainConfig:
    """Apply ``{"section.key": "value"}`` or ``{"key": "value"}`` string overrides."""
    top: dict = {}
    sections: dict[str, dict] = {}
    for dotted, text in overrides.items():
        if "." in dotted:
            section, key = dotted.split(".", 1)
            if section == "train":
                top[key] = text
            elif section in NESTED:
                sections.setdefault(section, {})[key] = text
            else:
                raise KeyError(f"unknown config section {section!r}")
        else:
            top[dotted] = text
    for section, updates in sections.items():
        top[section] = _apply(getattr(cfg, section), updates)
    return _apply(cfg, top)


def parse_overrides(items) -> dict[str, str]:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ValueError(f"override must look like key=value, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def loads(text: str, base: TrainConfig | None = None) -> TrainConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    parser.read_string(text)
    overrides = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            overrides[key if section == "train" else f"{section}.{key}"] = value
    return apply_overrides(base or TrainConfig(), overrides)


def load(path) -> TrainConfig:
    return loads(Path(path).read_text())


def dumps(cfg: TrainConfig) -> str:
    parser = configparser.ConfigParser()
    parser.optionxform = str
    parser["train"] = {
        f.name: _format(getattr(cfg, f.name)) for f in dataclasses.fields(cfg) if f.name not in NESTED
    }
    for section in NESTED:
        sub = getattr(cfg, section)
        parser[section] = {f.name: _format(getattr(sub, f.name)) for f in dataclasses.fields(sub)}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
