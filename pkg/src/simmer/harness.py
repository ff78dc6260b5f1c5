"""Epoch loop: pick a budget, collect, update once, measure, move the budget.

Each run writes into its own directory:

* ``config.ini``   config snapshot (reloadable with :func:`simmer.config.load`)
* ``epochs.csv``   one row per epoch, columns :data:`CSV_COLUMNS`
* ``policy.npz``   final learner parameters
* ``summary.json`` totals and final performance
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from simmer import config as config_mod
from simmer import saute
from simmer.config import TrainConfig
from simmer.controllers import FixedBudget, NaiveBudget, PiSimmer, QSimmer
from simmer.envs import load_grid
from simmer.learners.lagrangian import LagrangianState, lagrangian_update, mix_reward, pid_lagrangian_update
from simmer.learners.ppo import NonFiniteLossError, PolicyParams, PPOOptimizer, collect, pg_update
from simmer.learners.tabular import Transition, epsilon_greedy, tabular_q_update_
from simmer.oracle import AugmentedGridMdp

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "k", "d_ref", "d_k", "mean_return", "cost_stat", "n_violations",
    "target_violation", "lambda", "w", "integral", "q_level",
)


# --------------------------------------------------------------------------- #
# statistics
# --------------------------------------------------------------------------- #


def cost_statistic(disc_costs, mode: str) -> float:
    """Mean (average constraint) or max (probability-one) of per-trajectory costs."""
    disc_costs = np.asarray(disc_costs, dtype=float)
    if disc_costs.size == 0:
        raise ValueError("cost statistic of an empty batch")
    if mode == saute.AVERAGE:
        return float(np.mean(disc_costs))
    if mode == saute.PROB_ONE:
        return float(np.max(disc_costs))
    raise ValueError(f"unknown constraint mode {mode!r}")


def target_violation(statistic: float, d_target: float) -> float:
    return max(0.0, statistic - d_target)


@dataclass
class EpochStats:
    k: int
    d_ref: float
    d_k: float
    mean_return: float
    cost_stat: float
    n_violations: int
    target_violation: float
    lam: float | None = None
    w: float | None = None
    integral: float | None = None
    q_level: int | None = None

    def row(self):
        values = (
            self.k, self.d_ref, self.d_k, self.mean_return, self.cost_stat, self.n_violations,
            self.target_violation, self.lam, self.w, self.integral, self.q_level,
        )
        return ["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)) for v in values]


# --------------------------------------------------------------------------- #
# learners
# --------------------------------------------------------------------------- #


@dataclass
class BatchView:
    """What the harness needs from any learner's batch."""

    data: object
    disc_return: np.ndarray
    disc_cost: np.ndarray


class PGLearner:
    """Clipped policy gradient, optionally with a (PID-)Lagrangian multiplier."""

    def __init__(self, cfg: TrainConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        obs_dim = 3 + int(cfg.augment)
        self.policy = PolicyParams.init(obs_dim, 1, cfg.ppo.hidden, rng, cfg.ppo.init_log_std)
        self.optimizer = PPOOptimizer(self.policy, cfg.ppo)
        self.lagrangian = LagrangianState(lam=cfg.lagrangian.init_lambda)
        self.update_count = 0
        self.z_normalizer = cfg.saute.z_normalizer or cfg.d_target

    @property
    def lam(self):
        return self.lagrangian.lam if self.cfg.learner in ("lppo", "pidl") else None

    def collect(self, budget: float) -> BatchView:
        cfg = self.cfg
        batch = collect(
            self.policy, cfg.pendulum, cfg.augment, budget, cfg.n_traj, self.rng,
            cfg.saute, gamma_r=cfg.ppo.gamma_r, z_normalizer=self.z_normalizer,
        )
        return BatchView(batch, batch.disc_return, batch.disc_cost)

    def update(self, view: BatchView, budget: float):
        cfg = self.cfg
        batch = view.data
        rewards = None
        if cfg.learner in ("lppo", "pidl"):
            mean_cost = float(np.mean(view.disc_cost))
            if cfg.learner == "lppo":
                self.lagrangian = lagrangian_update(self.lagrangian, mean_cost, budget, cfg.lagrangian.lr_lambda)
            else:
                self.lagrangian = pid_lagrangian_update(
                    self.lagrangian, mean_cost, budget, cfg.lagrangian.kp, cfg.lagrangian.ki
                )
            rewards = mix_reward(batch.shaped_rewards, batch.costs, self.lagrangian.lam)
        self.policy, _ = pg_update(self.policy, batch, cfg.ppo, self.rng, self.optimizer, rewards)
        self.update_count += 1

    def save(self, path):
        p = self.policy
        arrays = {f"pi_{i}": a for i, a in enumerate(p.pi)}
        arrays.update({f"vf_{i}": a for i, a in enumerate(p.vf)})
        np.savez(path, log_std=p.log_std, **arrays)


class TabularLearner:
    """Q-learning over ``(t, z, cell)``; one pass over the epoch's transitions per update."""

    def __init__(self, cfg: TrainConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        self.grid = load_grid(cfg.grid_file)
        penalty = cfg.saute.delta_penalty
        self.mdp = AugmentedGridMdp(self.grid, int(cfg.d_target), penalty)
        self.q = np.zeros((self.mdp.n_states, 4))
        self.update_count = 0
        self.lam = None

    def collect(self, budget: float) -> BatchView:
        mdp = self.mdp
        zi0 = int(round(mdp.budget - budget))
        trajectories, returns, costs = [], [], []
        for _ in range(self.cfg.n_traj):
            start = int(self.rng.integers(len(self.grid.starts)))
            s = mdp.index(0, zi0, self.grid.index(self.grid.starts[start]))
            traj, ret, cost = [], 0.0, 0.0
            while not mdp.terminal[s]:
                a = epsilon_greedy(self.q[s], self.cfg.tabular.epsilon, self.rng)
                s2 = int(mdp.next_state[s, a])
                cell = mdp.decode(s2)[2]
                traj.append(Transition(s, a, float(mdp.reward[s, a]), s2, bool(mdp.terminal[s2])))
                ret += self.grid.goal_reward if cell == self.grid.goal else -self.grid.step_penalty
                cost += self.grid.cost(cell)
                s = s2
            trajectories.append(traj)
            returns.append(ret)
            costs.append(cost)
        return BatchView(trajectories, np.array(returns), np.array(costs))

    def update(self, view: BatchView, budget: float):
        for traj in view.data:
            for tr in reversed(traj):
                tabular_q_update_(self.q, tr, self.cfg.tabular.lr, 1.0)
        self.update_count += 1

    def save(self, path):
        np.savez(path, q=self.q)


def make_learner(cfg: TrainConfig, rng):
    return TabularLearner(cfg, rng) if cfg.learner == "tabular" else PGLearner(cfg, rng)


def make_controller(cfg: TrainConfig, rng):
    if cfg.controller == "fixed":
        return FixedBudget(cfg.fixed_budget)
    if cfg.controller == "naive":
        return NaiveBudget(cfg.schedule)
    if cfg.controller == "pi":
        return PiSimmer(cfg.schedule, cfg.pi)
    return QSimmer(cfg.schedule, cfg.q, rng)


def pi_signal(cfg: TrainConfig, disc_costs, statistic):
    signal = cfg.pi_signal
    if signal == "auto":
        return statistic
    if signal == "max_cost":
        return float(np.max(disc_costs))
    if signal == "mean_cost":
        return float(np.mean(disc_costs))
    return float(np.sum(disc_costs > cfg.d_target))


# --------------------------------------------------------------------------- #
# runs
# --------------------------------------------------------------------------- #


def run_experiment(cfg: TrainConfig, out_dir, callback=None) -> Path:
    """Train for ``cfg.epochs`` epochs and write the run directory.

    ``callback(k, view, learner)``, when given, is called after each epoch's
    update (used by tests to inspect the loop).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(config_mod.dumps(cfg))
    seeds = np.random.SeedSequence(cfg.seed).spawn(2)
    learner = make_learner(cfg, np.random.default_rng(seeds[0]))
    controller = make_controller(cfg, np.random.default_rng(seeds[1]))
    mode = cfg.saute.mode
    status, error = "ok", None
    totals = {"target_violation": 0.0, "n_violations": 0, "cost": 0.0, "steps": 0}
    history = []
    t0 = time.perf_counter()
    with open(out / "epochs.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for k in range(cfg.epochs):
            d_k = controller.budget
            d_ref = controller.reference(k)
            try:
                view = learner.collect(d_k)
                statistic = cost_statistic(view.disc_cost, mode)
                learner.update(view, d_k)
                if not (np.isfinite(statistic) and np.all(np.isfinite(view.disc_return))):
                    raise NonFiniteLossError("non-finite epoch statistics")
            except (NonFiniteLossError, FloatingPointError) as exc:
                status, error = "failed", f"epoch {k}: {exc}"
                log.error("run %s failed: %s", cfg.name, error)
                break
            violation = target_violation(statistic, cfg.d_target)
            n_viol = int(np.sum(view.disc_cost > cfg.d_target))
            signal = pi_signal(cfg, view.disc_cost, statistic) if cfg.controller == "pi" else statistic
            controller.update(k, signal)
            snap = controller.snapshot()
            stats = EpochStats(
                k, d_ref, d_k, float(np.mean(view.disc_return)), statistic, n_viol, violation,
                lam=learner.lam, w=snap.get("w"), integral=snap.get("integral"), q_level=snap.get("q_level"),
            )
            writer.writerow(stats.row())
            fh.flush()
            history.append(stats)
            totals["target_violation"] += violation
            totals["n_violations"] += n_viol
            if callback is not None:
                callback(k, view, learner)
            log.debug("epoch %d budget %.3f return %.3f cost %.3f", k, d_k, stats.mean_return, statistic)
    learner.save(out / "policy.npz")
    tail = history[-10:]
    summary = {
        "name": cfg.name,
        "seed": cfg.seed,
        "status": status,
        "error": error,
        "epochs_completed": len(history),
        "updates": learner.update_count,
        "total_target_violation": totals["target_violation"],
        "total_n_violations": totals["n_violations"],
        "final_return": float(np.mean([s.mean_return for s in tail])) if tail else math.nan,
        "final_cost": float(np.mean([s.cost_stat for s in tail])) if tail else math.nan,
        "runtime_s": time.perf_counter() - t0,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return out


def read_epochs(path) -> dict[str, np.ndarray]:
    """Load ``epochs.csv`` into float columns (empty cells become NaN)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {
        col: np.array([float(r[col]) if r[col] != "" else math.nan for r in rows]) for col in CSV_COLUMNS
    }


# --------------------------------------------------------------------------- #
# sweeps
# --------------------------------------------------------------------------- #

SUMMARY_METRICS = ("final_return", "final_cost", "total_n_violations", "total_target_violation")


def _run_one(args):
    cfg, out = args
    try:
        run_experiment(cfg, out)
        return json.loads((Path(out) / "summary.json").read_text())
    except Exception as exc:  # a crashed run must not stop the sweep
        log.exception("run %s seed %s crashed", cfg.name, cfg.seed)
        return {"name": cfg.name, "seed": cfg.seed, "status": "crashed", "error": repr(exc)}


def sweep(configs, seeds, out_dir, jobs: int = 1) -> Path:
    """Run every config for every seed and write ``summary.csv`` (mean, sample std)."""
    configs = list(configs)
    if not configs:
        raise ValueError("sweep needs at least one config")
    out = Path(out_dir)
    tasks = []
    for cfg in configs:
        for seed in seeds:
            run_cfg = replace(cfg, seed=int(seed))
            tasks.append((run_cfg, out / cfg.name / f"seed_{seed}"))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, tasks))
    else:
        results = [_run_one(t) for t in tasks]
    out.mkdir(parents=True, exist_ok=True)
    header = ["name", "n_runs", "n_failed"]
    for m in SUMMARY_METRICS:
        header += [f"{m}_mean", f"{m}_std"]
    with open(out / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for cfg in configs:
            rows = [r for r in results if r.get("name") == cfg.name]
            ok = [r for r in rows if r.get("status") == "ok"]
            line = [cfg.name, len(rows), len(rows) - len(ok)]
            for m in SUMMARY_METRICS:
                vals = np.array([r[m] for r in ok], dtype=float)
                mean = float(vals.mean()) if vals.size else math.nan
                std = float(vals.std(ddof=1)) if vals.size > 1 else math.nan
                line += [repr(mean), repr(std)]
            writer.writerow(line)
    (out / "runs.json").write_text(json.dumps(results, indent=2) + "\n")
    return out / "summary.csv"


def parse_seeds(text: str) -> list[int]:
    """``"0..2"`` -> [0, 1, 2]; ``"1,5,7"`` -> [1, 5, 7]."""
    if ".." in text:
        a, b = text.split("..")
        return list(range(int(a), int(b) + 1))
    return [int(s) for s in text.split(",") if s.strip()]


# --------------------------------------------------------------------------- #
# reports
# --------------------------------------------------------------------------- #


def report(runs_dir) -> Path:
    """Aggregate per-epoch curves over seeds and draw SVG plots.

    Runs are grouped by the directory that contains their seed directories.
    Writes ``aggregate.csv`` and ``<metric>.svg`` into ``runs_dir``.
    """
    import matplotlib

    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    root = Path(runs_dir)
    groups: dict[str, list] = {}
    for csv_path in sorted(root.rglob("epochs.csv")):
        run_dir = csv_path.parent
        group = run_dir.parent.relative_to(root).as_posix() if run_dir != root else run_dir.name
        groups.setdefault(group or run_dir.name, []).append(read_epochs(csv_path))
    if not groups:
        raise FileNotFoundError(f"no epochs.csv under {root}")
    metrics = ("mean_return", "cost_stat", "d_k", "n_violations")
    with open(root / "aggregate.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["group", "k", "n_runs"] + [f"{m}_{s}" for m in metrics for s in ("mean", "std")])
        for group, runs in groups.items():
            n = min(len(r["k"]) for r in runs)
            for k in range(n):
                line = [group, k, len(runs)]
                for m in metrics:
                    vals = np.array([r[m][k] for r in runs])
                    line += [repr(float(vals.mean())), repr(float(vals.std(ddof=1)) if len(vals) > 1 else math.nan)]
                writer.writerow(line)
    for m in metrics:
        fig, ax = plt.subplots(figsize=(6, 3.5))
        for group, runs in groups.items():
            n = min(len(r["k"]) for r in runs)
            vals = np.stack([r[m][:n] for r in runs])
            mean, std = vals.mean(axis=0), vals.std(axis=0)
            ax.plot(np.arange(n), mean, label=group)
            ax.fill_between(np.arange(n), mean - std, mean + std, alpha=0.2)
        ax.set_xlabel("epoch")
        ax.set_ylabel(m)
        ax.legend(fontsize="small")
        fig.tight_layout()
        fig.savefig(root / f"{m}.svg")
        plt.close(fig)
    return root / "aggregate.csv"
