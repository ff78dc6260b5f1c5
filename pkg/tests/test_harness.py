import csv
import json
import math
from dataclasses import replace

import numpy as np
import pytest

from simmer import config as config_mod
from simmer.config import TrainConfig
from simmer.controllers import BudgetSchedule
from simmer.envs import PendulumSpec
from simmer.harness import (
    CSV_COLUMNS,
    cost_statistic,
    parse_seeds,
    read_epochs,
    report,
    run_experiment,
    sweep,
    target_violation,
)
from simmer.learners.ppo import PPOConfig


def tiny(**kwargs):
    base = TrainConfig(
        name="tiny",
        epochs=4,
        n_traj=3,
        pendulum=PendulumSpec(horizon=20),
        ppo=PPOConfig(hidden=(8,), train_epochs=2, minibatch_size=30),
        schedule=BudgetSchedule((1.0, 2.0, 3.0), epochs_per_level=2),
    )
    return replace(base, **kwargs)


@pytest.mark.parametrize("mode, expected", [("average", 5.0), ("prob_one", 7.0)])
def test_cost_statistic(mode, expected):
    assert cost_statistic([3.0, 5.0, 7.0], mode) == expected


def test_cost_statistic_single_and_empty():
    assert cost_statistic([4.0], "average") == cost_statistic([4.0], "prob_one") == 4.0
    with pytest.raises(ValueError):
        cost_statistic([], "average")
    with pytest.raises(ValueError):
        cost_statistic([1.0], "cvar")


@pytest.mark.parametrize("stat, d, expected", [(30.0, 40.0, 0.0), (47.0, 40.0, 7.0), (40.0, 40.0, 0.0)])
def test_target_violation(stat, d, expected):
    assert target_violation(stat, d) == expected


@pytest.mark.parametrize(
    "overrides",
    [
        {},
        {"learner": "lppo", "saute.mode": "average"},
        {"learner": "pidl", "augment": "false"},
        {"controller": "pi"},
        {"controller": "q"},
        {"controller": "naive"},
    ],
)
def test_run_is_byte_deterministic(tmp_path, overrides):
    cfg = config_mod.apply_overrides(tiny(), overrides)
    a = run_experiment(cfg, tmp_path / "a")
    b = run_experiment(cfg, tmp_path / "b")
    assert (a / "epochs.csv").read_bytes() == (b / "epochs.csv").read_bytes()
    summary = json.loads((a / "summary.json").read_text())
    assert summary["status"] == "ok"
    assert summary["updates"] == cfg.epochs


def test_different_seeds_differ(tmp_path):
    a = run_experiment(tiny(seed=0), tmp_path / "a")
    b = run_experiment(tiny(seed=1), tmp_path / "b")
    assert (a / "epochs.csv").read_bytes() != (b / "epochs.csv").read_bytes()


def test_run_directory_contents(tmp_path):
    out = run_experiment(tiny(controller="pi"), tmp_path / "run")
    assert {p.name for p in out.iterdir()} == {"config.ini", "epochs.csv", "policy.npz", "summary.json"}
    with open(out / "epochs.csv") as fh:
        header = next(csv.reader(fh))
    assert tuple(header) == CSV_COLUMNS
    reloaded = config_mod.load(out / "config.ini")
    assert reloaded == tiny(controller="pi")
    params = np.load(out / "policy.npz")
    assert "log_std" in params and "pi_0" in params


def test_csv_violation_invariant_and_totals(tmp_path):
    cfg = tiny(epochs=6)
    out = run_experiment(cfg, tmp_path / "run")
    rows = read_epochs(out / "epochs.csv")
    for stat, viol, n in zip(rows["cost_stat"], rows["target_violation"], rows["n_violations"]):
        assert viol == max(0.0, stat - cfg.d_target)
        assert 0 <= n <= cfg.n_traj
    summary = json.loads((out / "summary.json").read_text())
    assert summary["total_target_violation"] == pytest.approx(rows["target_violation"].sum(), abs=1e-12)
    assert summary["total_n_violations"] == rows["n_violations"].sum()


def test_fixed_controller_trains_every_epoch_at_the_budget(tmp_path):
    starts = []

    def spy(k, view, learner):
        starts.append(view.data.z[:, 0].copy())

    run_experiment(tiny(controller="fixed", budget=2.5), tmp_path / "run", callback=spy)
    assert len(starts) == 4 and all(np.all(z0 == 2.5) for z0 in starts)


def test_one_update_per_epoch_and_fresh_batches(tmp_path):
    seen = []

    def spy(k, view, learner):
        seen.append((learner.update_count, id(view.data), view.data))

    run_experiment(tiny(epochs=5), tmp_path / "run", callback=spy)
    assert [c for c, _, _ in seen] == [1, 2, 3, 4, 5]
    batches = [b for _, _, b in seen]
    assert all(batches[i] is not batches[j] for i in range(5) for j in range(i))
    assert not np.array_equal(batches[0].obs, batches[1].obs)


def test_naive_budget_in_csv(tmp_path):
    out = run_experiment(tiny(controller="naive", epochs=6), tmp_path / "run")
    rows = read_epochs(out / "epochs.csv")
    np.testing.assert_array_equal(rows["d_k"], [1, 1, 2, 2, 3, 3])
    np.testing.assert_array_equal(rows["d_ref"], rows["d_k"])


def test_controller_internals_logged(tmp_path):
    rows = read_epochs(run_experiment(tiny(controller="pi"), tmp_path / "pi") / "epochs.csv")
    assert np.all(np.isfinite(rows["w"])) and np.all(np.isnan(rows["q_level"]))
    rows = read_epochs(run_experiment(tiny(controller="q"), tmp_path / "q") / "epochs.csv")
    assert np.all(np.isin(rows["q_level"], [0, 1, 2]))
    rows = read_epochs(run_experiment(tiny(learner="lppo"), tmp_path / "l") / "epochs.csv")
    assert np.all(rows["lambda"] >= 0)


def test_nan_marks_run_failed_and_keeps_partial_log(tmp_path, monkeypatch):
    from simmer import harness

    real = harness.PGLearner.update

    def broken(self, view, budget):
        if self.update_count == 2:
            view.data.rewards[:] = np.nan
            view.data.shaped_rewards[:] = np.nan
        return real(self, view, budget)

    monkeypatch.setattr(harness.PGLearner, "update", broken)
    out = run_experiment(tiny(epochs=5), tmp_path / "run")
    summary = json.loads((out / "summary.json").read_text())
    assert summary["status"] == "failed" and summary["epochs_completed"] == 2
    assert len(read_epochs(out / "epochs.csv")["k"]) == 2


def test_tabular_grid_run(tmp_path):
    cfg = TrainConfig(
        name="grid", env="grid", learner="tabular", controller="naive", epochs=6, n_traj=4,
        saute=config_mod.SauteConfig(gamma_l=1.0), schedule=BudgetSchedule((0, 1, 2), epochs_per_level=2),
    )
    out = run_experiment(cfg, tmp_path / "grid")
    rows = read_epochs(out / "epochs.csv")
    np.testing.assert_array_equal(rows["d_k"], [0, 0, 1, 1, 2, 2])
    assert json.loads((out / "summary.json").read_text())["updates"] == 6


def test_sweep_summary_uses_sample_std(tmp_path):
    cfg = tiny(epochs=2)
    path = sweep([cfg], [0, 1, 2], tmp_path / "sw")
    with open(path) as fh:
        (row,) = list(csv.DictReader(fh))
    finals = [
        json.loads((tmp_path / "sw" / "tiny" / f"seed_{s}" / "summary.json").read_text())["final_return"]
        for s in range(3)
    ]
    mean = sum(finals) / 3
    std = math.sqrt(sum((x - mean) ** 2 for x in finals) / 2)
    assert float(row["final_return_mean"]) == pytest.approx(mean, abs=1e-12)
    assert float(row["final_return_std"]) == pytest.approx(std, abs=1e-12)
    assert row["n_runs"] == "3" and row["n_failed"] == "0"


def test_single_seed_sweep_matches_run(tmp_path):
    cfg = tiny(epochs=2)
    sweep([cfg], [0], tmp_path / "sw")
    run_experiment(cfg, tmp_path / "single")
    a = (tmp_path / "sw" / "tiny" / "seed_0" / "epochs.csv").read_bytes()
    assert a == (tmp_path / "single" / "epochs.csv").read_bytes()


def test_sweep_records_crashes_and_continues(tmp_path):
    good = tiny(epochs=1, name="good")
    bad = tiny(epochs=1, name="bad", grid_file=str(tmp_path / "missing.grid"))
    bad = replace(bad, env="grid", learner="tabular", saute=config_mod.SauteConfig(gamma_l=1.0))
    sweep([good, bad], [0], tmp_path / "sw")
    runs = json.loads((tmp_path / "sw" / "runs.json").read_text())
    status = {r["name"]: r["status"] for r in runs}
    assert status == {"good": "ok", "bad": "crashed"}


def test_empty_sweep_rejected(tmp_path):
    with pytest.raises(ValueError):
        sweep([], [0], tmp_path)


@pytest.mark.parametrize("text, expected", [("0..2", [0, 1, 2]), ("4", [4]), ("1,5,7", [1, 5, 7])])
def test_parse_seeds(text, expected):
    assert parse_seeds(text) == expected


def test_report_writes_aggregate_and_plots(tmp_path):
    sweep([tiny(epochs=3)], [0, 1], tmp_path / "sw")
    path = report(tmp_path / "sw")
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3 and rows[0]["group"] == "tiny" and rows[0]["n_runs"] == "2"
    for metric in ("mean_return", "cost_stat", "d_k"):
        assert (tmp_path / "sw" / f"{metric}.svg").read_text().lstrip().startswith("<?xml")


def test_report_without_runs(tmp_path):
    with pytest.raises(FileNotFoundError):
        report(tmp_path)
