from pathlib import Path

import numpy as np
import pytest
import yaml

from cdgopt.harness import (
    ConfigError,
    ExperimentConfig,
    ensemble,
    explore,
    landscape,
    optimize,
    parse_grid,
    parse_stats,
    render_grid,
    render_stats,
    true_probability,
)
from cdgopt.harness.cli import main
from cdgopt.harness.experiments import STATS_COLUMNS, DegenerateSampleWarning, render_runs
from cdgopt.harness.parallel import ordered_map, resolve_workers
from cdgopt.objective import TargetSelector
from cdgopt.simulators import C_HARD, CoverageEvent, MultiplicationSimulator, event_index

SMALL = {
    "master_seed": 3,
    "reference_samples": 2000,
    "optimizer": {"method": "steepest_descent", "n_directions": 4, "samples_per_point": 5, "step": 5.0,
                  "max_iters": 2, "max_ls_iters": 3},
    "ensemble": {"runs": 2, "cells": [[5, 4], [2, 10]]},
    "explore": {"templates": 40, "runs_per_template": 5},
    "landscape": {"extent": 4.0, "points": 3, "samples": 10},
}


def small(**changes):
    data = yaml.safe_load(yaml.safe_dump(SMALL))
    for dotted, value in changes.items():
        node = data
        *parents, leaf = dotted.split("__")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    return ExperimentConfig.from_dict(data)


# ---- configuration --------------------------------------------------------------


def test_config_defaults():
    cfg = ExperimentConfig().validate()
    assert cfg.ensemble.runs == 25
    assert cfg.reference_samples == 100_000
    assert cfg.simulator.selector().indices == (C_HARD.index,)
    assert ExperimentConfig.from_dict({"simulator": {"kind": "multiplication", "k": 10}}).simulator.selector().indices == (9,)


def test_config_yaml_round_trip():
    cfg = small(simulator__target=["Cm2", "Nop", 0, 1, 0], optimizer__h_min=0.01, landscape__center=[0.5] * 23)
    again = ExperimentConfig.from_yaml(cfg.to_yaml())
    assert again == cfg
    assert again.to_yaml() == cfg.to_yaml()


def test_config_exponent_literal():
    cfg = ExperimentConfig.from_yaml("optimizer:\n  h_min: 1e-4\n")
    assert cfg.optimizer.h_min == 1e-4


@pytest.mark.parametrize("text, field", [
    ("optimizer:\n  stepp: 3\n", "optimizer.stepp"),
    ("bogus: 1\n", "bogus"),
    ("optimizer:\n  step: fast\n", "optimizer.step"),
    ("optimizer:\n  method: newton\n", "optimizer.method"),
    ("ensemble:\n  runs: 0\n", "ensemble.runs"),
    ("ensemble:\n  runs: true\n", "ensemble.runs"),
    ("reference_samples: 0\n", "reference_samples"),
    ("simulator:\n  target: 80\n", "simulator.target"),
    ("simulator:\n  kind: verilog\n", "simulator.kind"),
    ("landscape:\n  points: 1\n", "landscape.points"),
    ("landscape:\n  center: [1, 2]\n", "landscape.center"),
    ("explore:\n  templates: 0\n", "explore.templates"),
])
def test_config_errors_name_the_field(text, field):
    with pytest.raises(ConfigError, match=rf"^{field}\b"):
        ExperimentConfig.from_yaml(text)


def test_config_budget_violation():
    with pytest.raises(ConfigError, match=r"ensemble.cells\[1\].*1250"):
        ExperimentConfig.from_dict({"ensemble": {"budget": 1250, "cells": [[10, 125], [25, 25]]}})
    ok = ExperimentConfig.from_dict({"ensemble": {"budget": 625, "cells": [[5, 125], [25, 25], [125, 5]]}})
    assert len(ok.ensemble.cells) == 3
    with pytest.raises(ConfigError, match="duplicate"):
        ExperimentConfig.from_dict({"ensemble": {"cells": [[5, 5], [5, 5]]}})


@pytest.mark.parametrize("text", ["", "   \n", "[1, 2", "- a\n- b\n"])
def test_config_empty_or_invalid(text):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_yaml(text)


def test_config_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        ExperimentConfig.load(tmp_path / "nope.yaml")


# ---- reference probability -------------------------------------------------------


def test_true_probability_always_hit():
    raw = np.full(100, -50.0)
    raw[0] = 50.0
    assert true_probability(raw, TargetSelector((0,)), 10_000, 1, MultiplicationSimulator(100)) == 1.0


def test_true_probability_illegal_event():
    target = TargetSelector.of(CoverageEvent("Sim", "Nop", 0, 0, 0))
    assert true_probability(np.zeros(23), target, 20_000, 1) == 0.0


def test_true_probability_seed_spread_near_0_4():
    # bins 1..13 of 100 under uniform weights: P(XY <= 0.13) = 0.13 - 0.13 ln 0.13
    target = TargetSelector(tuple(range(13)))
    sim = MultiplicationSimulator(100)
    a = true_probability(np.zeros(100), target, 100_000, 1, sim)
    b = true_probability(np.zeros(100), target, 100_000, 2, sim)
    assert a == pytest.approx(0.3952, abs=0.006)
    assert a != b
    assert abs(a - b) < 0.01


def test_true_probability_rejects_zero_samples():
    with pytest.raises(ValueError):
        true_probability(np.zeros(23), TargetSelector.of(C_HARD), 0, 1)


# ---- optimize ---------------------------------------------------------------------


def test_optimize_tables():
    sd = optimize(small())
    title, header = (line.split() for line in sd.table.splitlines()[:2])
    assert title[0] == "steepest_descent"
    assert header == ["I", "phi_bar", "|g|", "|w|", "mu_ls", "Update?", "p(target)"]
    assert "1.1" in sd.table.split()
    assert len(sd.row_probabilities) == len(sd.record.table_rows())
    assert all(0 <= p <= 1 for p in sd.row_probabilities)
    for block in ("IW", "SW", "TW", "CW"):
        assert block in sd.table
    f = small(optimizer__method="implicit_filtering", optimizer__max_iters=3)
    table = optimize(f).table
    assert table.splitlines()[1].split() == ["I", "f*", "phi_bar", "Update?", "h", "p(target)"]


# ---- ensembles ----------------------------------------------------------------------


def test_ensemble_stats_and_round_trip():
    result = ensemble(small())
    assert [(s.N, s.n) for s in result.stats] == [(5, 4), (2, 10)]
    for s in result.stats:
        assert s.runs == 2 and 0 <= s.failures <= 2
        assert s.var_iters >= 0 and s.var_p_opt >= 0 and s.var_phi_opt >= 0
        assert s.max_p_opt >= s.mean_p_opt
    for r in result.runs:
        assert r.failed == (r.reference_hits == 0)
        assert r.p_opt == r.reference_hits / 2000
    text = render_stats(result.stats)
    assert text.splitlines()[0] == ",".join(STATS_COLUMNS)
    assert "\r" not in text
    assert parse_stats(text) == result.stats
    assert render_runs(result.runs).count("\n") == 5


def test_ensemble_cell_order_independence():
    a = ensemble(small())
    b = ensemble(small(ensemble__cells=[[2, 10], [5, 4]]))
    assert a.cell(5, 4) == b.cell(5, 4)
    assert a.cell(2, 10) == b.cell(2, 10)
    c = ensemble(small(ensemble__cells=[[2, 10]]))
    assert c.cell(2, 10) == a.cell(2, 10)


def test_ensemble_single_run_warns():
    with pytest.warns(DegenerateSampleWarning):
        result = ensemble(small(ensemble__runs=1, ensemble__cells=[[5, 4]]))
    s = result.stats[0]
    assert (s.var_iters, s.var_phi_opt, s.var_p_opt) == (0.0, 0.0, 0.0)


def test_ensemble_parallel_matches_serial():
    cfg = small()
    assert ensemble(cfg, workers=2).stats == ensemble(cfg, workers=1).stats


# ---- exploration --------------------------------------------------------------------


def test_explore_northstar_report():
    report = explore(small())
    assert report.hits.shape == (80,)
    illegal = [event_index(CoverageEvent("Sim", "Nop", a, b, c)) for a in (0, 1) for b in (0, 1) for c in (0, 1)]
    assert report.hits[illegal].sum() == 0
    j = report.hardest
    assert report.hits[j] == report.hits[report.hits > 0].min()
    assert 0 < report.best_rate[j] <= 1
    assert len(report.best_weights[j]) == 23


def test_explore_requires_templates():
    cfg = small()
    cfg.explore.templates = 0
    with pytest.raises(ValueError):
        explore(cfg)


def test_explore_multiplication_mass_decreases():
    cfg = small(simulator__kind="multiplication", explore__templates=1000, explore__runs_per_template=50)
    report = explore(cfg)
    decades = report.hits.reshape(10, 10).sum(axis=1)
    assert all(a > b for a, b in zip(decades, decades[1:]))
    assert report.hits[:10].sum() > 20 * report.hits[90:].sum()


def test_explore_chunking_does_not_change_totals():
    cfg = small()
    a = explore(cfg, chunk=7)
    b = explore(cfg, chunk=100)
    np.testing.assert_array_equal(a.hits, b.hits)
    np.testing.assert_array_equal(a.best_template, b.best_template)


# ---- landscape ----------------------------------------------------------------------


def test_landscape_zero_extent_is_constant():
    grid = landscape(small(landscape__extent=0.0, landscape__samples=200))
    assert np.all(grid.values == grid.values[0, 0])
    center = landscape(small(landscape__extent=0.0, landscape__samples=200, landscape__points=2))
    assert center.values[0, 0] == grid.values[0, 0]


def test_landscape_noise_shrinks_with_samples():
    def spread(N):
        reps = [landscape(small(landscape__points=5), samples=N, repeat=r).values for r in range(8)]
        return np.var(np.stack(reps), axis=0, ddof=1)

    low, high = spread(10), spread(1000)
    assert high.mean() < low.mean()
    assert np.median(high) < np.median(low)


def test_landscape_multiplication_bounds():
    cfg = small(simulator__kind="multiplication", landscape__extent=30.0, landscape__points=7)
    values = landscape(cfg).values
    assert np.all(np.isfinite(values))
    assert np.all((values >= -1) & (values <= 0))


def test_grid_round_trip_and_parallel():
    cfg = small()
    grid = landscape(cfg)
    assert parse_grid(render_grid(grid)) == grid
    assert landscape(cfg, workers=2) == grid
    flat = landscape(small(landscape__extent=0.0))
    assert parse_grid(render_grid(flat)) == flat


# ---- workers -----------------------------------------------------------------------


def _square(x):
    return x * x


def test_ordered_map_and_workers(monkeypatch):
    assert ordered_map(_square, range(6), 3) == [0, 1, 4, 9, 16, 25]
    monkeypatch.setenv("CDG_WORKERS", "3")
    assert resolve_workers(None) == 3
    assert resolve_workers(2) == 2
    monkeypatch.setenv("CDG_WORKERS", "zero")
    with pytest.raises(ValueError):
        resolve_workers(None)
    monkeypatch.delenv("CDG_WORKERS")
    assert resolve_workers(None) >= 1


# ---- command line -----------------------------------------------------------------


def _write_cfg(tmp_path, **changes) -> Path:
    path = tmp_path / "cfg.yaml"
    path.write_text(small(**changes).to_yaml(), encoding="utf-8")
    return path


def _artifacts(root: Path) -> dict:
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.mark.parametrize("command, files", [
    ("explore", {"config.yaml", "events.csv", "summary.txt"}),
    ("landscape", {"config.yaml", "grid.csv", "summary.txt"}),
    ("true-prob", {"config.yaml", "true_prob.json"}),
    ("optimize", {"config.yaml", "run.jsonl", "table.txt"}),
])
def test_cli_artifacts_bit_identical(tmp_path, capsys, command, files):
    cfg = _write_cfg(tmp_path)
    outs = [tmp_path / "a", tmp_path / "b"]
    for out in outs:
        assert main([command, "--config", str(cfg), "--out", str(out), "--workers", "1"]) == 0
    a, b = (_artifacts(o) for o in outs)
    assert set(a) == files
    assert a == b
    assert capsys.readouterr().out


def test_cli_ensemble_layout(tmp_path):
    cfg = _write_cfg(tmp_path)
    assert main(["ensemble", "--config", str(cfg), "--out", str(tmp_path / "e"), "--method", "lbfgs"]) == 0
    files = _artifacts(tmp_path / "e")
    assert {"stats.csv", "runs.csv", "stats.txt", "config.yaml", "runs/N5_n4_run000.jsonl",
            "runs/N2_n10_run001.jsonl"} <= set(files)
    assert b"lbfgs" in files["config.yaml"]


def test_cli_seed_override_and_from_run(tmp_path):
    cfg = _write_cfg(tmp_path)
    assert main(["optimize", "--config", str(cfg), "--seed", "11", "--out", str(tmp_path / "o")]) == 0
    assert b"master_seed: 11" in (tmp_path / "o" / "config.yaml").read_bytes()
    run = tmp_path / "o" / "run.jsonl"
    assert main(["true-prob", "--config", str(cfg), "--from-run", str(run), "--out", str(tmp_path / "t")]) == 0
    assert b"probability" in (tmp_path / "t" / "true_prob.json").read_bytes()


@pytest.mark.parametrize("argv", [
    [],
    ["frobnicate"],
    ["optimize", "--method", "newton"],
    ["optimize", "--seed", "-4"],
    ["true-prob", "--raw", "1,2,3"],
    ["true-prob", "--raw", "a,b"],
    ["optimize", "--workers", "0"],
])
def test_cli_usage_errors_exit_1(tmp_path, argv, capsys):
    assert main(argv + ["--out", str(tmp_path / "x")] if argv else argv) == 1
    assert capsys.readouterr().err


def test_cli_bad_config_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("optimizer:\n  stepp: 2\n", encoding="utf-8")
    assert main(["optimize", "--config", str(bad)]) == 1
    assert "optimizer.stepp" in capsys.readouterr().err
    empty = tmp_path / "empty.yaml"
    empty.write_text("", encoding="utf-8")
    assert main(["explore", "--config", str(empty)]) == 1


def test_cli_runtime_failure_exit_2(tmp_path, capsys):
    cfg = _write_cfg(tmp_path)
    blocker = tmp_path / "file"
    blocker.write_text("x", encoding="utf-8")
    assert main(["true-prob", "--config", str(cfg), "--out", str(blocker)]) == 2
    assert "failed" in capsys.readouterr().err
