import sys
import os
import csv
import math
import statistics

import pytest
import yaml
from hypothesis import given, settings, strategies as st

# Add the parent directory to sys.path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from plumeSwarm.config import default_settings
from plumeSwarm.errors import ConfigError
from plumeSwarm.harness import (FAILURE_SWEEP, RESULT_COLUMNS, SUMMARY_COLUMNS, CellKey, ExperimentSpec,
                                SummaryRow, TrialRow, check_trends, describe, preset, run_experiment,
                                summarize, trial_seed, write_results, write_run_info, write_summary)
from plumeSwarm.plots import emit_plots
from plumeSwarm.plume import PlumePose
from plumeSwarm.sim import TrialConfig, TrialResult, run_trial


def _result(success=True, contact=None, maxflux=None, reason=None):
    return TrialResult(
        success=success,
        contact_tick=contact,
        maxflux_tick=maxflux if success else None,
        survivors=1,
        distance_m=12.5,
        heal_events=0,
        reason=reason or ("success" if success else "budget"),
        ticks=maxflux or 100,
    )


def _cell(algorithm="locus", n=5, experiment="1", p_generic=0.0, p_inplume=0.0, plume="smooth"):
    return CellKey(experiment, algorithm, n, plume, p_generic, p_inplume)


def _stats(mean, std):
    return (mean, mean, std)


def test_describe():
    """Median, mean and population standard deviation"""
    median, mean, std = describe([2, 4, 9])
    assert median == 4
    assert mean == 5
    assert std == pytest.approx(math.sqrt(26 / 3))

    assert describe([7.0]) == (7.0, 7.0, 0.0)
    assert describe([]) == (None, None, None)


@given(st.lists(st.floats(min_value=0, max_value=1e6, allow_nan=False), min_size=1, max_size=50))
@settings(max_examples=100, deadline=None)
def test_describe_matches_statistics(values):
    """describe agrees with the statistics module"""
    median, mean, std = describe(values)
    assert median == pytest.approx(statistics.median(values), rel=1e-9, abs=1e-9)
    assert mean == pytest.approx(statistics.fmean(values), rel=1e-9, abs=1e-6)
    assert std == pytest.approx(statistics.pstdev(values), rel=1e-6, abs=1e-6)


def test_summarize_uses_successful_trials_in_minutes():
    """Failed trials count towards the rate but not the timing statistics"""
    cell = _cell()
    rows = [
        TrialRow(cell, 0, 11, _result(contact=10, maxflux=60)),
        TrialRow(cell, 1, 12, _result(contact=20, maxflux=180)),
        TrialRow(cell, 2, 13, _result(success=False, contact=5)),
    ]
    [summary] = summarize(rows, dt=60.0)

    assert summary.trials == 3
    assert summary.successes == 2
    assert summary.success_rate == pytest.approx(2 / 3)
    assert summary.contact == pytest.approx((15.0, 15.0, 5.0))
    assert summary.maxflux == pytest.approx((120.0, 120.0, 60.0))


def test_summarize_without_successes():
    """A cell with no successes has empty statistics"""
    cell = _cell(algorithm="mobs")
    [summary] = summarize([TrialRow(cell, 0, 1, _result(success=False))], dt=60.0)
    assert summary.successes == 0
    assert summary.contact == (None, None, None)
    assert summary.maxflux == (None, None, None)


def test_summarize_orders_cells():
    """Cells come out by experiment, then algorithm, then size"""
    rows = [TrialRow(_cell("mobs", 5), 0, 1, _result(maxflux=1)),
            TrialRow(_cell("locus", 20), 0, 1, _result(maxflux=1)),
            TrialRow(_cell("locus", 5, experiment="2", plume="perturbed"), 0, 1, _result(maxflux=1)),
            TrialRow(_cell("locus", 5), 0, 1, _result(maxflux=1))]
    order = [(r.cell.experiment, r.cell.algorithm, r.cell.n) for r in summarize(rows)]
    assert order == [("1", "locus", 5), ("1", "locus", 20), ("1", "mobs", 5), ("2", "locus", 5)]


def test_presets():
    """The four standard experiments"""
    exp1 = preset("1")
    assert len(exp1.cells()) == 6
    assert {c.plume for c in exp1.cells()} == {"smooth"}
    assert {c.n for c in exp1.cells()} == {5, 10, 20}

    exp2 = preset("2", trials=3, sizes=[4])
    assert {c.plume for c in exp2.cells()} == {"perturbed"}
    assert {c.n for c in exp2.cells()} == {4}
    assert exp2.trials == 3

    exp3 = preset("3")
    assert len(exp3.cells()) == 18
    assert {c.n for c in exp3.cells()} == {20}
    assert {c.p_generic for c in exp3.cells()} == set(FAILURE_SWEEP)
    assert {c.p_inplume for c in exp3.cells()} == {0.0}
    assert {c.algorithm for c in exp3.cells()} == {"locus", "locus-no-heal", "mobs"}

    exp4 = preset("4")
    assert {c.p_inplume for c in exp4.cells()} == set(FAILURE_SWEEP)
    assert {c.p_generic for c in exp4.cells()} == {0.0}


def test_preset_errors():
    """Unknown names and bad sweeps are configuration errors"""
    with pytest.raises(ConfigError):
        preset("5")
    with pytest.raises(ConfigError):
        preset("1", trials=0)
    with pytest.raises(ConfigError):
        ExperimentSpec("x", ("locus",), (5,), p_generic=(0.5,))
    with pytest.raises(ConfigError):
        ExperimentSpec("x", ("locus",), (5,), p_inplume=(1e-8,))


def test_trial_seed():
    """Seeds depend on base seed, cell and trial but not the experiment name"""
    cell = _cell()
    assert trial_seed(0, cell, 3) == trial_seed(0, cell, 3)
    assert trial_seed(0, cell, 3) == trial_seed(0, cell._replace(experiment="custom"), 3)

    others = {trial_seed(1, cell, 3), trial_seed(0, cell, 4), trial_seed(0, _cell(n=10), 3),
              trial_seed(0, _cell(algorithm="mobs"), 3), trial_seed(0, cell, 3)}
    assert len(others) == 5
    assert all(0 <= s < 2 ** 32 for s in others)


def _tiny_spec():
    return ExperimentSpec("custom", ("locus", "mobs"), (1, 2), trials=2, seed=7)


def test_run_experiment_rows():
    """Every trial of every cell, sorted, with its derived seed"""
    spec = _tiny_spec()
    seen = []
    rows = run_experiment([spec], default_settings(), workers=1, budget=150, progress=seen.append)

    assert len(rows) == 8
    assert len(seen) == 8
    assert [(r.cell.algorithm, r.cell.n, r.trial) for r in rows] == [
        (a, n, t) for a in ("locus", "mobs") for n in (1, 2) for t in (0, 1)]
    for row in rows:
        assert row.seed == trial_seed(7, row.cell, row.trial)
        assert row.result.ticks <= 150


def test_run_experiment_rejects_zero_workers():
    with pytest.raises(ConfigError):
        run_experiment([_tiny_spec()], default_settings(), workers=0)


@pytest.mark.integration
def test_results_do_not_depend_on_workers(tmp_path):
    """One worker and two workers write byte-identical results"""
    spec = _tiny_spec()
    serial = run_experiment([spec], default_settings(), workers=1, budget=150)
    parallel = run_experiment([spec], default_settings(), workers=2, budget=150)

    a = write_results(serial, str(tmp_path / "serial.csv"))
    b = write_results(parallel, str(tmp_path / "parallel.csv"))
    with open(a, "rb") as fa, open(b, "rb") as fb:
        assert fa.read() == fb.read()


def test_write_results_and_summary(tmp_path):
    """CSV headers and row formatting"""
    cell = _cell(experiment="3", p_generic=1e-3)
    rows = [TrialRow(cell, 0, 42, _result(contact=10, maxflux=60)),
            TrialRow(cell, 1, 43, _result(success=False, reason="all-failed"))]

    path = write_results(rows, str(tmp_path / "out" / "results.csv"))
    with open(path, newline="") as stream:
        records = list(csv.reader(stream))
    assert records[0] == RESULT_COLUMNS
    first = dict(zip(RESULT_COLUMNS, records[1]))
    assert first["p_generic"] == "0.001"
    assert first["success"] == "1"
    assert first["maxflux_tick"] == "60"
    assert first["distance_m"] == "12.500"
    second = dict(zip(RESULT_COLUMNS, records[2]))
    assert second["maxflux_tick"] == ""
    assert second["reason"] == "all-failed"

    path = write_summary(summarize(rows, dt=60.0), str(tmp_path / "summary.csv"))
    with open(path, newline="") as stream:
        records = list(csv.reader(stream))
    assert records[0] == SUMMARY_COLUMNS
    summary = dict(zip(SUMMARY_COLUMNS, records[1]))
    assert summary["trials"] == "2"
    assert summary["successes"] == "1"
    assert float(summary["maxflux_mean_min"]) == pytest.approx(60.0)
    assert float(summary["maxflux_std_min"]) == 0.0


def test_write_run_info(tmp_path):
    """Run metadata is plain YAML"""
    specs = [preset("1", trials=4, seed=3), preset("3", trials=2)]
    path = write_run_info(str(tmp_path / "run_info.yaml"), specs, budget=1000, dt=0.06228)
    with open(path) as stream:
        info = yaml.safe_load(stream)
    assert info["experiments"] == ["1", "3"]
    assert info["trials"] == {"1": 4, "3": 2}
    assert info["seed"] == {"1": 3, "3": 0}
    assert info["tick_budget"] == 1000
    assert info["dt_seconds"] == pytest.approx(0.06228)


def _timing_summary(experiment, locus, mobs, n=5, locus_rate=(100, 100), mobs_rate=(100, 100)):
    plume = "smooth" if experiment == "1" else "perturbed"
    return [
        SummaryRow(_cell("locus", n, experiment, plume=plume), locus_rate[1], locus_rate[0],
                   _stats(*locus), _stats(*locus)),
        SummaryRow(_cell("mobs", n, experiment, plume=plume), mobs_rate[1], mobs_rate[0],
                   _stats(*mobs), _stats(*mobs)),
    ]


def _failure_summary(experiment, rates):
    rows = []
    for algorithm, curve in rates.items():
        for p, rate in curve.items():
            kwargs = {"p_generic": p} if experiment == "3" else {"p_inplume": p}
            rows.append(SummaryRow(_cell(algorithm, 20, experiment, **kwargs), 10, int(round(rate * 10))))
    return rows


def test_check_trends_timing():
    """Experiment 1 and 2 comparisons"""
    checks = {c.name: c for c in check_trends(_timing_summary("1", (10.0, 1.0), (30.0, 5.0)))}
    assert checks["exp1 locus success N=5"].passed
    assert checks["exp1 mobs success N=5"].passed
    assert checks["exp1 std N=5"].passed

    checks = {c.name: c for c in check_trends(
        _timing_summary("1", (10.0, 6.0), (30.0, 5.0), locus_rate=(99, 100), mobs_rate=(90, 100)))}
    assert not checks["exp1 locus success N=5"].passed
    assert not checks["exp1 mobs success N=5"].passed
    assert not checks["exp1 std N=5"].passed

    checks = {c.name: c for c in check_trends(_timing_summary("2", (10.0, 2.0), (30.0, 3.0), n=10))}
    assert checks["exp2 mean N=10"].passed
    assert not checks["exp2 std N=10"].passed


def test_check_trends_failures():
    """Healing thresholds and in-plume survival"""
    summary = _failure_summary("3", {
        "locus": {1e-1: 0.0, 1e-2: 0.6, 1e-3: 1.0},
        "locus-no-heal": {1e-1: 0.0, 1e-2: 0.1, 1e-3: 0.7},
        "mobs": {1e-1: 0.0, 1e-2: 0.0, 1e-3: 0.2},
    })
    checks = {c.name: c for c in check_trends(summary)}
    assert checks["exp3 heal >= no-heal"].passed
    assert checks["exp3 50% threshold decade"].passed

    summary = _failure_summary("4", {
        "locus": {1e-2: 0.4, 1e-3: 1.0},
        "locus-no-heal": {1e-2: 0.5, 1e-3: 0.9},
        "mobs": {1e-2: 0.0, 1e-3: 0.3},
    })
    checks = {c.name: c for c in check_trends(summary)}
    assert not checks["exp4 heal >= no-heal"].passed
    assert "0.01" in checks["exp4 heal >= no-heal"].detail
    assert not checks["exp4 50% threshold decade"].passed
    assert checks["exp4 locus success at 1e-3"].passed
    assert not checks["exp4 mobs success at 1e-3"].passed


def test_check_trends_ignores_custom():
    """Custom sweeps carry no comparative claims"""
    rows = [SummaryRow(_cell(experiment="custom"), 1, 1, _stats(1.0, 0.0), _stats(1.0, 0.0))]
    assert check_trends(rows) == []


def test_emit_plots(tmp_path):
    """One chart per timing experiment, the failure sweeps share one"""
    assert emit_plots([], str(tmp_path)) == []

    summary = (_timing_summary("1", (10.0, 1.0), (30.0, 5.0))
               + _failure_summary("3", {"locus": {1e-2: 0.5, 1e-3: 1.0}, "mobs": {1e-2: 0.0, 1e-3: 0.5}})
               + _failure_summary("4", {"locus": {1e-2: 0.5, 1e-3: 1.0}, "mobs": {1e-2: 0.0, 1e-3: 0.5}}))
    written = emit_plots(summary, str(tmp_path / "plots"))

    assert [os.path.basename(p) for p in written] == ["exp1_times.svg", "exp34_success.svg"]
    for path in written:
        with open(path) as stream:
            assert "<svg" in stream.read()


def test_emit_plots_single_failure_sweep(tmp_path):
    summary = _failure_summary("4", {"locus": {1e-2: 0.5, 1e-3: 1.0}})
    written = emit_plots(summary, str(tmp_path))
    assert [os.path.basename(p) for p in written] == ["exp4_success.svg"]


@pytest.mark.integration
@pytest.mark.slow
def test_locus_beats_mobs_on_the_perturbed_plume():
    """On the rippled plume the cohesive sweep reaches the peak sooner than independent chemotaxis."""
    poses = [
        PlumePose(peak=(60.0, 4.0), source=(-1190.0, 4.0)),
        PlumePose(peak=(-50.0, -6.0), source=(-1300.0, -6.0)),
        PlumePose(peak=(80.0, 0.0), source=(-1170.0, 0.0)),
    ]
    ticks = {}
    for algorithm in ("locus", "mobs"):
        config = TrialConfig(algorithm=algorithm, n=5, tick_budget=60000, plume_variant="perturbed")
        results = [run_trial(config, seed, pose=pose) for seed, pose in enumerate(poses)]
        if algorithm == "locus":
            assert all(result.success for result in results)
        # Failed trials count at the budget
        ticks[algorithm] = [result.ticks for result in results]
    assert statistics.mean(ticks["locus"]) < statistics.mean(ticks["mobs"])
