"""
Experiment sweeps

An experiment is the Cartesian product of algorithms, swarm sizes, plume
variants and failure probabilities, with a fixed number of seeded trials
per cell. Seeds are derived from the base seed, the cell and the trial
index, and rows are sorted before they are written, so the output does
not depend on how many worker processes ran the sweep.
"""

import csv
import itertools
import logging
import math
import os
import zlib
from dataclasses import dataclass
from typing import Any, Callable, Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import yaml
from joblib import Parallel, delayed

from . import __version__
from .config import experiment_settings, trial_config, validate_probabilities
from .errors import ConfigError, OutputError
from .sim import TrialConfig, TrialResult, run_trial

logger = logging.getLogger(__name__)

FAILURE_SWEEP = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
EXPERIMENTS = ("1", "2", "3", "4")

RESULT_COLUMNS = [
    "experiment", "algorithm", "n", "plume", "p_generic", "p_inplume", "trial", "seed",
    "success", "contact_tick", "maxflux_tick", "survivors", "heal_events", "distance_m", "reason",
]
SUMMARY_COLUMNS = [
    "experiment", "algorithm", "n", "plume", "p_generic", "p_inplume", "trials", "successes",
    "contact_median_min", "contact_mean_min", "contact_std_min",
    "maxflux_median_min", "maxflux_mean_min", "maxflux_std_min",
]


@dataclass(frozen=True)
class ExperimentSpec:
    """Axes of one experiment."""

    name: str
    algorithms: Tuple[str, ...]
    swarm_sizes: Tuple[int, ...]
    plume_variants: Tuple[str, ...] = ("smooth",)
    p_generic: Tuple[float, ...] = (0.0,)
    p_inplume: Tuple[float, ...] = (0.0,)
    trials: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError(f"trials must be at least 1, got {self.trials}")
        validate_probabilities(self.p_generic, "p_generic")
        validate_probabilities(self.p_inplume, "p_inplume")

    def cells(self) -> List["CellKey"]:
        return [
            CellKey(self.name, algorithm, n, plume, pg, pi)
            for algorithm, n, plume, pg, pi in itertools.product(
                self.algorithms, self.swarm_sizes, self.plume_variants, self.p_generic, self.p_inplume)
        ]


class CellKey(NamedTuple):
    experiment: str
    algorithm: str
    n: int
    plume: str
    p_generic: float
    p_inplume: float

    @property
    def label(self) -> str:
        """Stable identity of the cell, independent of the experiment it belongs to."""
        return f"{self.algorithm}|{self.n}|{self.plume}|{self.p_generic!r}|{self.p_inplume!r}"

    def sort_key(self) -> tuple:
        order = EXPERIMENTS.index(self.experiment) if self.experiment in EXPERIMENTS else len(EXPERIMENTS)
        return (order, self.experiment, self.algorithm, self.n, self.plume, -self.p_generic, -self.p_inplume)


@dataclass(frozen=True)
class TrialRow:
    cell: CellKey
    trial: int
    seed: int
    result: TrialResult


@dataclass(frozen=True)
class SummaryRow:
    cell: CellKey
    trials: int
    successes: int
    contact: Tuple[Optional[float], Optional[float], Optional[float]] = (None, None, None)
    maxflux: Tuple[Optional[float], Optional[float], Optional[float]] = (None, None, None)

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials if self.trials else 0.0


@dataclass(frozen=True)
class TrendCheck:
    name: str
    passed: bool
    detail: str = ""


def preset(name: str, trials: int = 100, seed: int = 0, sizes: Optional[Sequence[int]] = None) -> ExperimentSpec:
    """
    The four standard experiments.

    1: smooth plume, no failures; 2: perturbed plume, no failures;
    3: generic failure sweep at N = 20; 4: in-plume failure sweep at N = 20.
    """
    if name in ("1", "2"):
        return ExperimentSpec(
            name=name,
            algorithms=("locus", "mobs"),
            swarm_sizes=tuple(sizes or (5, 10, 20)),
            plume_variants=("smooth",) if name == "1" else ("perturbed",),
            trials=trials,
            seed=seed,
        )
    if name in ("3", "4"):
        sweep = {"p_generic": FAILURE_SWEEP} if name == "3" else {"p_inplume": FAILURE_SWEEP}
        return ExperimentSpec(
            name=name,
            algorithms=("locus", "locus-no-heal", "mobs"),
            swarm_sizes=tuple(sizes or (20,)),
            trials=trials,
            seed=seed,
            **sweep,
        )
    raise ConfigError(f"Unknown experiment '{name}', expected one of {', '.join(EXPERIMENTS)}, all or custom")


def custom_spec(settings: Dict[str, Any], trials: Optional[int] = None, seed: Optional[int] = None,
                sizes: Optional[Sequence[int]] = None) -> ExperimentSpec:
    """Experiment built from the `experiment` section of the settings."""
    section = experiment_settings(settings)
    return ExperimentSpec(
        name="custom",
        algorithms=tuple(section["algorithms"]),
        swarm_sizes=tuple(sizes or section["swarm_sizes"]),
        plume_variants=tuple(section["plume_variants"]),
        p_generic=tuple(section["p_generic"]),
        p_inplume=tuple(section["p_inplume"]),
        trials=trials or section["trials"],
        seed=section["seed"] if seed is None else seed,
    )


def trial_seed(base_seed: int, cell: CellKey, trial: int) -> int:
    """Seed of trial `trial` of `cell`, a pure function of its arguments."""
    label = zlib.crc32(cell.label.encode("utf-8"))
    return int(np.random.SeedSequence([base_seed, label, trial]).generate_state(1)[0])


def _run_job(job: Tuple[TrialConfig, CellKey, int, int]) -> TrialRow:
    config, cell, trial, seed = job
    return TrialRow(cell=cell, trial=trial, seed=seed, result=run_trial(config, seed))


def plan_jobs(specs: Iterable[ExperimentSpec], settings: Dict[str, Any],
              budget: Optional[int] = None) -> List[Tuple[TrialConfig, CellKey, int, int]]:
    jobs = []
    for spec in specs:
        for cell in spec.cells():
            config = trial_config(
                settings,
                algorithm=cell.algorithm,
                n=cell.n,
                plume_variant=cell.plume,
                p_generic=cell.p_generic,
                p_inplume=cell.p_inplume,
                tick_budget=budget,
                record_waypoints=False,
            )
            for trial in range(spec.trials):
                jobs.append((config, cell, trial, trial_seed(spec.seed, cell, trial)))
    return jobs


def run_experiment(specs: Sequence[ExperimentSpec], settings: Dict[str, Any], workers: int = 1,
                   budget: Optional[int] = None,
                   progress: Optional[Callable[[TrialRow], None]] = None) -> List[TrialRow]:
    """
    Run every trial of the given experiments.

    Args:
        specs: Experiments to run
        settings: Merged settings the trial configurations are built from
        workers: Worker processes; 1 runs in-process
        budget: Tick budget override
        progress: Called with each finished row, in completion order

    Returns:
        Rows sorted by cell and trial
    """
    if workers < 1:
        raise ConfigError(f"workers must be at least 1, got {workers}")
    jobs = plan_jobs(specs, settings, budget)
    logger.info(f"Running {len(jobs)} trials on {workers} worker{'s' if workers > 1 else ''}")

    rows: List[TrialRow] = []
    if workers == 1:
        for job in jobs:
            row = _run_job(job)
            rows.append(row)
            if progress is not None:
                progress(row)
    else:
        parallel = Parallel(n_jobs=workers, return_as="generator_unordered")
        for row in parallel(delayed(_run_job)(job) for job in jobs):
            rows.append(row)
            if progress is not None:
                progress(row)

    rows.sort(key=lambda row: (row.cell.sort_key(), row.trial))
    return rows


def describe(values: Sequence[float]) -> Tuple[Optional[float], Optional[float], Optional[float]]:
    """(median, mean, population std), or Nones for no values."""
    if len(values) == 0:
        return None, None, None
    data = np.asarray(values, dtype=float)
    return float(np.median(data)), float(np.mean(data)), float(np.std(data))


def summarize(rows: Sequence[TrialRow], dt: float = 0.06228) -> List[SummaryRow]:
    """
    Per-cell success counts and time statistics in minutes.

    Statistics cover successful trials only.
    """
    to_minutes = dt / 60.0
    grouped: Dict[CellKey, List[TrialRow]] = {}
    for row in rows:
        grouped.setdefault(row.cell, []).append(row)

    summary = []
    for cell in sorted(grouped, key=CellKey.sort_key):
        cell_rows = grouped[cell]
        wins = [r.result for r in cell_rows if r.result.success]
        summary.append(SummaryRow(
            cell=cell,
            trials=len(cell_rows),
            successes=len(wins),
            contact=describe([r.contact_tick * to_minutes for r in wins if r.contact_tick is not None]),
            maxflux=describe([r.maxflux_tick * to_minutes for r in wins]),
        ))
    return summary


# ----------------------------------------------------------------------
# Output

def _fmt(value: Optional[float], spec: str = ".6f") -> str:
    return "" if value is None else format(value, spec)


def _cell_fields(cell: CellKey) -> List[str]:
    return [cell.experiment, cell.algorithm, str(cell.n), cell.plume,
            _fmt(cell.p_generic, "g"), _fmt(cell.p_inplume, "g")]


def _open_for_write(path: str):
    try:
        directory = os.path.dirname(os.path.abspath(path))
        os.makedirs(directory, exist_ok=True)
        return open(path, "w", newline="")
    except OSError as e:
        raise OutputError(path, e.strerror or str(e)) from e


def write_results(rows: Sequence[TrialRow], path: str) -> str:
    with _open_for_write(path) as stream:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)
        for row in rows:
            r = row.result
            writer.writerow(_cell_fields(row.cell) + [
                row.trial, row.seed, int(r.success),
                "" if r.contact_tick is None else r.contact_tick,
                "" if r.maxflux_tick is None else r.maxflux_tick,
                r.survivors, r.heal_events, f"{r.distance_m:.3f}", r.reason,
            ])
    return path


def write_summary(summary: Sequence[SummaryRow], path: str) -> str:
    with _open_for_write(path) as stream:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(SUMMARY_COLUMNS)
        for row in summary:
            writer.writerow(_cell_fields(row.cell) + [row.trials, row.successes]
                            + [_fmt(v) for v in row.contact] + [_fmt(v) for v in row.maxflux])
    return path


def write_run_info(path: str, specs: Sequence[ExperimentSpec], budget: int, dt: float) -> str:
    info = {
        "version": __version__,
        "experiments": [spec.name for spec in specs],
        "trials": {spec.name: spec.trials for spec in specs},
        "seed": {spec.name: spec.seed for spec in specs},
        "tick_budget": int(budget),
        "dt_seconds": float(dt),
        "statistics": "successful trials only, population standard deviation, minutes",
    }
    with _open_for_write(path) as stream:
        yaml.safe_dump(info, stream, sort_keys=True, default_flow_style=False)
    return path


# ----------------------------------------------------------------------
# Trend checks

def _by_cell(summary: Sequence[SummaryRow], experiment: str) -> Dict[Tuple[str, int, float, float], SummaryRow]:
    return {(r.cell.algorithm, r.cell.n, r.cell.p_generic, r.cell.p_inplume): r
            for r in summary if r.cell.experiment == experiment}


def _timing_checks(summary: Sequence[SummaryRow], experiment: str) -> List[TrendCheck]:
    cells = _by_cell(summary, experiment)
    sizes = sorted({n for (_, n, _, _) in cells})
    checks = []

    def pair(n):
        return cells.get(("locus", n, 0.0, 0.0)), cells.get(("mobs", n, 0.0, 0.0))

    if experiment == "1":
        for n in sizes:
            locus, mobs = pair(n)
            if locus is not None:
                checks.append(TrendCheck(f"exp1 locus success N={n}", locus.success_rate == 1.0,
                                         f"{locus.successes}/{locus.trials}"))
            if mobs is not None:
                checks.append(TrendCheck(f"exp1 mobs success N={n}", mobs.success_rate >= 0.95,
                                         f"{mobs.successes}/{mobs.trials}"))
        if sizes:
            locus, mobs = pair(sizes[0])
            checks.append(_compare(f"exp1 std N={sizes[0]}", locus, mobs, index=2, factor=1.0))
    else:
        for n in sizes:
            locus, mobs = pair(n)
            checks.append(_compare(f"exp2 mean N={n}", locus, mobs, index=1, factor=1.0))
            checks.append(_compare(f"exp2 std N={n}", locus, mobs, index=2, factor=2.0))
    return checks


def _compare(name: str, locus: Optional[SummaryRow], mobs: Optional[SummaryRow],
             index: int, factor: float) -> TrendCheck:
    """MoBS max-flux statistic `index` exceeds `factor` times the LoCUS one."""
    if locus is None or mobs is None:
        return TrendCheck(name, False, "missing cells")
    a, b = locus.maxflux[index], mobs.maxflux[index]
    if a is None or b is None:
        return TrendCheck(name, False, "no successful trials")
    return TrendCheck(name, b > factor * a, f"locus {a:.2f} min, mobs {b:.2f} min")


def _threshold(curve: Dict[float, float]) -> Optional[float]:
    """Largest probability with at least half the trials successful."""
    kept = [p for p, rate in curve.items() if rate >= 0.5]
    return max(kept) if kept else None


def _failure_checks(summary: Sequence[SummaryRow], experiment: str) -> List[TrendCheck]:
    axis = "p_generic" if experiment == "3" else "p_inplume"
    curves: Dict[str, Dict[float, float]] = {}
    for row in summary:
        if row.cell.experiment == experiment:
            curves.setdefault(row.cell.algorithm, {})[getattr(row.cell, axis)] = row.success_rate

    heal, no_heal = curves.get("locus", {}), curves.get("locus-no-heal", {})
    checks = []
    if heal and no_heal:
        worse = [p for p in heal if p in no_heal and heal[p] < no_heal[p]]
        checks.append(TrendCheck(
            f"exp{experiment} heal >= no-heal", not worse,
            "at every probability" if not worse else "fails at " + ", ".join(f"{p:g}" for p in sorted(worse)),
        ))
        t_heal, t_none = _threshold(heal), _threshold(no_heal)
        if t_heal is None:
            passed, detail = False, "healing never keeps 50% success"
        elif t_none is None:
            passed, detail = True, f"heal {t_heal:g}, no-heal never"
        else:
            passed = math.log10(t_heal) - math.log10(t_none) >= 1.0 - 1e-9
            detail = f"heal {t_heal:g}, no-heal {t_none:g}"
        checks.append(TrendCheck(f"exp{experiment} 50% threshold decade", passed, detail))
    if experiment == "4":
        for algorithm in ("locus", "mobs"):
            rate = curves.get(algorithm, {}).get(1e-3)
            checks.append(TrendCheck(
                f"exp4 {algorithm} success at 1e-3", rate is not None and rate >= 0.5,
                "missing" if rate is None else f"{rate:.0%}",
            ))
    return checks


def check_trends(summary: Sequence[SummaryRow]) -> List[TrendCheck]:
    """Evaluate the comparative claims for every standard experiment present."""
    present = {row.cell.experiment for row in summary}
    checks: List[TrendCheck] = []
    for experiment in EXPERIMENTS:
        if experiment not in present:
            continue
        if experiment in ("1", "2"):
            checks.extend(_timing_checks(summary, experiment))
        else:
            checks.extend(_failure_checks(summary, experiment))
    return checks
