"""
SVG charts of an experiment summary.

Timing experiments get a grouped bar chart of mean time to contact and to
max flux per swarm size, with one-standard-deviation error bars and the
median marked by a star. Failure sweeps get success rate against failure
probability on a log axis.
"""

import logging
import os
from typing import Dict, List, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import OutputError  # noqa: E402
from .harness import SummaryRow  # noqa: E402

logger = logging.getLogger(__name__)

STYLE = {
    "svg.hashsalt": "plume-swarm",
    "svg.fonttype": "none",
    "font.size": 9,
}
COLORS = {"locus": "#1f77b4", "locus-no-heal": "#9467bd", "mobs": "#d62728"}
LABELS = {"locus": "LoCUS", "locus-no-heal": "LoCUS (no healing)", "mobs": "MoBS"}


def _save(fig, path: str) -> str:
    try:
        fig.savefig(path, format="svg", metadata={"Date": None})
    except OSError as e:
        raise OutputError(path, e.strerror or str(e)) from e
    finally:
        plt.close(fig)
    logger.info(f"Wrote {path}")
    return path


def _times_chart(rows: Sequence[SummaryRow], experiment: str, path: str) -> str:
    algorithms = sorted({r.cell.algorithm for r in rows}, key=list(COLORS).index)
    sizes = sorted({r.cell.n for r in rows})
    cells = {(r.cell.algorithm, r.cell.n): r for r in rows}
    width = 0.8 / max(len(algorithms), 1)
    x = np.arange(len(sizes))

    fig, axes = plt.subplots(1, 2, figsize=(8, 3.5), sharey=False)
    for ax, metric, title in ((axes[0], "contact", "Time to plume contact"),
                              (axes[1], "maxflux", "Time to max flux")):
        for k, algorithm in enumerate(algorithms):
            stats = [getattr(cells[(algorithm, n)], metric) if (algorithm, n) in cells else (None,) * 3
                     for n in sizes]
            medians = [np.nan if s[0] is None else s[0] for s in stats]
            means = [np.nan if s[1] is None else s[1] for s in stats]
            stds = [np.nan if s[2] is None else s[2] for s in stats]
            offset = x + (k - (len(algorithms) - 1) / 2) * width
            ax.bar(offset, means, width, yerr=stds, capsize=3, color=COLORS.get(algorithm),
                   alpha=0.7, label=LABELS.get(algorithm, algorithm))
            ax.plot(offset, medians, linestyle="none", marker="*", color="black", markersize=7)
        ax.set_xticks(x)
        ax.set_xticklabels([str(n) for n in sizes])
        ax.set_xlabel("Swarm size")
        ax.set_ylabel("Minutes")
        ax.set_title(title)
    axes[0].legend(loc="upper right")
    fig.suptitle(f"Experiment {experiment}")
    fig.tight_layout()
    return _save(fig, path)


def _success_curves(rows: Sequence[SummaryRow], axis: str) -> Dict[str, Tuple[List[float], List[float]]]:
    curves: Dict[str, Dict[float, float]] = {}
    for r in rows:
        curves.setdefault(r.cell.algorithm, {})[getattr(r.cell, axis)] = 100.0 * r.success_rate
    return {a: (sorted(c), [c[p] for p in sorted(c)]) for a, c in curves.items()}


def _success_chart(groups: Sequence[Tuple[str, Sequence[SummaryRow]]], title: str, path: str) -> str:
    fig, ax = plt.subplots(figsize=(6, 4))
    for experiment, rows in groups:
        axis = "p_generic" if experiment == "3" else "p_inplume"
        kind = "generic" if experiment == "3" else "in-plume"
        style = "-" if experiment == "3" else "--"
        for algorithm, (ps, rates) in sorted(_success_curves(rows, axis).items(), key=lambda kv: list(COLORS).index(kv[0])):
            label = LABELS.get(algorithm, algorithm)
            if len(groups) > 1:
                label = f"{label}, {kind}"
            ax.plot(ps, rates, style, marker="o", color=COLORS.get(algorithm), label=label)
    ax.set_xscale("log")
    ax.set_xlabel("Failure probability per tick")
    ax.set_ylabel("Success rate (%)")
    ax.set_ylim(-5, 105)
    ax.set_title(title)
    ax.legend(loc="lower left", fontsize=7)
    fig.tight_layout()
    return _save(fig, path)


def emit_plots(summary: Sequence[SummaryRow], out_dir: str) -> List[str]:
    """
    Write the SVG charts for every standard experiment in `summary`.

    Returns:
        Paths written; empty when the summary is empty
    """
    if not summary:
        logger.warning("Summary is empty, no plots written")
        return []
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as e:
        raise OutputError(out_dir, e.strerror or str(e)) from e

    by_experiment: Dict[str, List[SummaryRow]] = {}
    for row in summary:
        by_experiment.setdefault(row.cell.experiment, []).append(row)

    written = []
    with plt.rc_context(STYLE):
        for experiment in ("1", "2"):
            if experiment in by_experiment:
                written.append(_times_chart(by_experiment[experiment], experiment,
                                            os.path.join(out_dir, f"exp{experiment}_times.svg")))
        if "3" in by_experiment and "4" in by_experiment:
            written.append(_success_chart(
                [("3", by_experiment["3"]), ("4", by_experiment["4"])],
                "Success rate under failures", os.path.join(out_dir, "exp34_success.svg")))
        else:
            for experiment in ("3", "4"):
                if experiment in by_experiment:
                    written.append(_success_chart(
                        [(experiment, by_experiment[experiment])],
                        f"Experiment {experiment}", os.path.join(out_dir, f"exp{experiment}_success.svg")))
    skipped = sorted(set(by_experiment) - {"1", "2", "3", "4"})
    if skipped:
        logger.info(f"No standard chart for experiments {', '.join(skipped)}")
    return written
