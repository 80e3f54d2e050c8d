#!/usr/bin/env python
"""
Command-line interface for Plume Swarm

This module provides the entry point for the 'plume-swarm' command:
experiment sweeps, single trials, tree layouts and plume rasters.
"""

import argparse
import csv
import logging
import os
import shutil
import sys
from typing import Any, Dict, List, Optional, Sequence, Tuple

# Initialize colorama early for Windows terminal color support
import colorama
colorama.init()

from . import __version__, __author__, __github__  # noqa: E402
from .config import ensure_user_config_exists, experiment_settings, load_settings, trial_config  # noqa: E402
from .errors import ConfigError, OutputError  # noqa: E402
from .harness import (check_trends, custom_spec, preset, run_experiment, summarize,  # noqa: E402
                      write_results, write_run_info, write_summary)
from .plots import emit_plots  # noqa: E402
from .plume import PlumeField, PlumeParams, PlumePose, peak_location  # noqa: E402
from .sim import ALGORITHMS, PLUME_VARIANTS, TickTrace, run_trial, write_waypoints  # noqa: E402
from .tree import TreeParams, build_swarm  # noqa: E402
from .utils.progress import Spinner, SpinnerStyle, SweepProgress, TickTracker  # noqa: E402

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger('plumeSwarm')

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


# ANSI color codes for terminal output
class Colors:
    RESET = '\033[0m'
    BOLD = '\033[1m'
    RED = '\033[31m'
    GREEN = '\033[32m'
    YELLOW = '\033[33m'
    CYAN = '\033[36m'
    BRIGHT_RED = '\033[91m'
    BRIGHT_GREEN = '\033[92m'
    BRIGHT_YELLOW = '\033[93m'
    BRIGHT_CYAN = '\033[96m'
    BRIGHT_WHITE = '\033[97m'


# Terminal style, narrowed by --no-fancy, --no-unicode and the display settings
DISPLAY = {'fancy': True, 'unicode': True}


def configure_display(fancy: bool = True, unicode: bool = True) -> None:
    DISPLAY['fancy'] = fancy
    DISPLAY['unicode'] = unicode


def print_section_header(text: str) -> None:
    """Print a section header with decorative elements."""
    if not DISPLAY['fancy']:
        print(f"\n== {text} ==\n")
        return
    term_width, _ = shutil.get_terminal_size((80, 24))

    # Calculate padding to center the header
    total_length = min(term_width, max(40, len(text) + 10))
    padding = max(0, (term_width - total_length) // 2)
    inner_padding = max(0, (total_length - len(text) - 4) // 2)

    corners = "╭╮╰╯│─" if DISPLAY['unicode'] else "++++|-"
    top_border = padding * " " + corners[0] + corners[5] * (total_length - 2) + corners[1]
    bottom_border = padding * " " + corners[2] + corners[5] * (total_length - 2) + corners[3]
    text_line = (padding * " " + corners[4] + " " * inner_padding + text
                 + " " * (total_length - len(text) - inner_padding - 2) + corners[4])

    print()
    print(f"{Colors.YELLOW}{top_border}{Colors.RESET}")
    print(f"{Colors.YELLOW}{text_line}{Colors.RESET}")
    print(f"{Colors.YELLOW}{bottom_border}{Colors.RESET}")
    print()


def print_info_line(label: str, value: Any, color_value: str = Colors.RESET) -> None:
    """Print an information line with proper formatting."""
    if DISPLAY['fancy']:
        print(f"{Colors.BRIGHT_WHITE}{label}: {color_value}{value}{Colors.RESET}")
    else:
        print(f"{label}: {value}")


def print_list_item(item: str, indent: int = 2, color: str = Colors.BRIGHT_CYAN) -> None:
    """Print a list item with bullet point."""
    if DISPLAY['fancy']:
        bullet = "•" if DISPLAY['unicode'] else "-"
        print(f"{' ' * indent}{color}{bullet}{Colors.RESET} {item}")
    else:
        print(f"{' ' * indent}- {item}")


def show_version() -> None:
    """Display version information."""
    print_info_line("Plume Swarm version", __version__, Colors.BRIGHT_GREEN)
    print_info_line("Developed by", __author__, Colors.BRIGHT_CYAN)
    print_info_line("Project", __github__, Colors.BRIGHT_CYAN)


def _float_pair(text: str) -> Tuple[float, float]:
    try:
        low, high = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LOW,HIGH but got '{text}'")
    if high < low:
        raise argparse.ArgumentTypeError(f"range '{text}' is reversed")
    return low, high


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers but got '{text}'")


def parse_arguments(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    """Parse command line arguments for the application."""
    parser = argparse.ArgumentParser(
        prog='plume-swarm',
        description='Drone swarm plume search simulator and experiment harness',
        allow_abbrev=False
    )
    parser.add_argument('--config', type=str,
                        help='Path to configuration file (default: config/settings.yaml)')
    parser.add_argument('--verbose', action='store_true',
                        help='Enable verbose logging')
    parser.add_argument('--version', action='store_true',
                        help='Show version information and exit')
    parser.add_argument('--no-fancy', action='store_true',
                        help='Disable fancy terminal UI')
    parser.add_argument('--no-unicode', action='store_true',
                        help='Disable Unicode characters in terminal output')

    commands = parser.add_subparsers(dest='command')

    run = commands.add_parser('run', help='Run an experiment sweep')
    run.add_argument('--experiment', choices=['1', '2', '3', '4', 'all', 'custom'], default='1',
                     help='Standard experiment, all four, or the config file sweep (default: 1)')
    run.add_argument('--trials', type=int, help='Trials per cell (config default: experiment.trials)')
    run.add_argument('--seed', type=int, help='Base seed (config default: experiment.seed)')
    run.add_argument('--workers', type=int, help='Worker processes (config default: experiment.workers)')
    run.add_argument('--out', type=str, help='Output directory (config default: experiment.out)')
    run.add_argument('--budget', type=int, help='Tick budget per trial (config default: sim.tick_budget)')
    run.add_argument('--sizes', type=_int_list, help='Comma-separated swarm sizes overriding the preset')
    run.add_argument('--check', action='store_true', help='Evaluate the expected trends after the sweep')
    run.add_argument('--no-plots', action='store_true', help='Skip SVG plot emission')

    trial = commands.add_parser('trial', help='Run a single trial')
    trial.add_argument('--algo', choices=ALGORITHMS, default='locus', help='Search algorithm')
    trial.add_argument('--n', type=int, default=20, help='Swarm size (default: 20)')
    trial.add_argument('--plume', choices=PLUME_VARIANTS, default='smooth', help='Plume variant')
    trial.add_argument('--p-generic', type=float, default=0.0, help='Generic failure probability per tick')
    trial.add_argument('--p-inplume', type=float, default=0.0, help='In-plume failure coefficient')
    trial.add_argument('--seed', type=int, default=0, help='Trial seed (default: 0)')
    trial.add_argument('--budget', type=int, help='Tick budget (config default: sim.tick_budget)')
    trial.add_argument('--trace', type=str, help='Write a per-tick CSV trace to this file')
    trial.add_argument('--waypoints', type=str, help='Write the LoCUS waypoint CSV to this file')

    layout = commands.add_parser('layout', help='Dump the tree layout as CSV')
    layout.add_argument('--n', type=int, required=True, help='Number of slots')
    layout.add_argument('--rmin', type=float, help='Safety radius (config default: tree.r_min)')
    layout.add_argument('--rmax', type=float, help='Shell spacing (config default: tree.r_max)')
    layout.add_argument('--out', type=str, help='Output file (default: stdout)')

    plume = commands.add_parser('plume', help='Describe the plume or dump a raster as CSV')
    plume.add_argument('--raster', action='store_true', help='Dump (x, y, reading) rows')
    plume.add_argument('--variant', choices=PLUME_VARIANTS, default='smooth', help='Plume variant')
    plume.add_argument('--x-range', type=_float_pair, default=(-100.0, 100.0),
                       help='LOW,HIGH in meters around the peak (default: -100,100)')
    plume.add_argument('--y-range', type=_float_pair, default=(-50.0, 50.0),
                       help='LOW,HIGH in meters around the peak (default: -50,50)')
    plume.add_argument('--resolution', type=float, default=1.0, help='Grid step in meters (default: 1)')
    plume.add_argument('--out', type=str, help='Output file (default: stdout)')

    parser.set_defaults(_parser=parser)
    return parser.parse_args(argv)


def configure_logging(settings: Dict[str, Any], verbose: bool = False) -> None:
    """Apply the `logging` settings section to the package logger."""
    section = settings.get('logging') or {}
    level_name = 'DEBUG' if verbose else str(section.get('level', 'INFO')).upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        raise ConfigError(f"Unknown logging level '{level_name}'")
    logger.setLevel(level)

    log_file = section.get('file')
    if log_file and not any(isinstance(h, logging.FileHandler) for h in logger.handlers):
        try:
            os.makedirs(os.path.dirname(os.path.abspath(log_file)), exist_ok=True)
            handler = logging.FileHandler(log_file)
        except OSError as e:
            raise OutputError(log_file, e.strerror or str(e)) from e
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        logger.addHandler(handler)


def _open_output(path: Optional[str]):
    if path is None:
        return sys.stdout, False
    try:
        directory = os.path.dirname(os.path.abspath(path))
        os.makedirs(directory, exist_ok=True)
        return open(path, 'w', newline=''), True
    except OSError as e:
        raise OutputError(path, e.strerror or str(e)) from e


# ----------------------------------------------------------------------
# Subcommands

def cmd_run(args: argparse.Namespace, settings: Dict[str, Any]) -> int:
    section = experiment_settings(settings)
    trials = args.trials if args.trials is not None else section['trials']
    seed = args.seed if args.seed is not None else section['seed']
    workers = args.workers if args.workers is not None else section['workers']
    out_dir = args.out or section['out']
    budget = args.budget if args.budget is not None else int(settings.get('sim', {}).get('tick_budget', 1_000_000))
    dt = float(settings.get('sim', {}).get('dt', 0.06228))
    if trials < 1:
        raise ConfigError(f"trials must be at least 1, got {trials}")
    if seed < 0:
        raise ConfigError(f"seed must be non-negative, got {seed}")
    if budget < 1:
        raise ConfigError(f"budget must be positive, got {budget}")

    if args.experiment == 'custom':
        specs = [custom_spec(settings, trials=args.trials, seed=args.seed, sizes=args.sizes)]
    else:
        names = ['1', '2', '3', '4'] if args.experiment == 'all' else [args.experiment]
        specs = [preset(name, trials=trials, seed=seed, sizes=args.sizes) for name in names]

    total = sum(len(spec.cells()) * spec.trials for spec in specs)
    print_section_header(f"Experiment {args.experiment}")
    print_info_line("Cells", sum(len(spec.cells()) for spec in specs))
    print_info_line("Trials", total)
    print_info_line("Workers", workers)
    print_info_line("Output", out_dir)

    with SweepProgress(total, desc=f"Experiment {args.experiment}", enabled=DISPLAY['fancy'],
                       ascii=not DISPLAY['unicode']) as bar:
        rows = run_experiment(specs, settings, workers=workers, budget=budget,
                              progress=lambda row: bar.update(row.result.success))

    summary = summarize(rows, dt=dt)
    written = [
        write_results(rows, os.path.join(out_dir, 'results.csv')),
        write_summary(summary, os.path.join(out_dir, 'summary.csv')),
        write_run_info(os.path.join(out_dir, 'run_info.yaml'), specs, budget, dt),
    ]
    if not args.no_plots:
        written.extend(emit_plots(summary, out_dir))

    print_section_header("Experiment Complete")
    print_info_line("Successful trials", f"{sum(r.result.success for r in rows)}/{len(rows)}", Colors.BRIGHT_GREEN)
    for path in written:
        print_list_item(path)

    if args.check:
        print_section_header("Trend Checks")
        checks = check_trends(summary)
        if not checks:
            print_info_line("Checks", "no standard experiment in this run", Colors.BRIGHT_YELLOW)
        for check in checks:
            color = Colors.BRIGHT_GREEN if check.passed else Colors.BRIGHT_RED
            print_list_item(f"{'PASS' if check.passed else 'FAIL'} {check.name}: {check.detail}", color=color)
        failed = [c.name for c in checks if not c.passed]
        if failed:
            logger.warning(f"{len(failed)} trend checks did not hold: {', '.join(failed)}")
    return 0


def cmd_trial(args: argparse.Namespace, settings: Dict[str, Any]) -> int:
    if args.seed < 0:
        raise ConfigError(f"seed must be non-negative, got {args.seed}")
    config = trial_config(
        settings,
        algorithm=args.algo,
        n=args.n,
        plume_variant=args.plume,
        p_generic=args.p_generic,
        p_inplume=args.p_inplume,
        tick_budget=args.budget,
        record_waypoints=True if args.waypoints else None,
    )
    print_section_header(f"Trial {args.algo} N={args.n}")

    trace_stream = None
    trace = None
    if args.trace:
        trace_stream, _ = _open_output(args.trace)
        trace = TickTrace(trace_stream)

    tracker = TickTracker()
    style = SpinnerStyle.BRAILLE if DISPLAY['unicode'] else SpinnerStyle.LINE
    try:
        with Spinner(f"Simulating seed {args.seed}", status=tracker.__str__, style=style,
                     enabled=DISPLAY['fancy']) as spinner:
            result = run_trial(config, args.seed, trace=trace, progress=tracker.update)
            spinner.update_text(f"Finished at tick {result.ticks:,}")
    finally:
        if trace_stream is not None:
            trace_stream.close()

    minutes = config.dt / 60.0
    color = Colors.BRIGHT_GREEN if result.success else Colors.BRIGHT_YELLOW
    print_info_line("Outcome", result.reason, color)
    print_info_line("Ticks", f"{result.ticks:,} ({result.ticks * minutes:.1f} min)")
    if result.contact_tick is not None:
        print_info_line("Plume contact", f"tick {result.contact_tick:,} ({result.contact_tick * minutes:.1f} min)")
    if result.maxflux_tick is not None:
        print_info_line("Max flux", f"tick {result.maxflux_tick:,} ({result.maxflux_tick * minutes:.1f} min)")
    print_info_line("Survivors", f"{result.survivors}/{config.n}")
    print_info_line("Heal events", result.heal_events)
    print_info_line("Distance flown", f"{result.distance_m:.1f} m")

    if args.waypoints:
        stream, _ = _open_output(args.waypoints)
        with stream:
            write_waypoints(stream, result.waypoints)
        print_list_item(args.waypoints)
    if args.trace:
        print_list_item(args.trace)
    return 0


def cmd_layout(args: argparse.Namespace, settings: Dict[str, Any]) -> int:
    tree_settings = settings.get('tree') or {}
    params = TreeParams(
        r_min=args.rmin if args.rmin is not None else float(tree_settings.get('r_min', 3.0)),
        r_max=args.rmax if args.rmax is not None else float(tree_settings.get('r_max', 3.0)),
    )
    if args.n < 1:
        raise ConfigError(f"A swarm needs at least one drone, got {args.n}")
    tree = build_swarm(args.n, params)
    report = tree.link_report()
    logger.info(
        f"Layout of {args.n} slots on {int(report['levels'])} levels: min spacing {report['min_spacing']:.3f} m, "
        f"longest link {report['max_link']:.3f} m ({report['max_link_ratio']:.3f} r_max)"
    )

    stream, owned = _open_output(args.out)
    try:
        writer = csv.writer(stream, lineterminator='\n')
        writer.writerow(['slot', 'level', 'x', 'y', 'parent', 'heir'])
        for slot_id, level, x, y, parent, heir in tree.layout_rows():
            writer.writerow([slot_id, level, f"{x:.6f}", f"{y:.6f}",
                             '' if parent is None else parent, '' if heir is None else heir])
    finally:
        if owned:
            stream.close()
    return 0


def cmd_plume(args: argparse.Namespace, settings: Dict[str, Any]) -> int:
    plume_settings = dict(settings.get('plume') or {})
    plume_settings.pop('source_radius', None)
    try:
        params = PlumeParams(perturbed=args.variant == 'perturbed', **plume_settings)
    except TypeError as e:
        raise ConfigError(f"Invalid 'plume' settings: {e}") from e
    x_star, _ = peak_location(params)
    field = PlumeField(params, PlumePose(peak=(0.0, 0.0), source=(-x_star, 0.0)))

    if not args.raster:
        print_section_header("Plume")
        print_info_line("Variant", args.variant)
        print_info_line("Peak distance downwind of the stack", f"{x_star:.1f} m")
        print_info_line("Peak concentration", f"{field.normalization:.6e}")
        print_info_line("Reading at the peak", f"{field.reading((0.0, 0.0)):.6f}")
        return 0

    stream, owned = _open_output(args.out)
    try:
        writer = csv.writer(stream, lineterminator='\n')
        writer.writerow(['x', 'y', 'reading'])
        for x, y, value in field.raster(args.x_range, args.y_range, args.resolution):
            writer.writerow([f"{x:.6f}", f"{y:.6f}", f"{value:.6e}"])
    finally:
        if owned:
            stream.close()
    return 0


COMMANDS = {
    'run': cmd_run,
    'trial': cmd_trial,
    'layout': cmd_layout,
    'plume': cmd_plume,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Main entry point for the application.

    Returns:
        Exit code: 0 success, 1 unexpected error, 2 configuration error,
        3 output error
    """
    args = parse_arguments(argv)
    configure_display(fancy=not args.no_fancy, unicode=not args.no_unicode)

    if args.version:
        show_version()
        return 0
    if not args.command:
        args._parser.print_help()
        return 2

    try:
        config_path = args.config or ensure_user_config_exists()
        settings = load_settings(config_path)
        display_settings = settings.get('display') or {}
        configure_display(fancy=DISPLAY['fancy'] and bool(display_settings.get('fancy', True)),
                          unicode=DISPLAY['unicode'] and bool(display_settings.get('unicode', True)))
        configure_logging(settings, args.verbose)
        logger.debug(f"Using configuration {config_path}")
        return COMMANDS[args.command](args, settings)

    except KeyboardInterrupt:
        print_section_header("Stopped")
        print_info_line("Reason", "User interrupted (Ctrl+C)", Colors.BRIGHT_YELLOW)
        return 0
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return 2
    except (OutputError, OSError) as e:
        logger.error(f"Output error: {e}")
        return 3
    except Exception as e:
        print_section_header("Error")
        print_info_line("Error Type", type(e).__name__, Colors.BRIGHT_RED)
        print_info_line("Message", str(e), Colors.BRIGHT_RED)
        import traceback
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
