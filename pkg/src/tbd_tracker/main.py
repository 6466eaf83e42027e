#!/usr/bin/env python3
"""
Track-before-detect command-line tool

Subcommands:
- `simulate`: Write the frames and ground truth of a scenario
- `track`: Monte Carlo runs of simulate -> preprocess -> filter, with metrics
- `oracle-compare`: Presence probability of the particle filter vs the grid oracle
- `metrics`: Re-aggregate run CSVs from an earlier `track`
"""

import argparse
import csv
import logging
import sys
from collections.abc import Sequence
from functools import partial
from pathlib import Path
from typing import NoReturn

import numpy as np
from pydantic import ValidationError
from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from .eval_metrics import (
    MetricRow,
    load_run_directory,
    metric_rows,
    summarize,
    write_metrics_csv,
    write_run_csv,
)
from .exceptions import ConfigurationError, TbdError, UsageError
from .frames import save_frame
from .pipeline import RunOptions, TrackingResult, run_oracle_comparison, run_streams, run_tracking
from .run_manager import RunManager
from .scene_sim import GroundTruth, simulate_sequence
from .settings import (
    FilterConfig,
    RunManifest,
    ScenarioConfig,
    TrackerSettings,
    resolve_filter,
    resolve_scenario,
)
from .utils import derive_seed

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

TRUTH_COLUMNS = ["step", "present", "px", "vx", "py", "vy", "intensity"]
ORACLE_COLUMNS = ["step", "p_filter", "p_oracle", "abs_diff"]
ORACLE_SUMMARY_COLUMNS = ["runs", "mean_abs_diff", "max_abs_diff"]

logger = logging.getLogger("tbd-tracker")
console = Console()


def configure_logging(level: str) -> None:
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(name)s - %(message)s",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )


class ArgumentParser(argparse.ArgumentParser):
    """Reports bad arguments as usage errors instead of exiting"""

    def error(self, message: str) -> NoReturn:
        raise UsageError(f"{self.prog}: {message}")


def build_parser(settings: TrackerSettings) -> argparse.ArgumentParser:
    parser = ArgumentParser(
        prog="tbd-tracker", description="Track-before-detect particle filtering"
    )
    parser.add_argument("--log-level", default=settings.log_level)
    commands = parser.add_subparsers(dest="command", required=True)

    run_flags = ArgumentParser(add_help=False)
    run_flags.add_argument("--scenario", required=True, help="Scenario TOML path or preset name")
    run_flags.add_argument("--filter", help="Filter TOML path (default: the scenario's companion)")
    run_flags.add_argument("--seed", type=int, default=settings.master_seed)
    run_flags.add_argument("--runs", type=int, default=settings.run_count)
    run_flags.add_argument("--out", type=Path, default=settings.output_directory)
    run_flags.add_argument("--threads", type=int, default=settings.thread_count)
    run_flags.add_argument("--auto-sigma", action="store_true", help="Use the estimated noise sigma")

    commands.add_parser("simulate", parents=[run_flags], help="Write frames and ground truth")
    track = commands.add_parser("track", parents=[run_flags], help="Run the filter over many seeds")
    track.add_argument("--dump-frames", action="store_true")
    track.add_argument("--diagnostics", action="store_true", help="Write per-run step logs")
    track.add_argument("--oracle-compare", action="store_true", help="Also compare with the grid oracle")
    commands.add_parser("oracle-compare", parents=[run_flags], help="Filter vs grid oracle")
    metrics = commands.add_parser("metrics", help="Aggregate run CSVs of an earlier track")
    metrics.add_argument("--out", type=Path, default=settings.output_directory)
    return parser


def manifest_from_args(args: argparse.Namespace) -> RunManifest:
    return RunManifest(
        scenario=args.scenario,
        filter=args.filter,
        master_seed=args.seed,
        run_count=args.runs,
        output_dir=args.out,
        threads=args.threads,
        dump_frames=getattr(args, "dump_frames", False),
        auto_sigma=args.auto_sigma,
        oracle_compare=getattr(args, "oracle_compare", False) or args.command == "oracle-compare",
        diagnostics=getattr(args, "diagnostics", False),
    )


def load_configs(manifest: RunManifest) -> tuple[ScenarioConfig, FilterConfig]:
    scenario, source = resolve_scenario(manifest.scenario)
    return scenario, resolve_filter(manifest.filter, source)


def prepare_output(directory: Path) -> Path:
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise UsageError(f"Output directory {directory} is not writable: {e}") from e
    return directory


def write_truth_csv(path: Path, truth: GroundTruth) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(TRUTH_COLUMNS)
        for k in range(truth.frame_count):
            state = truth.state_at(k)
            if state is None:
                writer.writerow([k, 0, "", "", "", "", ""])
            else:
                values = (state.px, state.vx, state.py, state.vy, state.intensity)
                writer.writerow([k, 1, *(repr(float(v)) for v in values)])


def cmd_simulate(manifest: RunManifest) -> int:
    """Frames and ground truth of run 0 of the manifest's seed"""
    scenario, _ = load_configs(manifest)
    out = prepare_output(manifest.output_dir)
    sim_rng, _ = run_streams(derive_seed(manifest.master_seed, 0))
    sequence = simulate_sequence(scenario, sim_rng)
    for frame in sequence.frames:
        save_frame(out / "frames" / f"frame_{frame.step:04d}.pgm", frame)
    write_truth_csv(out / "truth.csv", sequence.truth)
    logger.info(
        f"Wrote {len(sequence.frames)} frames of {scenario.n}x{scenario.m} "
        f"for '{scenario.name}' to {out}"
    )
    return EXIT_OK


def _track_job(
    scenario: ScenarioConfig,
    config: FilterConfig,
    manifest: RunManifest,
    run_index: int,
    seed: np.random.SeedSequence,
) -> TrackingResult:
    options = RunOptions(
        auto_sigma=manifest.auto_sigma,
        dump_frames_dir=manifest.output_dir / "frames" if manifest.dump_frames else None,
        log_dir=manifest.output_dir / "logs" if manifest.diagnostics else None,
    )
    return run_tracking(scenario, config, run_index, manifest.master_seed, seed, options)


def cmd_track(manifest: RunManifest) -> int:
    scenario, config = load_configs(manifest)
    out = prepare_output(manifest.output_dir)
    manager: RunManager[TrackingResult] = RunManager(manifest.threads)
    job = partial(_track_job, scenario, config, manifest)
    results = manager.execute(job, manifest.run_count, manifest.master_seed)

    for result in results:
        write_run_csv(out / "runs" / f"run_{result.record.run_index:04d}.csv", result.record)
    rows = metric_rows([result.record for result in results])
    write_metrics_csv(out / "metrics.csv", rows)
    print_metrics(scenario.name, rows, manifest.run_count)
    if manifest.oracle_compare:
        return cmd_oracle_compare(manifest)
    return EXIT_OK


def write_oracle_files(
    out: Path, particle: np.ndarray, oracle: np.ndarray
) -> tuple[float | None, float | None]:
    """
    Per-step comparison plus a one-row summary of |p_filter - p_oracle|.

    Returns:
        Mean and max absolute difference, None for an empty sequence
    """
    mean_particle, mean_oracle = particle.mean(axis=0), oracle.mean(axis=0)
    diff = np.abs(particle - oracle).mean(axis=0)
    with open(out / "oracle_compare.csv", "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(ORACLE_COLUMNS)
        for k in range(diff.size):
            writer.writerow([k, repr(float(mean_particle[k])), repr(float(mean_oracle[k])), repr(float(diff[k]))])

    mean_diff = float(diff.mean()) if diff.size else None
    max_diff = float(diff.max()) if diff.size else None
    with open(out / "oracle_summary.csv", "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(ORACLE_SUMMARY_COLUMNS)
        writer.writerow(
            [len(particle), *("" if value is None else repr(value) for value in (mean_diff, max_diff))]
        )
    return mean_diff, max_diff


def cmd_oracle_compare(manifest: RunManifest) -> int:
    scenario, config = load_configs(manifest)
    out = prepare_output(manifest.output_dir)
    manager: RunManager[tuple[np.ndarray, np.ndarray]] = RunManager(manifest.threads)
    job = partial(_oracle_job, scenario, config, manifest.auto_sigma)
    pairs = manager.execute(job, manifest.run_count, manifest.master_seed)

    particle = np.array([p for p, _ in pairs]).reshape(len(pairs), scenario.frame_count)
    oracle = np.array([o for _, o in pairs]).reshape(len(pairs), scenario.frame_count)
    mean_diff, max_diff = write_oracle_files(out, particle, oracle)

    table = Table(title=f"Filter vs oracle: {scenario.name}")
    table.add_column("runs")
    table.add_column("mean |dp|")
    table.add_column("max |dp|")
    table.add_row(
        str(len(pairs)),
        *("-" if value is None else f"{value:.4f}" for value in (mean_diff, max_diff)),
    )
    console.print(table)
    return EXIT_OK


def _oracle_job(
    scenario: ScenarioConfig, config: FilterConfig, auto_sigma: bool, _: int, seed: np.random.SeedSequence
) -> tuple[np.ndarray, np.ndarray]:
    return run_oracle_comparison(scenario, config, seed, auto_sigma)


def cmd_metrics(out_dir: Path) -> int:
    records = load_run_directory(out_dir / "runs")
    rows = metric_rows(records)
    write_metrics_csv(out_dir / "metrics.csv", rows)
    print_metrics(records[0].scenario_id, rows, len(records))
    return EXIT_OK


def print_metrics(scenario_name: str, rows: Sequence[MetricRow], run_count: int) -> None:
    summary = summarize(rows)
    table = Table(title=f"{scenario_name}: {run_count} runs")
    table.add_column("detection prob (present)")
    table.add_column("false alarm rate")
    table.add_column("mean RMSE")
    table.add_row(*(f"{summary[key]:.3f}" for key in ("detect_prob_present", "false_alarm_rate", "mean_rmse")))
    console.print(table)


def dispatch(args: argparse.Namespace) -> int:
    if args.command == "metrics":
        return cmd_metrics(args.out)
    manifest = manifest_from_args(args)
    if args.command == "simulate":
        return cmd_simulate(manifest)
    if args.command == "track":
        return cmd_track(manifest)
    return cmd_oracle_compare(manifest)


def main(argv: Sequence[str] | None = None) -> int:
    """Entry point; returns the process exit code"""
    try:
        settings = TrackerSettings()
    except ValidationError as e:
        print(f"Invalid tbd-tracker.toml: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        args = build_parser(settings).parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_USAGE
    configure_logging(args.log_level)
    try:
        return dispatch(args)
    except (ValidationError, ConfigurationError, UsageError) as e:
        logger.error(f"{e}")
        logger.debug("Traceback", exc_info=True)
        return EXIT_USAGE
    except (TbdError, OSError) as e:
        logger.error(f"{e}")
        logger.debug("Traceback", exc_info=True)
        return EXIT_RUNTIME


def main_sync() -> None:
    """Synchronous entry point for console scripts"""
    sys.exit(main())


if __name__ == "__main__":
    main_sync()
