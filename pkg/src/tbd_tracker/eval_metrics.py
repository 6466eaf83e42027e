"""
Monte Carlo figures of merit: detection probability and RMSE over time

Records and curves are exchanged as CSV files with a header row. Floats
are written with repr so every file parses back to the same values.
"""

import csv
import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import TextIO

import numpy as np

from .exceptions import FrameIOError, UsageError
from .scene_sim import GroundTruth
from .tbd_filter import FilterOutput

logger = logging.getLogger(__name__)

RUN_COLUMNS = [
    "scenario",
    "master_seed",
    "run_index",
    "step",
    "presence_prob",
    "detected",
    "est_px",
    "est_py",
    "truth_present",
    "truth_px",
    "truth_py",
]
METRIC_COLUMNS = ["step", "truth_present", "detect_prob", "rmse", "n_detected"]


@dataclass(frozen=True)
class StepRecord:
    step: int
    presence_prob: float
    detected: bool
    estimate: tuple[float, float] | None
    truth_present: bool
    truth: tuple[float, float] | None


@dataclass
class RunRecord:
    """Everything one Monte Carlo run produced, step by step"""

    scenario_id: str
    master_seed: int
    run_index: int
    steps: list[StepRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.steps)

    @classmethod
    def from_outputs(
        cls,
        scenario_id: str,
        master_seed: int,
        run_index: int,
        outputs: Sequence[FilterOutput],
        truth: GroundTruth,
    ) -> "RunRecord":
        if len(outputs) != truth.frame_count:
            raise UsageError(
                f"{len(outputs)} filter outputs for {truth.frame_count} truth steps"
            )
        steps = []
        for k, output in enumerate(outputs):
            estimate = output.state_estimate
            actual = truth.state_at(k)
            steps.append(
                StepRecord(
                    step=k,
                    presence_prob=output.presence_prob,
                    detected=output.detected,
                    estimate=None if estimate is None else estimate.position,
                    truth_present=bool(truth.present[k]),
                    truth=None if actual is None else actual.position,
                )
            )
        return cls(scenario_id, master_seed, run_index, steps)


def _check_runs(runs: Sequence[RunRecord]) -> int:
    if not runs:
        raise UsageError("At least one run is required")
    scenarios = {run.scenario_id for run in runs}
    if len(scenarios) != 1:
        raise UsageError(f"Runs mix scenarios: {sorted(scenarios)}")
    lengths = {len(run) for run in runs}
    if len(lengths) != 1:
        raise UsageError(f"Runs differ in length: {sorted(lengths)}")
    return lengths.pop()


def detection_probability_curve(runs: Sequence[RunRecord]) -> np.ndarray:
    """Fraction of runs declaring a detection at each step"""
    length = _check_runs(runs)
    detections = np.array([[s.detected for s in run.steps] for run in runs], dtype=float)
    return detections.mean(axis=0) if length else np.zeros(0)


def rmse_curve(runs: Sequence[RunRecord]) -> tuple[np.ndarray, np.ndarray]:
    """
    Position RMSE over the runs that detected, at steps where the target exists.

    Returns:
        RMSE per step (NaN where undefined) and the number of contributing runs
    """
    length = _check_runs(runs)
    rmse = np.full(length, np.nan)
    contributors = np.zeros(length, dtype=int)
    for k in range(length):
        errors = [
            (s.estimate[0] - s.truth[0]) ** 2 + (s.estimate[1] - s.truth[1]) ** 2
            for s in (run.steps[k] for run in runs)
            if s.detected and s.truth is not None and s.estimate is not None
        ]
        contributors[k] = len(errors)
        if errors:
            rmse[k] = math.sqrt(math.fsum(errors) / len(errors))
    return rmse, contributors


@dataclass(frozen=True)
class MetricRow:
    step: int
    truth_present: bool
    detect_prob: float
    rmse: float | None
    n_detected: int


def metric_rows(runs: Sequence[RunRecord]) -> list[MetricRow]:
    detect = detection_probability_curve(runs)
    rmse, contributors = rmse_curve(runs)
    reference = runs[0].steps
    return [
        MetricRow(
            step=reference[k].step,
            truth_present=reference[k].truth_present,
            detect_prob=float(detect[k]),
            rmse=None if math.isnan(rmse[k]) else float(rmse[k]),
            n_detected=int(contributors[k]),
        )
        for k in range(len(reference))
    ]


def _fmt(value: float | None) -> str:
    return "" if value is None else repr(float(value))


def _parse_float(text: str) -> float | None:
    return None if text == "" else float(text)


def _parse_bool(text: str) -> bool:
    return text in ("1", "true", "True")


def _open_for_write(path: Path) -> TextIO:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return open(path, "w", newline="")
    except OSError as e:
        raise FrameIOError(path, str(e)) from e


def write_run_csv(path: str | Path, record: RunRecord) -> None:
    csv_path = Path(path)
    with _open_for_write(csv_path) as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(RUN_COLUMNS)
        for s in record.steps:
            est = s.estimate or (None, None)
            truth = s.truth or (None, None)
            writer.writerow(
                [
                    record.scenario_id,
                    record.master_seed,
                    record.run_index,
                    s.step,
                    _fmt(s.presence_prob),
                    int(s.detected),
                    _fmt(est[0]),
                    _fmt(est[1]),
                    int(s.truth_present),
                    _fmt(truth[0]),
                    _fmt(truth[1]),
                ]
            )


def _read_rows(path: Path, columns: list[str]) -> list[dict[str, str]]:
    try:
        with open(path, newline="") as f:
            reader = csv.DictReader(f)
            if reader.fieldnames != columns:
                raise FrameIOError(path, f"unexpected header {reader.fieldnames}")
            return list(reader)
    except FileNotFoundError as e:
        raise FrameIOError(path, "file not found") from e


def _pair(x: str, y: str) -> tuple[float, float] | None:
    px, py = _parse_float(x), _parse_float(y)
    return None if px is None or py is None else (px, py)


def read_run_csv(path: str | Path) -> RunRecord:
    csv_path = Path(path)
    rows = _read_rows(csv_path, RUN_COLUMNS)
    if not rows:
        # header-only file of a zero-length run
        return RunRecord(scenario_id="", master_seed=0, run_index=0)
    first = rows[0]
    record = RunRecord(first["scenario"], int(first["master_seed"]), int(first["run_index"]))
    for row in rows:
        record.steps.append(
            StepRecord(
                step=int(row["step"]),
                presence_prob=float(row["presence_prob"]),
                detected=_parse_bool(row["detected"]),
                estimate=_pair(row["est_px"], row["est_py"]),
                truth_present=_parse_bool(row["truth_present"]),
                truth=_pair(row["truth_px"], row["truth_py"]),
            )
        )
    return record


def write_metrics_csv(path: str | Path, rows: Sequence[MetricRow]) -> None:
    csv_path = Path(path)
    with _open_for_write(csv_path) as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(METRIC_COLUMNS)
        for row in rows:
            writer.writerow(
                [row.step, int(row.truth_present), _fmt(row.detect_prob), _fmt(row.rmse), row.n_detected]
            )


def read_metrics_csv(path: str | Path) -> list[MetricRow]:
    return [
        MetricRow(
            step=int(row["step"]),
            truth_present=_parse_bool(row["truth_present"]),
            detect_prob=float(row["detect_prob"]),
            rmse=_parse_float(row["rmse"]),
            n_detected=int(row["n_detected"]),
        )
        for row in _read_rows(Path(path), METRIC_COLUMNS)
    ]


def load_run_directory(directory: str | Path) -> list[RunRecord]:
    """Every run CSV of a directory, ordered by run index"""
    paths = sorted(Path(directory).glob("run_*.csv"))
    if not paths:
        raise UsageError(f"No run_*.csv files in {directory}")
    records = [read_run_csv(path) for path in paths]
    return sorted(records, key=lambda record: record.run_index)


def summarize(rows: Sequence[MetricRow]) -> dict[str, float]:
    """Headline numbers for the console summary"""
    present = [row for row in rows if row.truth_present]
    absent = [row for row in rows if not row.truth_present]
    errors = [row.rmse for row in present if row.rmse is not None]
    return {
        "detect_prob_present": float(np.mean([r.detect_prob for r in present])) if present else math.nan,
        "false_alarm_rate": float(np.mean([r.detect_prob for r in absent])) if absent else math.nan,
        "mean_rmse": float(np.mean(errors)) if errors else math.nan,
    }
