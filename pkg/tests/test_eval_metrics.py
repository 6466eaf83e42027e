"""Tests for Monte Carlo metrics and their CSV files"""

import math
from pathlib import Path

import numpy as np
import pytest

from src.tbd_tracker.eval_metrics import (
    METRIC_COLUMNS,
    RUN_COLUMNS,
    RunRecord,
    StepRecord,
    detection_probability_curve,
    load_run_directory,
    metric_rows,
    read_metrics_csv,
    read_run_csv,
    rmse_curve,
    summarize,
    write_metrics_csv,
    write_run_csv,
)
from src.tbd_tracker.exceptions import FrameIOError, UsageError
from src.tbd_tracker.models import TargetState
from src.tbd_tracker.scene_sim import GroundTruth
from src.tbd_tracker.tbd_filter import FilterOutput, StepDiagnostics

SCENARIO = "unit"
DIAGNOSTICS = StepDiagnostics(0.5, 0.5, 0.0, 0.0, 1)


def _step(k: int, detected: bool, estimate: tuple[float, float] | None, truth: tuple[float, float] | None) -> StepRecord:
    return StepRecord(
        step=k,
        presence_prob=0.9 if detected else 0.1,
        detected=detected,
        estimate=estimate,
        truth_present=truth is not None,
        truth=truth,
    )


def _run(index: int, steps: list[StepRecord], scenario: str = SCENARIO) -> RunRecord:
    return RunRecord(scenario_id=scenario, master_seed=7, run_index=index, steps=steps)


class TestCurves:
    """Test detection probability and RMSE curves"""

    def test_detection_fraction(self) -> None:
        runs = [
            _run(0, [_step(0, True, (0.0, 0.0), None), _step(1, False, None, (1.0, 1.0))]),
            _run(1, [_step(0, False, None, None), _step(1, True, (1.0, 1.0), (1.0, 1.0))]),
            _run(2, [_step(0, False, None, None), _step(1, True, (1.0, 1.0), (1.0, 1.0))]),
            _run(3, [_step(0, False, None, None), _step(1, True, (1.0, 1.0), (1.0, 1.0))]),
        ]
        np.testing.assert_allclose(detection_probability_curve(runs), [0.25, 0.75])

    def test_rmse_over_detecting_runs(self) -> None:
        runs = [
            _run(0, [_step(0, True, (3.0, 0.0), (0.0, 0.0))]),
            _run(1, [_step(0, True, (0.0, 4.0), (0.0, 0.0))]),
            _run(2, [_step(0, False, None, (0.0, 0.0))]),
        ]
        rmse, contributors = rmse_curve(runs)
        assert rmse[0] == pytest.approx(math.sqrt(12.5))
        assert contributors.tolist() == [2]

    def test_rmse_undefined_without_detections(self) -> None:
        rmse, contributors = rmse_curve([_run(0, [_step(0, False, None, (1.0, 1.0))])])
        assert math.isnan(rmse[0])
        assert contributors.tolist() == [0]

    def test_false_alarm_excluded_from_rmse(self) -> None:
        rmse, contributors = rmse_curve([_run(0, [_step(0, True, (1.0, 1.0), None)])])
        assert math.isnan(rmse[0])
        assert contributors.tolist() == [0]

    def test_run_order_does_not_matter(self) -> None:
        runs = [
            _run(i, [_step(0, True, (float(i), 0.0), (0.0, 0.0)), _step(1, i % 2 == 0, (0.0, 0.0), (0.0, 0.0))])
            for i in range(5)
        ]
        forward, _ = rmse_curve(runs)
        backward, _ = rmse_curve(runs[::-1])
        np.testing.assert_array_equal(forward, backward)
        np.testing.assert_array_equal(
            detection_probability_curve(runs), detection_probability_curve(runs[::-1])
        )

    def test_mixed_scenarios_rejected(self) -> None:
        runs = [_run(0, [], "a"), _run(1, [], "b")]
        with pytest.raises(UsageError, match="mix scenarios"):
            detection_probability_curve(runs)

    def test_unequal_lengths_rejected(self) -> None:
        runs = [_run(0, [_step(0, False, None, None)]), _run(1, [])]
        with pytest.raises(UsageError, match="differ in length"):
            rmse_curve(runs)

    def test_no_runs(self) -> None:
        with pytest.raises(UsageError):
            detection_probability_curve([])

    def test_zero_length_runs(self) -> None:
        assert detection_probability_curve([_run(0, [])]).size == 0
        assert metric_rows([_run(0, [])]) == []


class TestRunRecord:
    def test_from_outputs(self) -> None:
        truth = GroundTruth(present=[False, True], states=[None, TargetState(2.0, 0.0, 3.0, 0.0)])
        outputs = [
            FilterOutput(0, 0.1, False, None, 10.0, DIAGNOSTICS),
            FilterOutput(1, 0.8, True, TargetState(2.5, 0.0, 3.0, 0.0), 10.0, DIAGNOSTICS),
        ]
        record = RunRecord.from_outputs(SCENARIO, 7, 3, outputs, truth)
        assert record.steps[1].estimate == (2.5, 3.0)
        assert record.steps[1].truth == (2.0, 3.0)
        assert record.steps[0].truth is None

    def test_length_mismatch(self) -> None:
        truth = GroundTruth(present=[False], states=[None])
        with pytest.raises(UsageError):
            RunRecord.from_outputs(SCENARIO, 0, 0, [], truth)


class TestCsvFiles:
    """Test run and metric CSV files"""

    def test_run_file_layout(self, tmp_path: Path) -> None:
        record = _run(2, [_step(0, False, None, None), _step(1, True, (1.25, 2.5), (1.0, 2.0))])
        write_run_csv(tmp_path / "run_0002.csv", record)
        lines = (tmp_path / "run_0002.csv").read_text().splitlines()
        assert lines[0] == ",".join(RUN_COLUMNS)
        assert lines[1] == "unit,7,2,0,0.1,0,,,0,,"
        assert lines[2] == "unit,7,2,1,0.9,1,1.25,2.5,1,1.0,2.0"

    def test_run_file_reads_back(self, tmp_path: Path) -> None:
        record = _run(1, [_step(0, True, (1 / 3, 2 / 3), (0.1, 0.2)), _step(1, False, None, None)])
        write_run_csv(tmp_path / "run.csv", record)
        assert read_run_csv(tmp_path / "run.csv") == record

    def test_metrics_file(self, tmp_path: Path) -> None:
        runs = [
            _run(0, [_step(0, True, (3.0, 0.0), (0.0, 0.0)), _step(1, False, None, None)]),
            _run(1, [_step(0, False, None, (0.0, 0.0)), _step(1, False, None, None)]),
        ]
        rows = metric_rows(runs)
        write_metrics_csv(tmp_path / "metrics.csv", rows)
        text = (tmp_path / "metrics.csv").read_text().splitlines()
        assert text[0] == ",".join(METRIC_COLUMNS)
        assert text[1] == "0,1,0.5,3.0,1"
        assert text[2] == "1,0,0.0,,0"
        assert read_metrics_csv(tmp_path / "metrics.csv") == rows

    def test_unexpected_header(self, tmp_path: Path) -> None:
        path = tmp_path / "run_0000.csv"
        path.write_text("step,value\n0,1\n")
        with pytest.raises(FrameIOError, match="unexpected header"):
            read_run_csv(path)

    def test_load_directory_sorted_by_index(self, tmp_path: Path) -> None:
        for index in (3, 0, 1):
            write_run_csv(tmp_path / f"run_{index:04d}.csv", _run(index, [_step(0, False, None, None)]))
        assert [record.run_index for record in load_run_directory(tmp_path)] == [0, 1, 3]

    def test_empty_directory(self, tmp_path: Path) -> None:
        with pytest.raises(UsageError, match="No run"):
            load_run_directory(tmp_path)


class TestSummary:
    def test_headline_numbers(self) -> None:
        runs = [
            _run(0, [_step(0, True, None, None), _step(1, True, (3.0, 4.0), (0.0, 0.0))]),
            _run(1, [_step(0, False, None, None), _step(1, True, (0.0, 0.0), (0.0, 0.0))]),
        ]
        summary = summarize(metric_rows(runs))
        assert summary["false_alarm_rate"] == 0.5  # noqa: PLR2004
        assert summary["detect_prob_present"] == 1.0
        assert summary["mean_rmse"] == pytest.approx(math.sqrt(12.5))
