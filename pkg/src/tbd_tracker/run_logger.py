#!/usr/bin/env python3
"""
Run logger for debugging filter runs
Captures per-step filter diagnostics with timestamps and structured data
"""

import json
import logging
import time
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Any, TextIO

from .tbd_filter import FilterOutput

logger = logging.getLogger(__name__)


@dataclass
class LogEventData:
    """Structured data for logging events"""

    event_type: str
    timestamp: float
    relative_time: float
    data: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "event_type": self.event_type,
            "timestamp": self.timestamp,
            "relative_time": self.relative_time,
            "data": self.data,
        }


class RunLogger:
    """Structured diagnostics log of one Monte Carlo run"""

    def __init__(self, run_index: int, log_dir: str | Path = "logs/runs"):
        self.run_index = run_index
        self.log_dir = Path(log_dir)
        self.log_dir.mkdir(parents=True, exist_ok=True)

        stem = f"run_{run_index:04d}"
        self.log_file = self.log_dir / f"{stem}.json"
        self.readable_log = self.log_dir / f"{stem}.txt"
        self.summary_file = self.log_dir / f"{stem}_summary.txt"

        self.events: list[LogEventData] = []
        self.run_start_time = time.time()
        self.log_event("run_start", {"run_index": run_index})

    def log_event(self, event_type: str, data: dict[str, Any] | None = None) -> None:
        """Log a structured event with timestamp"""
        timestamp = time.time()
        event = LogEventData(
            event_type=event_type,
            timestamp=timestamp,
            relative_time=round(timestamp - self.run_start_time, 3),
            data=data or {},
        )
        self.events.append(event)
        self._write_readable(event)

    def log_configuration(self, scenario: str, seed_entropy: int, noise_sigma: float) -> None:
        self.log_event(
            "configuration",
            {"scenario": scenario, "seed_entropy": seed_entropy, "noise_sigma": noise_sigma},
        )

    def log_preprocessing(self, snr_before_db: float, snr_after_db: float, sigma: float) -> None:
        self.log_event(
            "preprocessing",
            {"snr_before_db": snr_before_db, "snr_after_db": snr_after_db, "sigma_estimate": sigma},
        )

    def log_step(self, output: FilterOutput) -> None:
        """Log one filter step"""
        estimate = output.state_estimate
        self.log_event(
            "filter_step",
            {
                "step": output.step,
                "presence_prob": output.presence_prob,
                "detected": output.detected,
                "estimate": None if estimate is None else [estimate.px, estimate.py],
                "ess": output.effective_sample_size,
                "m_birth": output.diagnostics.m_birth,
                "m_continuing": output.diagnostics.m_continuing,
                "log_birth_weight_sum": output.diagnostics.log_birth_weight_sum,
                "log_survival_weight_sum": output.diagnostics.log_survival_weight_sum,
                "birth_support_cells": output.diagnostics.birth_support_cells,
            },
        )

    def log_error(self, error_type: str, error_message: str) -> None:
        self.log_event("error", {"error_type": error_type, "error_message": error_message})

    def close_run(self, detections: int | None = None) -> None:
        """Close the log and write the JSON file and summary"""
        self.log_event(
            "run_end",
            {
                "detections": detections,
                "total_duration": time.time() - self.run_start_time,
                "total_events": len(self.events),
            },
        )
        self._write_json()
        self._write_summary()

    def _write_json(self) -> None:
        try:
            with open(self.log_file, "w") as f:
                json.dump(
                    {
                        "run_index": self.run_index,
                        "run_start_time": self.run_start_time,
                        "events": [event.to_dict() for event in self.events],
                    },
                    f,
                    indent=2,
                )
        except OSError as e:
            logger.error(f"Failed to write run log: {e}")

    def _write_readable(self, event: LogEventData) -> None:
        try:
            with open(self.readable_log, "a") as f:
                self._write_header(f, event)
                self._write_event_data(f, event)
                f.write("\n")
        except OSError as e:
            logger.error(f"Failed to write readable log: {e}")

    def _write_header(self, f: TextIO, event: LogEventData) -> None:
        timestamp = datetime.fromtimestamp(event.timestamp).isoformat()
        f.write(f"\n[{timestamp}] (+{event.relative_time}s) {event.event_type.upper()}\n")
        f.write("-" * 60 + "\n")

    def _write_event_data(self, f: TextIO, event: LogEventData) -> None:
        if event.event_type == "filter_step":
            self._write_step(f, event.data)
        else:
            for key, value in event.data.items():
                f.write(f"{key}: {value}\n")

    def _write_step(self, f: TextIO, data: dict[str, Any]) -> None:
        marker = "DETECTED" if data["detected"] else "-"
        f.write(f"Step {data['step']}: p={data['presence_prob']:.4f} {marker}\n")
        f.write(f"Mb={data['m_birth']:.4f} Mc={data['m_continuing']:.4f} ESS={data['ess']:.1f}\n")
        if data["estimate"] is not None:
            f.write(f"Estimate: ({data['estimate'][0]:.2f}, {data['estimate'][1]:.2f})\n")

    def _write_summary(self) -> None:
        try:
            with open(self.summary_file, "w") as f:
                f.write("RUN LOG SUMMARY\n")
                f.write(f"Run Index: {self.run_index}\n")
                f.write(f"Total Events: {len(self.events)}\n")
                f.write(f"Duration: {time.time() - self.run_start_time:.2f}s\n")
                f.write("Log Files:\n")
                f.write(f"  - JSON: {self.log_file}\n")
                f.write(f"  - Readable: {self.readable_log}\n")
                f.write("\nEvent Types:\n")
                event_counts: dict[str, int] = {}
                for event in self.events:
                    event_counts[event.event_type] = event_counts.get(event.event_type, 0) + 1
                for event_type, count in sorted(event_counts.items()):
                    f.write(f"  - {event_type}: {count}\n")
        except OSError as e:
            logger.error(f"Failed to write summary: {e}")

    def get_log_files(self) -> dict[str, str]:
        return {
            "json": str(self.log_file),
            "readable": str(self.readable_log),
            "summary": str(self.summary_file),
        }
