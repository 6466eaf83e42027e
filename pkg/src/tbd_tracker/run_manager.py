import logging
import threading
import time
from collections.abc import Callable
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Generic, TypeVar

import numpy as np

from .exceptions import UsageError
from .utils import derive_seed

logger = logging.getLogger(__name__)

T = TypeVar("T")

RunJob = Callable[[int, np.random.SeedSequence], T]


class RunState(Enum):
    PENDING = "pending"
    RUNNING = "running"
    FINISHED = "finished"
    FAILED = "failed"


@dataclass
class RunMetadata:
    run_index: int
    master_seed: int
    state: RunState
    started_at: float | None = None
    finished_at: float | None = None
    error: str | None = None

    @property
    def duration(self) -> float | None:
        if self.started_at is None or self.finished_at is None:
            return None
        return self.finished_at - self.started_at


class RunManager(Generic[T]):
    """Executes Monte Carlo runs on a worker pool with lifecycle tracking"""

    def __init__(self, max_workers: int = 1):
        if max_workers < 1:
            raise UsageError(f"max_workers must be >= 1, got {max_workers}")
        self.max_workers = max_workers
        self.run_metadata: dict[int, RunMetadata] = {}
        self._lock = threading.Lock()
        logger.info(f"RunManager initialized with max_workers={max_workers}")

    def execute(self, job: RunJob[T], run_count: int, master_seed: int) -> list[T]:
        """
        Run `job` once per run index and return results ordered by index.

        Each run receives its own seed sequence derived from
        (master_seed, run_index), so results do not depend on scheduling.
        """
        self._register_runs(run_count, master_seed)
        with ThreadPoolExecutor(max_workers=self.max_workers) as pool:
            futures = [
                pool.submit(self._run_one, job, index, master_seed)
                for index in range(run_count)
            ]
        return self._collect(futures)

    def _register_runs(self, run_count: int, master_seed: int) -> None:
        with self._lock:
            self.run_metadata = {
                index: RunMetadata(index, master_seed, RunState.PENDING)
                for index in range(run_count)
            }

    def _run_one(self, job: RunJob[T], run_index: int, master_seed: int) -> T:
        self._mark(run_index, RunState.RUNNING)
        try:
            result = job(run_index, derive_seed(master_seed, run_index))
        except Exception as e:
            self._mark(run_index, RunState.FAILED, error=str(e))
            logger.error(f"Run {run_index} failed: {e}")
            raise
        self._mark(run_index, RunState.FINISHED)
        logger.debug(f"Run {run_index} finished")
        return result

    def _mark(self, run_index: int, state: RunState, error: str | None = None) -> None:
        now = time.time()
        with self._lock:
            metadata = self.run_metadata[run_index]
            metadata.state = state
            if state == RunState.RUNNING:
                metadata.started_at = now
            else:
                metadata.finished_at = now
            metadata.error = error

    def _collect(self, futures: list[Future[T]]) -> list[T]:
        """Results in run order; the first failure by index is re-raised"""
        failures = [f for f in futures if f.exception() is not None]
        if failures:
            raise failures[0].exception()  # type: ignore[misc]
        return [f.result() for f in futures]

    def list_runs(self, state: RunState | None = None) -> list[RunMetadata]:
        with self._lock:
            runs = list(self.run_metadata.values())
        return [run for run in runs if state is None or run.state == state]
