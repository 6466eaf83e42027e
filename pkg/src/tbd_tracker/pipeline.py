"""
Per-run work: simulate, preprocess, filter and optionally run the grid oracle
"""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .eval_metrics import RunRecord
from .exceptions import TbdError
from .frames import Frame, save_frame
from .grid_oracle import GridModel, oracle_presence_series
from .models import SensorModel
from .preprocess import PreprocessResult, Preprocessor, Psf
from .run_logger import RunLogger
from .scene_sim import SimulatedSequence, simulate_sequence, target_kernel
from .settings import FilterConfig, ScenarioConfig
from .tbd_filter import FilterOutput, FilterParameters, TbdParticleFilter

logger = logging.getLogger(__name__)


@dataclass
class RunOptions:
    auto_sigma: bool = False
    dump_frames_dir: Path | None = None
    log_dir: Path | None = None


@dataclass(eq=False)
class TrackingResult:
    record: RunRecord
    outputs: list[FilterOutput]
    frames: list[Frame]


def run_streams(seed: np.random.SeedSequence) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent simulation and filter generators of one run"""
    sim_seed, filter_seed = seed.spawn(2)
    return np.random.default_rng(sim_seed), np.random.default_rng(filter_seed)


def build_psf(scenario: ScenarioConfig, config: FilterConfig) -> Psf | None:
    """PSF used for inverse filtering, or None when frames are used as-is"""
    mode = config.preprocess.inverse_filter
    if mode == "off" or (mode == "auto" and scenario.target.kind == "point"):
        return None
    kernel = (
        np.asarray(config.sensor.kernel, dtype=np.float64)
        if config.sensor.kernel is not None
        else target_kernel(scenario)
    )
    return Psf(kernel=kernel, epsilon=config.preprocess.epsilon)


def build_filter_sensor(
    scenario: ScenarioConfig,
    config: FilterConfig,
    psf: Psf | None,
    noise_sigma: float | None = None,
) -> SensorModel:
    """
    Sensor model the filter assumes for preprocessed frames.

    Inverse-filtered frames are treated as point-target frames whose
    intensity and noise level are scaled by the restoration filter. Explicit
    values in the filter file, then an estimated sigma, take precedence.
    """
    shape = (scenario.n, scenario.m)
    peak_gain = psf.peak_gain(shape) if psf is not None else 1.0
    noise_gain = psf.noise_gain(shape) if psf is not None else 1.0
    if psf is not None:
        spread = np.ones((1, 1))
    elif config.sensor.kernel is not None:
        spread = np.asarray(config.sensor.kernel, dtype=np.float64)
    else:
        spread = target_kernel(scenario)
    if config.sensor.noise_sigma is not None:
        sigma = config.sensor.noise_sigma
    elif noise_sigma is not None:
        sigma = noise_sigma
    else:
        sigma = scenario.noise_sigma * noise_gain
    if config.sensor.target_intensity is not None:
        intensity = config.sensor.target_intensity
    else:
        intensity = scenario.target_mean_intensity * peak_gain
    return SensorModel(
        n=scenario.n,
        m=scenario.m,
        noise_sigma=sigma,
        cell_dx=scenario.cell_dx,
        cell_dy=scenario.cell_dy,
        nominal_intensity=intensity,
        spread=spread,
    )


def prepare_frames(
    scenario: ScenarioConfig,
    config: FilterConfig,
    sequence: SimulatedSequence,
    auto_sigma: bool,
) -> tuple[PreprocessResult, SensorModel]:
    """Preprocess a simulated sequence and derive the filter's sensor model"""
    psf = build_psf(scenario, config)
    preprocessor = Preprocessor(config.preprocess, psf, scenario.target_mean_intensity)
    result = preprocessor.process_sequence(sequence.frames)
    estimated = result.noise_sigma if auto_sigma and result.frames else None
    return result, build_filter_sensor(scenario, config, psf, estimated)


def dump_frames(directory: Path, frames: list[Frame]) -> None:
    for frame in frames:
        save_frame(directory / f"frame_{frame.step:04d}.pgm", frame)


def _track_sequence(
    scenario: ScenarioConfig,
    config: FilterConfig,
    sequence: SimulatedSequence,
    filter_rng: np.random.Generator,
    master_seed: int,
    options: RunOptions,
    run_log: RunLogger | None,
) -> tuple[list[FilterOutput], list[Frame]]:
    prepared, sensor = prepare_frames(scenario, config, sequence, options.auto_sigma)
    if run_log is not None:
        run_log.log_configuration(scenario.name, master_seed, sensor.noise_sigma)
        if prepared.frames:
            run_log.log_preprocessing(
                prepared.snr_before_db, prepared.snr_after_db, prepared.noise_sigma
            )
    tracker = TbdParticleFilter(FilterParameters.from_config(config, sensor))
    outputs = tracker.run(prepared.frames, filter_rng)
    if run_log is not None:
        for output in outputs:
            run_log.log_step(output)
    return outputs, prepared.frames


def run_tracking(
    scenario: ScenarioConfig,
    config: FilterConfig,
    run_index: int,
    master_seed: int,
    seed: np.random.SeedSequence,
    options: RunOptions,
) -> TrackingResult:
    """
    Simulate, preprocess and filter one Monte Carlo run.

    With a log directory set, a failing run still leaves its log behind,
    ending in an error event.
    """
    sim_rng, filter_rng = run_streams(seed)
    sequence = simulate_sequence(scenario, sim_rng)
    if options.dump_frames_dir is not None:
        dump_frames(options.dump_frames_dir / f"run_{run_index:04d}", sequence.frames)

    run_log = RunLogger(run_index, options.log_dir) if options.log_dir is not None else None
    try:
        outputs, frames = _track_sequence(
            scenario, config, sequence, filter_rng, master_seed, options, run_log
        )
    except TbdError as e:
        if run_log is not None:
            run_log.log_error(type(e).__name__, str(e))
            run_log.close_run()
        raise
    if run_log is not None:
        run_log.close_run(detections=sum(output.detected for output in outputs))

    record = RunRecord.from_outputs(scenario.name, master_seed, run_index, outputs, sequence.truth)
    return TrackingResult(record=record, outputs=outputs, frames=frames)


def build_grid_model(config: FilterConfig, sensor: SensorModel) -> GridModel:
    params = FilterParameters.from_config(config, sensor)
    return GridModel(
        sensor=sensor,
        existence=params.existence,
        mode_set=params.mode_set,
        velocity_bins=np.asarray(config.oracle.velocity_bins),
        max_cells=config.oracle.max_cells,
    )


def run_oracle_comparison(
    scenario: ScenarioConfig,
    config: FilterConfig,
    seed: np.random.SeedSequence,
    auto_sigma: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Presence series of the particle filter and of the grid oracle on the same frames"""
    sim_rng, filter_rng = run_streams(seed)
    sequence = simulate_sequence(scenario, sim_rng)
    prepared, sensor = prepare_frames(scenario, config, sequence, auto_sigma)
    model = build_grid_model(config, sensor)
    tracker = TbdParticleFilter(FilterParameters.from_config(config, sensor))
    particle = np.array([output.presence_prob for output in tracker.run(prepared.frames, filter_rng)])
    oracle = np.array(oracle_presence_series(prepared.frames, model))
    return particle, oracle
