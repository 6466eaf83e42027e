"""
Ground-truth trajectories and synthetic frame sequences
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .exceptions import ConfigurationError, UsageError
from .frames import Frame, load_background
from .models import (
    MotionMode,
    SensorModel,
    TargetState,
    default_extended_kernel,
    propagate,
    rotate_kernel,
)
from .settings import ScenarioConfig, TrajectorySettings

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class GroundTruth:
    """Existence flag and target state for every step"""

    present: np.ndarray
    states: list[TargetState | None]

    def __post_init__(self) -> None:
        self.present = np.asarray(self.present, dtype=bool)
        if len(self.states) != len(self.present):
            raise UsageError("Existence flags and states must have equal length")
        for k, (flag, state) in enumerate(zip(self.present, self.states, strict=True)):
            if flag != (state is not None):
                raise UsageError(f"Truth at step {k} has a state iff the target exists")

    @property
    def frame_count(self) -> int:
        return len(self.present)

    def state_at(self, step: int) -> TargetState | None:
        return self.states[step]


@dataclass(eq=False)
class SimulatedSequence:
    truth: GroundTruth
    frames: list[Frame]
    background: np.ndarray


def scenario_sensor(config: ScenarioConfig) -> SensorModel:
    """Sensor geometry and noise implied by a scenario"""
    return SensorModel(
        n=config.n,
        m=config.m,
        noise_sigma=config.noise_sigma,
        cell_dx=config.cell_dx,
        cell_dy=config.cell_dy,
        nominal_intensity=config.target_mean_intensity,
        spread=target_kernel(config),
    )


def target_kernel(config: ScenarioConfig, step: int | None = None) -> np.ndarray:
    """Spread kernel of the target, rotated for the given step if configured"""
    if config.target.kind == "point":
        return np.ones((1, 1))
    kernel = (
        np.asarray(config.target.kernel, dtype=np.float64)
        if config.target.kernel is not None
        else default_extended_kernel()
    )
    if step is None or config.target.rotation_per_step == 0.0:
        return kernel
    return rotate_kernel(kernel, config.target.rotation_per_step * (step - config.birth_step))


def _segment_schedule(trajectory: TrajectorySettings) -> list[tuple[int, MotionMode]]:
    """Offset (from birth) at which each segment starts, with its motion mode"""
    schedule = []
    offset = 0
    for segment in trajectory.segments:
        mode = MotionMode(
            mode_id=len(schedule),
            noise_intensity=trajectory.process_noise,
            turn_rate=segment.turn_rate,
        )
        schedule.append((offset, mode))
        offset += segment.duration
    return schedule


def _segment_states(
    config: ScenarioConfig, length: int, rng: np.random.Generator
) -> list[TargetState]:
    trajectory = config.trajectory
    schedule = _segment_schedule(trajectory)
    if not schedule:
        schedule = [(0, MotionMode(0, noise_intensity=trajectory.process_noise))]
    px, vx, py, vy = trajectory.initial_state
    state = TargetState(px, vx, py, vy)
    starts = {offset: index for index, (offset, _) in enumerate(schedule)}
    active = schedule[0][1]
    states = []
    for offset in range(length):
        if offset in starts:
            segment_index = starts[offset]
            active = schedule[segment_index][1]
            velocity = (
                trajectory.segments[segment_index].velocity if trajectory.segments else None
            )
            if velocity is not None:
                state = TargetState(state.px, velocity[0], state.py, velocity[1])
        states.append(state)
        state = propagate(state, active, 1.0, rng)
    return states


def _waypoint_states(trajectory: TrajectorySettings, length: int) -> list[TargetState]:
    points = np.asarray(trajectory.waypoints, dtype=np.float64)
    legs = np.diff(points, axis=0)
    leg_lengths = np.hypot(legs[:, 0], legs[:, 1])
    ends = np.cumsum(leg_lengths)
    states = []
    for offset in range(length):
        travelled = trajectory.speed * offset
        if travelled >= ends[-1]:
            states.append(TargetState(points[-1, 0], 0.0, points[-1, 1], 0.0))
            continue
        leg = int(np.searchsorted(ends, travelled, side="right"))
        start = ends[leg] - leg_lengths[leg]
        direction = legs[leg] / leg_lengths[leg] if leg_lengths[leg] > 0 else np.zeros(2)
        position = points[leg] + direction * (travelled - start)
        velocity = direction * trajectory.speed
        states.append(TargetState(position[0], velocity[0], position[1], velocity[1]))
    return states


def generate_truth(config: ScenarioConfig, rng: np.random.Generator) -> GroundTruth:
    """
    Build the ground truth of a scenario.

    The target exists for steps birth_step <= k < death_step. Segment
    trajectories follow the configured turn rates (zero process noise gives
    exact straight lines and arcs); waypoint trajectories move along the
    polyline at constant speed. Each present step carries its own drawn
    intensity, which is the one rendered into the frame.

    Raises:
        ConfigurationError: If the target leaves the grid while present
    """
    length = config.death_step - config.birth_step
    if config.trajectory.kind == "waypoints":
        track = _waypoint_states(config.trajectory, length)
    else:
        track = _segment_states(config, length, rng)

    width, height = config.n * config.cell_dx, config.m * config.cell_dy
    present = np.zeros(config.frame_count, dtype=bool)
    states: list[TargetState | None] = [None] * config.frame_count
    for offset, state in enumerate(track):
        step = config.birth_step + offset
        if not (0.0 <= state.px < width and 0.0 <= state.py < height):
            raise ConfigurationError(
                f"Scenario '{config.name}': trajectory leaves the grid at step {step} "
                f"({state.px:.2f}, {state.py:.2f})"
            )
        present[step] = True
        states[step] = TargetState(
            state.px, state.vx, state.py, state.vy, draw_intensity(config, rng)
        )
    return GroundTruth(present=present, states=states)


def _clutter_background(config: ScenarioConfig) -> np.ndarray:
    settings = config.background
    rng = np.random.default_rng(settings.seed)
    ii, jj = np.meshgrid(np.arange(config.n), np.arange(config.m), indexing="ij")
    clutter = np.zeros((config.n, config.m))
    centres = rng.uniform((0.0, 0.0), (config.n, config.m), size=(settings.blob_count, 2))
    for ci, cj in centres:
        disc = (ii + 0.5 - ci) ** 2 + (jj + 0.5 - cj) ** 2 <= settings.blob_radius**2
        clutter[disc] = settings.max_intensity
    return settings.level + clutter


def _texture_background(config: ScenarioConfig) -> np.ndarray:
    settings = config.background
    rng = np.random.default_rng(settings.seed)
    texture = ndimage.gaussian_filter(
        rng.standard_normal((config.n, config.m)), settings.texture_scale, mode="wrap"
    )
    span = texture.max() - texture.min()
    normalised = (texture - texture.min()) / span if span > 0 else np.zeros_like(texture)
    return settings.level + settings.max_intensity * normalised


def build_background(config: ScenarioConfig) -> np.ndarray:
    """Static background of a scenario; identical for every run"""
    settings = config.background
    if settings.kind == "flat":
        return np.full((config.n, config.m), settings.level)
    if settings.kind == "synthetic-clutter":
        return _clutter_background(config)
    if settings.kind == "synthetic-texture":
        return _texture_background(config)
    assert settings.path is not None
    frame = load_background(
        settings.path,
        settings.level,
        settings.level + settings.max_intensity,
        shape=(config.n, config.m),
    )
    return frame.pixels


def draw_intensity(config: ScenarioConfig, rng: np.random.Generator) -> float:
    """Target intensity of one frame, uniform on [mean - w, mean + w]"""
    half_width = config.intensity_fluctuation_halfwidth
    if half_width == 0.0:
        return config.target_mean_intensity
    mean = config.target_mean_intensity
    return float(rng.uniform(mean - half_width, mean + half_width))


def render_frame(
    truth_at_k: TargetState | None,
    config: ScenarioConfig,
    rng: np.random.Generator,
    background: np.ndarray | None = None,
    step: int = 0,
) -> Frame:
    """
    Background plus target footprint (when present) plus white Gaussian noise.

    The target is rendered at the intensity stored in its truth state, or
    at the scenario mean when the state carries none.
    """
    pixels = (
        build_background(config).copy() if background is None else background.copy()
    )
    if truth_at_k is not None:
        intensity = (
            config.target_mean_intensity
            if truth_at_k.intensity is None
            else truth_at_k.intensity
        )
        sensor = scenario_sensor(config)
        rows, cols, weights = sensor.footprint(
            truth_at_k.px, truth_at_k.py, target_kernel(config, step)
        )
        np.add.at(pixels, (rows, cols), intensity * weights)
    pixels += rng.normal(0.0, config.noise_sigma, size=pixels.shape)
    return Frame(pixels=pixels, step=step)


def simulate_sequence(config: ScenarioConfig, rng: np.random.Generator) -> SimulatedSequence:
    """Truth and every frame of one run, drawn from a single stream"""
    truth = generate_truth(config, rng)
    background = build_background(config)
    frames = [
        render_frame(truth.state_at(k), config, rng, background=background, step=k)
        for k in range(config.frame_count)
    ]
    logger.debug(
        f"Simulated '{config.name}': {config.frame_count} frames, "
        f"target present {int(truth.present.sum())} steps"
    )
    return SimulatedSequence(truth=truth, frames=frames, background=background)
