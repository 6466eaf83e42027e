#!/usr/bin/env python3
"""
Multiple-model Bernoulli track-before-detect particle filter

Each step draws a newborn particle stream from a proposal over bright
pixels, moves the surviving stream through the mode-switching dynamics,
weights both by the frame likelihood ratio, updates the presence
probability from the two weight sums and resamples the weighted union
back to N_c particles.

Weights are kept in the log domain until the final normalisation.
"""

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import expit, logsumexp

from .exceptions import ConfigurationError, UsageError
from .frames import Frame
from .models import (
    INTENSITY,
    PX,
    PY,
    STATE_DIM,
    VX,
    VY,
    ExistenceModel,
    ModeChain,
    ModeSet,
    MotionMode,
    SensorModel,
    TargetState,
    frame_log_likelihood_ratios,
)
from .settings import FilterConfig

logger = logging.getLogger(__name__)

MIXTURE_TOLERANCE = 1e-9


@dataclass(frozen=True)
class Particle:
    state: TargetState
    mode: int
    weight: float


@dataclass(eq=False)
class ParticleSet:
    """Particle states (N, 5), mode indices and normalised weights"""

    states: np.ndarray
    modes: np.ndarray
    weights: np.ndarray
    log_weight_sum: float = 0.0  # log of the unnormalised weight sum

    def __post_init__(self) -> None:
        count = len(self.states)
        if self.states.shape != (count, STATE_DIM) or self.modes.shape != (count,):
            raise UsageError("Particle arrays have inconsistent shapes")
        if self.weights.shape != (count,):
            raise UsageError("Particle weights have inconsistent shape")

    def __len__(self) -> int:
        return len(self.states)

    def particle(self, index: int, with_intensity: bool = False) -> Particle:
        return Particle(
            state=TargetState.from_vector(self.states[index], with_intensity),
            mode=int(self.modes[index]),
            weight=float(self.weights[index]),
        )

    @classmethod
    def equally_weighted(cls, states: np.ndarray, modes: np.ndarray) -> "ParticleSet":
        count = len(states)
        return cls(states=states, modes=modes, weights=np.full(count, 1.0 / count))


@dataclass(frozen=True)
class PresenceUpdate:
    presence: float
    m_birth: float
    m_continuing: float


@dataclass(frozen=True)
class StepDiagnostics:
    m_birth: float
    m_continuing: float
    log_birth_weight_sum: float
    log_survival_weight_sum: float
    birth_support_cells: int


@dataclass(frozen=True)
class FilterOutput:
    """Result of one filter step"""

    step: int
    presence_prob: float
    detected: bool
    state_estimate: TargetState | None
    effective_sample_size: float
    diagnostics: StepDiagnostics

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(eq=False)
class FilterState:
    particles: ParticleSet
    presence: float
    step_index: int = 0


@dataclass(eq=False)
class FilterParameters:
    """Runtime filter configuration with validated model objects"""

    n_continuing: int
    n_birth: int
    existence: ExistenceModel
    mode_set: ModeSet
    sensor: SensorModel
    detection_threshold: float = 0.6
    birth_floor: float = 0.5
    birth_velocity_max: float = 2.0
    intensity_augmented: bool = False
    intensity_walk_sigma: float = 0.0
    birth_intensity_halfwidth: float = 2.0
    birth_intensity_max: float = 40.0

    def __post_init__(self) -> None:
        if self.n_continuing < 1 or self.n_birth < 1:
            raise ConfigurationError("Particle counts must be at least 1")
        if not 0.0 < self.detection_threshold < 1.0:
            raise ConfigurationError(
                f"Detection threshold must lie in (0, 1): {self.detection_threshold}"
            )
        if self.birth_velocity_max < 0:
            raise ConfigurationError("Birth velocity bound must be >= 0")

    @classmethod
    def from_config(cls, config: FilterConfig, sensor: SensorModel) -> "FilterParameters":
        modes = [
            MotionMode(mode_id=index, noise_intensity=mode.noise_intensity, turn_rate=mode.turn_rate)
            for index, mode in enumerate(config.modes)
        ]
        chain = ModeChain(tpm=np.array(config.mode_tpm), initial=np.array(config.mode_initial))
        return cls(
            n_continuing=config.n_continuing,
            n_birth=config.n_birth,
            existence=ExistenceModel(**config.existence.model_dump()),
            mode_set=ModeSet(modes, chain, config.step),
            sensor=sensor,
            detection_threshold=config.detection_threshold,
            birth_floor=config.birth_proposal_floor,
            birth_velocity_max=config.birth_velocity_max,
            intensity_augmented=config.intensity_augmented,
            intensity_walk_sigma=config.intensity_walk_sigma,
            birth_intensity_halfwidth=config.birth_intensity_halfwidth,
            birth_intensity_max=config.birth_intensity_max,
        )

    def particle_intensities(self, states: np.ndarray) -> np.ndarray | float:
        if self.intensity_augmented:
            return states[:, INTENSITY]
        return self.sensor.nominal_intensity


def normalize_log_weights(log_weights: np.ndarray) -> tuple[np.ndarray, float]:
    """Normalised weights and the log of the unnormalised sum"""
    log_sum = float(logsumexp(log_weights))
    if not math.isfinite(log_sum):
        # a stream with no mass keeps uniform weights; its mixture weight is 0
        return np.full(len(log_weights), 1.0 / len(log_weights)), log_sum
    return np.exp(log_weights - log_sum), log_sum


def effective_sample_size(weights: np.ndarray) -> float:
    return float(1.0 / np.sum(weights**2))


def systematic_resample(
    weights: np.ndarray, count: int, rng: np.random.Generator
) -> np.ndarray:
    """Indices of `count` draws by systematic resampling; zero weights are never chosen"""
    cumulative = np.cumsum(weights)
    cumulative /= cumulative[-1]
    cumulative[-1] = 1.0
    positions = (rng.random() + np.arange(count)) / count
    indices = np.searchsorted(cumulative, positions, side="right")
    return np.minimum(indices, len(weights) - 1)


def birth_support(frame: Frame, floor: float) -> np.ndarray:
    """Flat indices of cells eligible for the birth proposal"""
    support = np.flatnonzero(frame.pixels >= floor)
    if support.size == 0:
        logger.warning(
            f"Frame {frame.step}: no pixel reaches the birth floor {floor}, "
            "proposing births over the whole grid"
        )
        support = np.arange(frame.pixels.size)
    return support


def _sample_birth_states(
    frame: Frame,
    support: np.ndarray,
    params: FilterParameters,
    count: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Birth states plus the log proposal-to-prior correction of the intensity draw"""
    sensor = params.sensor
    cells = support[rng.integers(0, support.size, size=count)]
    ci, cj = np.unravel_index(cells, frame.shape)
    states = np.empty((count, STATE_DIM))
    states[:, PX] = (ci + rng.random(count)) * sensor.cell_dx
    states[:, PY] = (cj + rng.random(count)) * sensor.cell_dy
    vmax = params.birth_velocity_max
    states[:, VX] = rng.uniform(-vmax, vmax, size=count)
    states[:, VY] = rng.uniform(-vmax, vmax, size=count)
    log_correction = np.zeros(count)
    if not params.intensity_augmented:
        states[:, INTENSITY] = sensor.nominal_intensity
        return states, log_correction

    # intensity proposal: uniform around the measured pixel value, prior uniform on [0, I_max]
    measured = frame.pixels[ci, cj]
    low = np.maximum(measured - params.birth_intensity_halfwidth, 0.0)
    high = np.maximum(measured + params.birth_intensity_halfwidth, low + params.birth_intensity_halfwidth)
    states[:, INTENSITY] = rng.uniform(low, high)
    log_correction = np.log(high - low) - math.log(params.birth_intensity_max)
    log_correction[states[:, INTENSITY] > params.birth_intensity_max] = -np.inf
    return states, log_correction


def init(first_frame: Frame, params: FilterParameters, rng: np.random.Generator) -> FilterState:
    """Seed the continuing stream from the birth proposal over the first frame"""
    support = birth_support(first_frame, params.birth_floor)
    states, _ = _sample_birth_states(first_frame, support, params, params.n_continuing, rng)
    modes = params.mode_set.chain.sample_initial(params.n_continuing, rng)
    particles = ParticleSet.equally_weighted(states, modes)
    return FilterState(particles=particles, presence=params.existence.mu1)


def spawn_birth(
    frame: Frame, params: FilterParameters, rng: np.random.Generator
) -> tuple[ParticleSet, int]:
    """
    Draw the newborn stream and weight it.

    The birth prior is uniform over the grid and the velocity box, the
    proposal uniform over the support cells and the same box, so the
    unnormalised weight is L * |S| / (n m) / N_b.

    Returns:
        The weighted particles and the size of the proposal support
    """
    support = birth_support(frame, params.birth_floor)
    states, log_correction = _sample_birth_states(frame, support, params, params.n_birth, rng)
    modes = params.mode_set.chain.sample_initial(params.n_birth, rng)
    log_likelihood = frame_log_likelihood_ratios(
        frame.pixels, states, params.sensor, params.particle_intensities(states)
    )
    log_weights = (
        log_likelihood
        + log_correction
        + math.log(support.size)
        - math.log(params.sensor.cell_count)
        - math.log(params.n_birth)
    )
    weights, log_sum = normalize_log_weights(log_weights)
    return ParticleSet(states, modes, weights, log_sum), int(support.size)


def propagate_survival(
    particles: ParticleSet, frame: Frame, params: FilterParameters, rng: np.random.Generator
) -> ParticleSet:
    """Move the continuing stream through the dynamics and weight it by the frame"""
    mode_set = params.mode_set
    modes = mode_set.chain.sample_next(particles.modes, rng)
    walk = params.intensity_walk_sigma if params.intensity_augmented else 0.0
    states = mode_set.propagate(particles.states, modes, rng, walk)
    log_likelihood = frame_log_likelihood_ratios(
        frame.pixels, states, params.sensor, params.particle_intensities(states)
    )
    weights, log_sum = normalize_log_weights(log_likelihood - math.log(len(particles)))
    return ParticleSet(states, modes, weights, log_sum)


def _log(value: float) -> float:
    return math.log(value) if value > 0 else -math.inf


def presence_update(
    log_birth_sum: float,
    log_survival_sum: float,
    p_prev: float,
    existence: ExistenceModel,
) -> PresenceUpdate:
    """
    Presence probability from the unnormalised birth and survival weight sums.

    Both sums are passed as logarithms. The update is
    p_k = (Mb + Mc) / (Mb + Mc + p_d p + (1 - p_b)(1 - p)) with
    Mb = p_b (1 - p) sum_b and Mc = (1 - p_d) p sum_c.
    """
    if not 0.0 <= p_prev <= 1.0:
        raise UsageError(f"Previous presence must lie in [0, 1]: {p_prev}")
    p_b, p_d = existence.p_birth, existence.p_death
    log_mb = _log(p_b * (1.0 - p_prev)) + log_birth_sum
    log_mc = _log((1.0 - p_d) * p_prev) + log_survival_sum
    log_absent = _log(p_d * p_prev + (1.0 - p_b) * (1.0 - p_prev))
    log_present = float(np.logaddexp(log_mb, log_mc))
    if log_present == -math.inf and log_absent == -math.inf:
        raise ConfigurationError(
            f"Degenerate existence model: p_b={p_b}, p_d={p_d}, p_prev={p_prev}"
        )
    presence = float(expit(log_present - log_absent))
    if log_present == -math.inf:
        prior_b, prior_c = p_b * (1.0 - p_prev), (1.0 - p_d) * p_prev
        total = prior_b + prior_c
        m_birth = prior_b / total if total > 0 else 0.5
        return PresenceUpdate(presence, m_birth, 1.0 - m_birth)
    m_birth = math.exp(log_mb - log_present)
    m_continuing = math.exp(log_mc - log_present)
    return PresenceUpdate(presence, m_birth, m_continuing)


def combine_and_resample(
    birth: ParticleSet,
    survival: ParticleSet,
    m_birth: float,
    m_continuing: float,
    count: int,
    rng: np.random.Generator,
) -> tuple[ParticleSet, float]:
    """
    Resample the weighted union of both streams down to `count` particles.

    Returns:
        Equally weighted particles and the effective sample size of the union
    """
    if abs(m_birth + m_continuing - 1.0) > MIXTURE_TOLERANCE:
        raise UsageError(f"Mixture weights must sum to 1: {m_birth} + {m_continuing}")
    combined = np.concatenate([m_birth * birth.weights, m_continuing * survival.weights])
    ess = effective_sample_size(combined / combined.sum())
    indices = systematic_resample(combined, count, rng)
    states = np.concatenate([birth.states, survival.states])[indices]
    modes = np.concatenate([birth.modes, survival.modes])[indices]
    return ParticleSet.equally_weighted(states, modes), ess


def estimate_state(particles: ParticleSet, with_intensity: bool = False) -> TargetState:
    """Weighted mean of the particle states"""
    if len(particles) == 0:
        raise UsageError("Cannot estimate a state from zero particles")
    mean = np.average(particles.states, axis=0, weights=particles.weights)
    return TargetState.from_vector(mean, with_intensity)


class TbdParticleFilter:
    """Single-target track-before-detect filter; one instance per sequence"""

    def __init__(self, params: FilterParameters):
        self.params = params
        self.state: FilterState | None = None

    def initialize(self, first_frame: Frame, rng: np.random.Generator) -> FilterState:
        self.state = init(first_frame, self.params, rng)
        return self.state

    def step(self, frame: Frame, rng: np.random.Generator) -> FilterOutput:
        """Process one preprocessed frame and return the detection decision"""
        if self.state is None:
            raise UsageError("Filter must be initialised before stepping")
        if frame.shape != self.params.sensor.shape:
            raise UsageError(
                f"Frame {frame.shape} does not match sensor grid {self.params.sensor.shape}"
            )
        params, state = self.params, self.state

        birth, support_size = spawn_birth(frame, params, rng)
        survival = propagate_survival(state.particles, frame, params, rng)
        update = presence_update(
            birth.log_weight_sum, survival.log_weight_sum, state.presence, params.existence
        )
        resampled, ess = combine_and_resample(
            birth, survival, update.m_birth, update.m_continuing, params.n_continuing, rng
        )

        detected = update.presence > params.detection_threshold
        estimate = estimate_state(resampled, params.intensity_augmented) if detected else None
        state.particles = resampled
        state.presence = update.presence
        state.step_index += 1

        return FilterOutput(
            step=frame.step,
            presence_prob=update.presence,
            detected=detected,
            state_estimate=estimate,
            effective_sample_size=ess,
            diagnostics=StepDiagnostics(
                m_birth=update.m_birth,
                m_continuing=update.m_continuing,
                log_birth_weight_sum=birth.log_weight_sum,
                log_survival_weight_sum=survival.log_weight_sum,
                birth_support_cells=support_size,
            ),
        )

    def run(self, frames: list[Frame], rng: np.random.Generator) -> list[FilterOutput]:
        """Initialise on the first frame and step through every frame"""
        if not frames:
            return []
        self.initialize(frames[0], rng)
        outputs = []
        for frame in frames:
            output = self.step(frame, rng)
            logger.debug(
                f"Step {output.step}: p={output.presence_prob:.4f} "
                f"Mb={output.diagnostics.m_birth:.3f} ESS={output.effective_sample_size:.0f}"
            )
            outputs.append(output)
        return outputs
