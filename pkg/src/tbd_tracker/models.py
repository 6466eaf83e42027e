#!/usr/bin/env python3
"""
Target, motion, existence and sensor models for track-before-detect
"""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.linalg import block_diag

from .exceptions import ConfigurationError, UsageError
from .frames import Frame

logger = logging.getLogger(__name__)

# Particle state layout
PX, VX, PY, VY, INTENSITY = range(5)
KINEMATIC_DIM = 4
STATE_DIM = 5

PSD_TOLERANCE = 1e-10
STOCHASTIC_TOLERANCE = 1e-12
TURN_RATE_EPSILON = 1e-12


@dataclass(frozen=True)
class TargetState:
    """Kinematic state with optional intensity component"""

    px: float
    vx: float
    py: float
    vy: float
    intensity: float | None = None

    def __post_init__(self) -> None:
        if self.intensity is not None and self.intensity < 0:
            raise ConfigurationError(f"Target intensity must be >= 0: {self.intensity}")

    @property
    def position(self) -> tuple[float, float]:
        return self.px, self.py

    def to_vector(self, default_intensity: float = 0.0) -> np.ndarray:
        intensity = default_intensity if self.intensity is None else self.intensity
        return np.array([self.px, self.vx, self.py, self.vy, intensity])

    @classmethod
    def from_vector(
        cls, vector: np.ndarray, with_intensity: bool = True
    ) -> "TargetState":
        px, vx, py, vy, intensity = (float(v) for v in vector[:STATE_DIM])
        return cls(px, vx, py, vy, max(intensity, 0.0) if with_intensity else None)


@dataclass(eq=False)
class MotionMode:
    """
    Linear Gaussian motion mode.

    A zero turn rate gives nearly-constant velocity; otherwise the
    coordinated-turn model with a known rate. An explicit covariance
    replaces the white-acceleration noise built from noise_intensity.
    """

    mode_id: int
    noise_intensity: float = 0.0
    turn_rate: float = 0.0
    covariance: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.noise_intensity < 0:
            raise ConfigurationError(
                f"Mode {self.mode_id}: noise intensity must be >= 0"
            )

    @property
    def is_constant_velocity(self) -> bool:
        return abs(self.turn_rate) < TURN_RATE_EPSILON

    def transition_matrix(self, step: float) -> np.ndarray:
        """State transition over one step in (px, vx, py, vy) order"""
        if self.is_constant_velocity:
            axis = np.array([[1.0, step], [0.0, 1.0]])
            return block_diag(axis, axis)
        w = self.turn_rate
        s, c = math.sin(w * step), math.cos(w * step)
        return np.array(
            [
                [1.0, s / w, 0.0, -(1.0 - c) / w],
                [0.0, c, 0.0, -s],
                [0.0, (1.0 - c) / w, 1.0, s / w],
                [0.0, s, 0.0, c],
            ]
        )

    def process_noise_cov(self, step: float) -> np.ndarray:
        if self.covariance is not None:
            return np.asarray(self.covariance, dtype=np.float64)
        q = self.noise_intensity
        axis = q * np.array([[step**3 / 3.0, step**2 / 2.0], [step**2 / 2.0, step]])
        return block_diag(axis, axis)

    def noise_factor(self, step: float) -> np.ndarray:
        """Matrix L with L @ L.T equal to the process noise covariance"""
        cov = self.process_noise_cov(step)
        if cov.shape != (KINEMATIC_DIM, KINEMATIC_DIM) or not np.allclose(
            cov, cov.T
        ):
            raise ConfigurationError(
                f"Mode {self.mode_id}: process noise must be a symmetric 4x4 matrix"
            )
        eigenvalues, eigenvectors = np.linalg.eigh(cov)
        scale = max(1.0, float(np.abs(eigenvalues).max()))
        if eigenvalues.min() < -PSD_TOLERANCE * scale:
            raise ConfigurationError(
                f"Mode {self.mode_id}: process noise is not positive semi-definite"
            )
        return eigenvectors * np.sqrt(np.clip(eigenvalues, 0.0, None))


@dataclass(eq=False)
class ModeChain:
    """Markov chain over motion modes"""

    tpm: np.ndarray
    initial: np.ndarray

    def __post_init__(self) -> None:
        self.tpm = np.asarray(self.tpm, dtype=np.float64)
        self.initial = np.asarray(self.initial, dtype=np.float64)
        size = self.tpm.shape[0] if self.tpm.ndim == 2 else 0  # noqa: PLR2004
        if size == 0 or self.tpm.shape != (size, size):
            raise ConfigurationError(f"Mode TPM must be square, got {self.tpm.shape}")
        if self.initial.shape != (size,):
            raise ConfigurationError(f"Initial mode distribution must have {size} entries")
        self._check_stochastic(self.tpm, "Mode TPM row")
        self._check_stochastic(self.initial[None, :], "Initial mode distribution")

    @staticmethod
    def _check_stochastic(rows: np.ndarray, label: str) -> None:
        if np.any(rows < 0) or np.any(rows > 1):
            raise ConfigurationError(f"{label} entries must lie in [0, 1]")
        sums = rows.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > STOCHASTIC_TOLERANCE)
        if bad.size:
            raise ConfigurationError(f"{label} {int(bad[0])} sums to {sums[bad[0]]!r}")

    @classmethod
    def single(cls) -> "ModeChain":
        return cls(tpm=np.ones((1, 1)), initial=np.ones(1))

    @property
    def size(self) -> int:
        return self.tpm.shape[0]

    @staticmethod
    def _draw(cdf: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
        # first index whose cumulative probability exceeds the uniform
        picks = (cdf <= uniforms[:, None]).sum(axis=1)
        return np.minimum(picks, cdf.shape[1] - 1)

    def sample_initial(self, count: int, rng: np.random.Generator) -> np.ndarray:
        cdf = np.cumsum(self.initial)
        cdf[-1] = 1.0
        return self._draw(np.broadcast_to(cdf, (count, cdf.size)), rng.random(count))

    def sample_next(self, modes: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Draw successor modes; consumes one uniform per particle for any size"""
        cdf = np.cumsum(self.tpm, axis=1)
        cdf[:, -1] = 1.0
        return self._draw(cdf[np.asarray(modes, dtype=np.intp)], rng.random(len(modes)))


class ModeSet:
    """Motion modes plus their switching chain, evaluated for a fixed step"""

    def __init__(self, modes: Sequence[MotionMode], chain: ModeChain, step: float):
        if step <= 0:
            raise UsageError(f"Step must be positive: {step}")
        if len(modes) != chain.size:
            raise ConfigurationError(
                f"{len(modes)} motion modes but a {chain.size}-state mode chain"
            )
        self.modes = list(modes)
        self.chain = chain
        self.step = step
        self.transitions = np.stack([mode.transition_matrix(step) for mode in modes])
        self.factors = np.stack([mode.noise_factor(step) for mode in modes])

    @classmethod
    def single(cls, mode: MotionMode, step: float = 1.0) -> "ModeSet":
        return cls([mode], ModeChain.single(), step)

    def __len__(self) -> int:
        return len(self.modes)

    def propagate(
        self,
        states: np.ndarray,
        modes: np.ndarray,
        rng: np.random.Generator,
        intensity_sigma: float = 0.0,
    ) -> np.ndarray:
        """
        Advance a batch of particle states, each under its own mode.

        Args:
            states: (N, 5) particle states
            modes: (N,) mode index per particle
            rng: Random generator
            intensity_sigma: Random-walk step of the intensity component, 0 to freeze it

        Returns:
            New (N, 5) array; intensities stay clamped at 0
        """
        modes = np.asarray(modes, dtype=np.intp)
        kinematics = states[:, :KINEMATIC_DIM]
        white = rng.standard_normal(kinematics.shape)
        moved = np.einsum("nij,nj->ni", self.transitions[modes], kinematics)
        moved += np.einsum("nij,nj->ni", self.factors[modes], white)
        result = np.empty_like(states)
        result[:, :KINEMATIC_DIM] = moved
        result[:, INTENSITY] = states[:, INTENSITY]
        if intensity_sigma > 0:
            walked = states[:, INTENSITY] + intensity_sigma * rng.standard_normal(
                len(states)
            )
            result[:, INTENSITY] = np.maximum(walked, 0.0)
        return result


def propagate(
    state: TargetState,
    mode: MotionMode,
    step: float,
    rng: np.random.Generator,
    intensity_sigma: float = 0.0,
) -> TargetState:
    """Advance a single state under one mode"""
    mode_set = ModeSet.single(mode, step)
    vector = state.to_vector()[None, :]
    sigma = intensity_sigma if state.intensity is not None else 0.0
    moved = mode_set.propagate(vector, np.zeros(1, dtype=np.intp), rng, sigma)
    return TargetState.from_vector(moved[0], with_intensity=state.intensity is not None)


def sample_mode_transition(
    previous_mode: int, chain: ModeChain, rng: np.random.Generator
) -> int:
    if not 0 <= previous_mode < chain.size:
        raise UsageError(f"Mode {previous_mode} outside 0..{chain.size - 1}")
    return int(chain.sample_next(np.array([previous_mode]), rng)[0])


@dataclass(frozen=True)
class ExistenceModel:
    """Two-state existence chain (absent/present)"""

    p_birth: float
    p_death: float
    mu1: float

    def __post_init__(self) -> None:
        for name in ("p_birth", "p_death", "mu1"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1]: {value}")

    @property
    def transition_matrix(self) -> np.ndarray:
        return np.array(
            [[1.0 - self.p_birth, self.p_birth], [self.p_death, 1.0 - self.p_death]]
        )

    def predicted_presence(self, presence: float) -> float:
        return self.p_birth * (1.0 - presence) + (1.0 - self.p_death) * presence


def default_extended_kernel() -> np.ndarray:
    """Separable 3x3 blur used for extended targets"""
    profile = np.array([0.5, 1.0, 0.5])
    return np.outer(profile, profile)


def rotate_kernel(kernel: np.ndarray, angle_deg: float) -> np.ndarray:
    """Rotate a spread kernel about its centre with nearest-neighbour resampling"""
    kernel = np.asarray(kernel, dtype=np.float64)
    if angle_deg % 360.0 == 0.0:
        return kernel
    size = int(math.ceil(max(kernel.shape) * math.sqrt(2.0)))
    size += 1 - size % 2
    padded = np.zeros((size, size))
    row0 = (size - kernel.shape[0]) // 2
    col0 = (size - kernel.shape[1]) // 2
    padded[row0 : row0 + kernel.shape[0], col0 : col0 + kernel.shape[1]] = kernel
    return ndimage.rotate(padded, angle_deg, reshape=False, order=0, mode="constant")


@dataclass(eq=False)
class SensorModel:
    """Pixel grid, noise level and target spread"""

    n: int
    m: int
    noise_sigma: float
    cell_dx: float = 1.0
    cell_dy: float = 1.0
    nominal_intensity: float = 1.0
    spread: np.ndarray = field(default_factory=lambda: np.ones((1, 1)))

    def __post_init__(self) -> None:
        self.spread = np.asarray(self.spread, dtype=np.float64)
        if self.n < 1 or self.m < 1:
            raise ConfigurationError(f"Grid must be at least 1x1, got {self.n}x{self.m}")
        if self.noise_sigma <= 0:
            raise ConfigurationError(f"Noise sigma must be positive: {self.noise_sigma}")
        if self.cell_dx <= 0 or self.cell_dy <= 0:
            raise ConfigurationError("Cell sizes must be positive")
        if self.spread.ndim != 2 or any(d % 2 == 0 for d in self.spread.shape):  # noqa: PLR2004
            raise ConfigurationError(f"Spread kernel must be odd-sized, got {self.spread.shape}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.n, self.m

    @property
    def is_point(self) -> bool:
        return self.spread.shape == (1, 1)

    @property
    def cell_count(self) -> int:
        return self.n * self.m

    def cell_indices(
        self, px: np.ndarray, py: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        """Index of the cell containing each position; cell i covers [i dx, (i+1) dx)"""
        i = np.floor(np.asarray(px) / self.cell_dx).astype(np.int64)
        j = np.floor(np.asarray(py) / self.cell_dy).astype(np.int64)
        return i, j

    def footprint(
        self, px: float, py: float, kernel: np.ndarray | None = None
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """In-grid cells and spread weights covered by a target at (px, py)"""
        kernel = self.spread if kernel is None else kernel
        ci, cj = self.cell_indices(px, py)
        offsets_i, offsets_j = np.nonzero(kernel)
        weights = kernel[offsets_i, offsets_j]
        rows = int(ci) + offsets_i - kernel.shape[0] // 2
        cols = int(cj) + offsets_j - kernel.shape[1] // 2
        inside = (rows >= 0) & (rows < self.n) & (cols >= 0) & (cols < self.m)
        return rows[inside], cols[inside], weights[inside]


def pixel_log_likelihood_ratio(
    z: np.ndarray | float, h: np.ndarray | float, sigma: float
) -> np.ndarray:
    """log of N(z; h, sigma^2) / N(z; 0, sigma^2)"""
    if sigma <= 0:
        raise ConfigurationError(f"Noise sigma must be positive: {sigma}")
    z = np.asarray(z, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    return h * (2.0 * z - h) / (2.0 * sigma**2)


def pixel_likelihood_ratio(z: float, h: float, sigma: float) -> float:
    return float(np.exp(pixel_log_likelihood_ratio(z, h, sigma)))


def frame_log_likelihood_ratios(
    pixels: np.ndarray,
    states: np.ndarray,
    sensor: SensorModel,
    intensities: np.ndarray | float | None = None,
) -> np.ndarray:
    """
    Log likelihood ratio of a frame for each particle.

    Only cells inside the target footprint contribute. A particle whose
    containing cell lies outside the grid gets ratio 1 (log 0).
    """
    count = len(states)
    if intensities is None:
        intensities = sensor.nominal_intensity
    intensity = np.broadcast_to(np.asarray(intensities, dtype=np.float64), (count,))
    ci, cj = sensor.cell_indices(states[:, PX], states[:, PY])
    inside = (ci >= 0) & (ci < sensor.n) & (cj >= 0) & (cj < sensor.m)
    log_ratio = np.zeros(count)
    half_i, half_j = sensor.spread.shape[0] // 2, sensor.spread.shape[1] // 2
    for (a, b), weight in np.ndenumerate(sensor.spread):
        if weight == 0.0:
            continue
        rows, cols = ci + a - half_i, cj + b - half_j
        valid = inside & (rows >= 0) & (rows < sensor.n) & (cols >= 0) & (cols < sensor.m)
        h = weight * intensity[valid]
        z = pixels[rows[valid], cols[valid]]
        log_ratio[valid] += pixel_log_likelihood_ratio(z, h, sensor.noise_sigma)
    return log_ratio


def frame_likelihood_ratio(
    frame: Frame, state: TargetState, sensor: SensorModel
) -> float:
    """Likelihood ratio of a whole frame for one target state"""
    if frame.shape != sensor.shape:
        raise UsageError(f"Frame {frame.shape} does not match sensor grid {sensor.shape}")
    intensity = sensor.nominal_intensity if state.intensity is None else state.intensity
    log_ratio = frame_log_likelihood_ratios(
        frame.pixels, state.to_vector()[None, :], sensor, intensity
    )
    return float(np.exp(log_ratio[0]))
