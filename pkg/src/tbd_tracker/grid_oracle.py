"""
Exact Bayes recursion on a discretised state space

Reference implementation for checking the particle filter on small grids.
The lattice is (mode, x cell, x velocity bin, y cell, y velocity bin);
position nodes sit at cell centres and velocities at the configured bins.
Everything here is deterministic.
"""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigurationError, UsageError
from .frames import Frame
from .models import ExistenceModel, ModeSet, SensorModel, TargetState, pixel_log_likelihood_ratio

logger = logging.getLogger(__name__)

DEFAULT_MAX_CELLS = 1_000_000


def _axis_kernel(
    positions: np.ndarray,
    velocities: np.ndarray,
    cell_size: float,
    step: float,
    noise_intensity: float,
) -> np.ndarray:
    """
    Transition probabilities along one axis, indexed [dest x, dest v, src x, src v].

    Gaussian noise is integrated over destination cells with the midpoint
    rule and renormalised over the in-grid destinations. Without noise each
    source moves to the cell containing x + v T, clipped to the grid.
    """
    n, v = len(positions), len(velocities)
    kernel = np.zeros((n, v, n, v))
    src_x, src_v = np.meshgrid(positions, velocities, indexing="ij")
    mean_x = src_x + src_v * step
    if noise_intensity > 0:
        cov = noise_intensity * np.array([[step**3 / 3.0, step**2 / 2.0], [step**2 / 2.0, step]])
        precision = np.linalg.inv(cov)
        dx = positions[:, None, None, None] - mean_x[None, None, :, :]
        dv = velocities[None, :, None, None] - src_v[None, None, :, :]
        quad = precision[0, 0] * dx**2 + 2 * precision[0, 1] * dx * dv + precision[1, 1] * dv**2
        kernel = np.exp(-0.5 * quad)
    mass = kernel.sum(axis=(0, 1))
    for i, a in zip(*np.nonzero(mass <= 0), strict=True):
        dest = int(np.clip(np.floor(mean_x[i, a] / cell_size), 0, n - 1))
        kernel[:, :, i, a] = 0.0
        kernel[dest, a, i, a] = 1.0
    return kernel / kernel.sum(axis=(0, 1), keepdims=True)


@dataclass(eq=False)
class GridModel:
    """Discretised motion, existence and sensor models"""

    sensor: SensorModel
    existence: ExistenceModel
    mode_set: ModeSet
    velocity_bins: np.ndarray
    max_cells: int = DEFAULT_MAX_CELLS

    def __post_init__(self) -> None:
        self.velocity_bins = np.asarray(self.velocity_bins, dtype=np.float64)
        if not self.sensor.is_point:
            raise UsageError("The grid oracle supports point targets only")
        if any(not mode.is_constant_velocity for mode in self.mode_set.modes):
            raise UsageError("The grid oracle supports constant-velocity modes only")
        if any(mode.covariance is not None for mode in self.mode_set.modes):
            raise UsageError("The grid oracle needs white-acceleration process noise")
        if self.cell_count > self.max_cells:
            raise UsageError(
                f"Grid of {self.cell_count} cells exceeds the oracle limit {self.max_cells}"
            )
        step = self.mode_set.step
        x_nodes = (np.arange(self.sensor.n) + 0.5) * self.sensor.cell_dx
        y_nodes = (np.arange(self.sensor.m) + 0.5) * self.sensor.cell_dy
        self.kernels_x = [
            _axis_kernel(x_nodes, self.velocity_bins, self.sensor.cell_dx, step, mode.noise_intensity)
            for mode in self.mode_set.modes
        ]
        self.kernels_y = [
            _axis_kernel(y_nodes, self.velocity_bins, self.sensor.cell_dy, step, mode.noise_intensity)
            for mode in self.mode_set.modes
        ]
        self.x_nodes, self.y_nodes = x_nodes, y_nodes

    @property
    def shape(self) -> tuple[int, int, int, int, int]:
        bins = len(self.velocity_bins)
        return len(self.mode_set), self.sensor.n, bins, self.sensor.m, bins

    @property
    def cell_count(self) -> int:
        return math.prod(self.shape)

    def birth_density(self) -> np.ndarray:
        """Uniform over cells and velocity bins, modes from the chain's initial law"""
        modes = self.mode_set.chain.initial
        spatial = np.full(self.shape[1:], 1.0 / math.prod(self.shape[1:]))
        return modes[:, None, None, None, None] * spatial[None]

    def predict(self, density: np.ndarray) -> np.ndarray:
        """Chapman-Kolmogorov sum over modes and lattice cells"""
        mixed = np.einsum("rs,rxayb->sxayb", self.mode_set.chain.tpm, density)
        predicted = np.empty_like(mixed)
        for s in range(len(self.mode_set)):
            predicted[s] = np.einsum(
                "XAxa,YByb,xayb->XAYB", self.kernels_x[s], self.kernels_y[s], mixed[s], optimize=True
            )
        return predicted

    def log_likelihood(self, frame: Frame) -> np.ndarray:
        """Log likelihood ratio for a target in each cell, shape (n, m)"""
        if frame.shape != self.sensor.shape:
            raise UsageError(f"Frame {frame.shape} does not match grid {self.sensor.shape}")
        return pixel_log_likelihood_ratio(
            frame.pixels, self.sensor.nominal_intensity, self.sensor.noise_sigma
        )


@dataclass(eq=False)
class GridPosterior:
    """Conditional state density given presence, and the presence probability"""

    density: np.ndarray
    presence: float

    @classmethod
    def initial(cls, model: GridModel) -> "GridPosterior":
        return cls(density=model.birth_density(), presence=model.existence.mu1)

    def position_marginal(self) -> np.ndarray:
        return self.density.sum(axis=(0, 2, 4))

    def mean_state(self, model: GridModel) -> TargetState:
        px = float(np.einsum("kxayb,x->", self.density, model.x_nodes))
        vx = float(np.einsum("kxayb,a->", self.density, model.velocity_bins))
        py = float(np.einsum("kxayb,y->", self.density, model.y_nodes))
        vy = float(np.einsum("kxayb,b->", self.density, model.velocity_bins))
        return TargetState(px, vx, py, vy)


def presence_from_evidence(
    log_survival_evidence: float,
    log_birth_evidence: float,
    p_prev: float,
    existence: ExistenceModel,
) -> tuple[float, float]:
    """
    Posterior presence and the probability the target was born this step.

    The joint posteriors of (present, continuing), (present, newborn) and
    absent are formed from their evidences and normalised explicitly.
    """
    p_b, p_d = existence.p_birth, existence.p_death
    with np.errstate(divide="ignore"):
        log_terms = np.array(
            [
                np.log((1.0 - p_d) * p_prev) + log_survival_evidence,
                np.log(p_b * (1.0 - p_prev)) + log_birth_evidence,
                np.log(p_d * p_prev + (1.0 - p_b) * (1.0 - p_prev)),
            ]
        )
    shift = log_terms.max()
    if shift == -np.inf:
        raise ConfigurationError("Degenerate existence model: every hypothesis has zero mass")
    joint = np.exp(log_terms - shift)
    joint /= joint.sum()
    present = joint[0] + joint[1]
    newborn = joint[1] / present if present > 0 else 0.0
    return float(present), float(newborn)


def oracle_step(frame: Frame, posterior: GridPosterior, model: GridModel) -> GridPosterior:
    """One exact recursion step: predict, update both hypotheses, mix, renormalise"""
    predicted = model.predict(posterior.density)
    birth = model.birth_density()
    log_lr = model.log_likelihood(frame)
    shift = float(log_lr.max())
    ratio = np.exp(log_lr - shift)[None, :, None, :, None]

    survival_unnorm = ratio * predicted
    birth_unnorm = ratio * birth
    survival_mass, birth_mass = survival_unnorm.sum(), birth_unnorm.sum()
    with np.errstate(divide="ignore"):
        log_survival = shift + math.log(survival_mass) if survival_mass > 0 else -math.inf
        log_birth = shift + math.log(birth_mass) if birth_mass > 0 else -math.inf

    presence, newborn = presence_from_evidence(
        log_survival, log_birth, posterior.presence, model.existence
    )
    if survival_mass > 0 and birth_mass > 0:
        density = (1.0 - newborn) * survival_unnorm / survival_mass + newborn * birth_unnorm / birth_mass
    elif birth_mass > 0:
        density = birth_unnorm / birth_mass
    else:
        density = birth
    density = density / density.sum()
    return GridPosterior(density=density, presence=presence)


def oracle_presence_series(frames: Sequence[Frame], model: GridModel) -> list[float]:
    """Presence probability after each frame, starting from the initial posterior"""
    posterior = GridPosterior.initial(model)
    series = []
    for frame in frames:
        posterior = oracle_step(frame, posterior, model)
        series.append(posterior.presence)
    logger.debug(f"Oracle processed {len(series)} frames on a {model.shape} lattice")
    return series
