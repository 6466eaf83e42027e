#!/usr/bin/env python3
"""
Centralized pytest configuration and fixtures for the track-before-detect test suite
"""

import logging
import sys
from pathlib import Path

import numpy as np
import pytest

# Add project root to Python path before any project imports
PROJECT_ROOT = Path(__file__).parent.parent
sys.path.insert(0, str(PROJECT_ROOT))

# Project imports after path modification (ruff: disable E402)
from src.tbd_tracker.frames import Frame  # noqa: E402
from src.tbd_tracker.models import (  # noqa: E402
    ExistenceModel,
    ModeChain,
    ModeSet,
    MotionMode,
    SensorModel,
)
from src.tbd_tracker.settings import ScenarioConfig  # noqa: E402
from src.tbd_tracker.tbd_filter import FilterParameters  # noqa: E402

SMALL_GRID = 8
NEUTRAL_INTENSITY = 2.0

# === Core Fixtures ===


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator so every test is reproducible"""
    return np.random.default_rng(12345)


@pytest.fixture
def small_sensor() -> SensorModel:
    """8x8 point-target sensor with unit noise"""
    return SensorModel(
        n=SMALL_GRID, m=SMALL_GRID, noise_sigma=1.0, nominal_intensity=NEUTRAL_INTENSITY
    )


@pytest.fixture
def existence() -> ExistenceModel:
    return ExistenceModel(p_birth=0.05, p_death=0.05, mu1=0.1)


@pytest.fixture
def two_mode_set() -> ModeSet:
    modes = [MotionMode(0, noise_intensity=0.01), MotionMode(1, noise_intensity=0.5)]
    chain = ModeChain(tpm=np.array([[0.9, 0.1], [0.2, 0.8]]), initial=np.array([0.5, 0.5]))
    return ModeSet(modes, chain, 1.0)


@pytest.fixture
def filter_params(
    small_sensor: SensorModel, existence: ExistenceModel, two_mode_set: ModeSet
) -> FilterParameters:
    return FilterParameters(
        n_continuing=500,
        n_birth=500,
        existence=existence,
        mode_set=two_mode_set,
        sensor=small_sensor,
        birth_floor=-np.inf,
        birth_velocity_max=1.0,
    )


@pytest.fixture
def neutral_frame(small_sensor: SensorModel) -> Frame:
    """Frame of h/2 everywhere: every pixel likelihood ratio is exactly 1"""
    return Frame(pixels=np.full(small_sensor.shape, NEUTRAL_INTENSITY / 2.0))


@pytest.fixture
def small_scenario() -> ScenarioConfig:
    """Short straight-line scenario on a 32x32 flat background"""
    return ScenarioConfig(
        name="small",
        n=32,
        m=32,
        frame_count=12,
        birth_step=3,
        death_step=9,
        trajectory={"initial_state": (5.5, 1.0, 10.5, 0.5)},
        target_mean_intensity=6.0,
        noise_sigma=1.0,
        seed=4,
    )


# === Test Environment Setup ===


@pytest.fixture(scope="session", autouse=True)
def configure_logging() -> None:
    """Configure logging for tests"""
    log_dir = PROJECT_ROOT / "logs"
    log_dir.mkdir(exist_ok=True)

    logging.basicConfig(
        level=logging.WARNING,  # Reduce noise during tests
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        handlers=[
            logging.FileHandler(log_dir / "test.log"),
        ],
    )
