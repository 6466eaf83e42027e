"""
Utility functions shared across the track-before-detect engine
"""

import math

import numpy as np


def derive_seed(master_seed: int, run_index: int) -> np.random.SeedSequence:
    """
    Derive the randomness stream of one Monte Carlo run.

    The stream depends only on (master_seed, run_index), so results do not
    depend on which worker executes the run or in which order.

    Args:
        master_seed: Seed shared by every run of an experiment
        run_index: Zero-based index of the run

    Returns:
        A seed sequence owned by that run
    """
    return np.random.SeedSequence(entropy=master_seed, spawn_key=(run_index,))


def snr_db(intensity: float, sigma: float) -> float:
    """Signal-to-noise ratio as 10*log10(I^2 / sigma^2)"""
    if sigma <= 0:
        return math.inf
    if intensity <= 0:
        return -math.inf
    return 10.0 * math.log10(intensity**2 / sigma**2)
