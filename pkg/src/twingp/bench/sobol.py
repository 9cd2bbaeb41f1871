"""Unscrambled Sobol test designs."""
from __future__ import annotations

import warnings

import numpy as np
from scipy.stats import qmc

# scipy ships Joe-Kuo direction numbers for this many dimensions
MAX_DIM = 21201


def sobol_points(t: int, d: int) -> np.ndarray:
    """First ``t`` points of the unscrambled Sobol sequence, origin first."""
    if not 1 <= d <= MAX_DIM:
        raise ValueError(f"Sobol points are available for 1 <= d <= {MAX_DIM}, got {d}")
    if t < 0:
        raise ValueError("t must be nonnegative")
    engine = qmc.Sobol(d, scramble=False)
    with warnings.catch_warnings():
        # balance warning for non powers of two is irrelevant for test designs
        warnings.simplefilter("ignore", UserWarning)
        return engine.random(t)
