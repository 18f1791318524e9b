import math

import numpy as np
import pytest

from spinctl.evolution import TargetRotation, drift_control, propagate_triad
from spinctl.magnus import PurePath, TimeGrid
from spinctl.noise import OneOverF

# Transit-time units: all nondimensional rates are per tau.
TAU = 1.0
DRIFT = np.array([2.0 * math.pi, 0.0, 2.0 * math.pi])


@pytest.fixture(scope="session")
def paper_kernel():
    return OneOverF(8.0 / TAU**2, 0.1 / TAU, 20.0 / TAU)


@pytest.fixture(scope="session")
def paper_target():
    return TargetRotation.from_drift(DRIFT / TAU, TAU)


def drift_triad(grid: TimeGrid, target=None):
    target = target or TargetRotation.from_drift(DRIFT / TAU, TAU)
    return propagate_triad(drift_control(target, grid).omega_lab)


def fourier_path(grid: TimeGrid, coeffs) -> PurePath:
    """Deterministic band-limited path from explicit (cos, sin) coefficient rows."""
    t = grid.nodes / grid.tau
    vals = np.zeros((grid.n_nodes, 3))
    for h, (a, b) in enumerate(coeffs, start=1):
        phase = 2.0 * math.pi * h * t
        vals += np.outer(np.cos(phase), np.asarray(a)) + np.outer(np.sin(phase), np.asarray(b))
    return PurePath(grid, vals)


def quat_tuple(q):
    return np.array(q.wxyz())
