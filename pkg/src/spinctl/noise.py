"""Stationary noise covariance kernels and Gaussian path sampling.

The flagship kernel is the 1/f family: a log-uniform ensemble of exponential
decays between a lower and an upper rate cutoff, giving a correlator
proportional to E1(gamma_lo s) - E1(gamma_hi s) in the time domain and a
1/frequency spectrum between the cutoffs.  Covariances are assembled on a
uniform grid and factorized for sampling; sampling uses counter-based
per-path substreams so draws are deterministic given the seed and
parallelizable across paths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError, NotPSD
from .magnus import TimeGrid

__all__ = [
    "NoiseKernel",
    "OneOverF",
    "DiagonalConstant",
    "UserMatrix",
    "NoiseSampleSet",
    "CovarianceOperator",
    "exp_integral_e1",
    "kernel_eval",
    "assemble_covariance",
    "sample_block",
    "sample_paths",
]

_EULER_GAMMA = 0.5772156649015328606

# Jitter escalation ladder, as fractions of the largest diagonal entry.
_JITTERS = (0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8)

_SAMPLE_CHUNK = 4096


def _e1_series(x: np.ndarray) -> np.ndarray:
    """Convergent series for E1, accurate for 0 < x <= 1."""
    total = np.zeros_like(x)
    term = np.ones_like(x)
    for k in range(1, 30):
        term = term * (-x) / k
        total = total - term / k
    return -_EULER_GAMMA - np.log(x) + total


def _e1_contfrac(x: np.ndarray) -> np.ndarray:
    """Continued fraction for E1 (modified Lentz downward), accurate for x >= 1."""
    tiny = 1e-300
    b = x + 1.0
    c = np.full_like(x, 1.0 / tiny)
    d = 1.0 / b
    h = d.copy()
    for k in range(1, 100):
        a = -float(k * k)
        b = b + 2.0
        d = a * d + b
        d = np.where(np.abs(d) < tiny, tiny, d)
        c = b + a / c
        c = np.where(np.abs(c) < tiny, tiny, c)
        d = 1.0 / d
        delta = c * d
        h = h * delta
        if np.all(np.abs(delta - 1.0) < 1e-16):
            break
    return np.exp(-x) * h


def exp_integral_e1(x):
    """Exponential integral E1(x) = int_x^inf exp(-t)/t dt for x > 0.

    Series below x = 1, continued fraction above; relative error below
    1e-12 across the domain.  Accepts a float or an ndarray.

    Raises
    ------
    DomainError
        For any argument <= 0.
    """
    arr = np.asarray(x, dtype=float)
    if np.any(arr <= 0.0) or not np.all(np.isfinite(arr)):
        raise DomainError("exp_integral_e1 requires x > 0")
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    out = np.empty_like(arr)
    lo = arr <= 1.0
    if np.any(lo):
        out[lo] = _e1_series(arr[lo])
    if np.any(~lo):
        out[~lo] = _e1_contfrac(arr[~lo])
    return float(out[0]) if scalar else out.reshape(np.shape(x))


class NoiseKernel:
    """Base class: a stationary, symmetric 3x3 covariance profile N(s)."""

    def matrix(self, s: float) -> np.ndarray:
        raise NotImplementedError

    def matrix_batch(self, s: np.ndarray) -> np.ndarray:
        """Profile evaluated on an array of lags; shape (len(s), 3, 3)."""
        return np.stack([self.matrix(float(v)) for v in np.asarray(s, dtype=float)])


def _unit_axis(axis) -> tuple[float, float, float]:
    a = np.asarray(axis, dtype=float)
    if a.shape != (3,) or not np.all(np.isfinite(a)):
        raise ValueError("axis must be a finite 3-vector")
    n = float(np.linalg.norm(a))
    if n == 0.0:
        raise ValueError("axis must be nonzero")
    return (a[0] / n, a[1] / n, a[2] / n)


@dataclass(frozen=True)
class OneOverF(NoiseKernel):
    """1/f kernel: xi * int_{gamma_lo}^{gamma_hi} dg/g exp(-g s) along a fixed axis.

    xi sets the strength (1/time^2), gamma_lo < gamma_hi are the decay-rate
    cutoffs (1/time).  The closed form uses the exponential integral so the
    optimizer can afford O(n^2) evaluations per iteration.
    """

    xi: float
    gamma_lo: float
    gamma_hi: float
    axis: tuple[float, float, float] = (1.0, 0.0, 0.0)

    def __post_init__(self):
        if not (self.xi > 0.0 and math.isfinite(self.xi)):
            raise ValueError("xi must be positive")
        if not (0.0 < self.gamma_lo < self.gamma_hi):
            raise ValueError("cutoffs must satisfy 0 < gamma_lo < gamma_hi")
        object.__setattr__(self, "axis", _unit_axis(self.axis))

    def scalar(self, s: float) -> float:
        """Along-axis entry of the profile at lag s >= 0."""
        if s < 0.0:
            raise ValueError("lag must be >= 0")
        if s == 0.0:
            return self.xi * math.log(self.gamma_hi / self.gamma_lo)
        return self.xi * (exp_integral_e1(self.gamma_lo * s) - exp_integral_e1(self.gamma_hi * s))

    def scalar_batch(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        out = np.full(s.shape, self.xi * math.log(self.gamma_hi / self.gamma_lo))
        pos = s > 0.0
        if np.any(pos):
            out[pos] = self.xi * (
                exp_integral_e1(self.gamma_lo * s[pos]) - exp_integral_e1(self.gamma_hi * s[pos])
            )
        return out

    def scalar_slope_at_zero(self) -> float:
        """One-sided lag derivative of the along-axis entry at s = 0+."""
        return self.xi * (self.gamma_lo - self.gamma_hi)

    def matrix(self, s: float) -> np.ndarray:
        a = np.asarray(self.axis)
        return self.scalar(s) * np.outer(a, a)

    def matrix_batch(self, s: np.ndarray) -> np.ndarray:
        a = np.asarray(self.axis)
        return self.scalar_batch(s)[:, None, None] * np.outer(a, a)


@dataclass(frozen=True)
class DiagonalConstant(NoiseKernel):
    """Lag-independent diagonal kernel (a random constant offset per axis)."""

    kappa: tuple[float, float, float]

    def __post_init__(self):
        k = tuple(float(v) for v in self.kappa)
        if len(k) != 3 or any(v < 0.0 or not math.isfinite(v) for v in k):
            raise ValueError("kappa must be three finite values >= 0")
        object.__setattr__(self, "kappa", k)

    def matrix(self, s: float) -> np.ndarray:
        return np.diag(self.kappa)

    def matrix_batch(self, s: np.ndarray) -> np.ndarray:
        return np.broadcast_to(np.diag(self.kappa), (len(s), 3, 3)).copy()


@dataclass(frozen=True)
class UserMatrix(NoiseKernel):
    """Kernel defined by a callback s -> symmetric 3x3 matrix."""

    fn: Callable[[float], np.ndarray] = field(repr=False)

    def matrix(self, s: float) -> np.ndarray:
        m = np.asarray(self.fn(float(s)), dtype=float)
        if m.shape != (3, 3):
            raise ValueError("user kernel callback must return a 3x3 matrix")
        if np.max(np.abs(m - m.T)) > 1e-12 * max(1.0, np.max(np.abs(m))):
            raise ValueError("user kernel callback returned an asymmetric matrix")
        return 0.5 * (m + m.T)


def kernel_eval(kernel: NoiseKernel, s: float) -> np.ndarray:
    """Covariance profile N(|t - t'|) at lag s >= 0, as a symmetric 3x3 matrix."""
    if s < 0.0:
        raise ValueError("lag must be >= 0")
    return kernel.matrix(float(s))


@dataclass(frozen=True)
class CovarianceOperator:
    """Assembled grid covariance and its (jittered) Cholesky factor.

    Layout: row/column index = component * n_nodes + node, i.e. three
    node-blocks for the x, y, z noise components.
    """

    kernel: NoiseKernel
    grid: TimeGrid
    matrix: np.ndarray
    factor: np.ndarray
    jitter: float

    def __post_init__(self):
        self.matrix.setflags(write=False)
        self.factor.setflags(write=False)


def assemble_covariance(kernel: NoiseKernel, grid: TimeGrid) -> CovarianceOperator:
    """Build the (3 n_nodes)^2 covariance N_ij(|t_a - t_b|) and factorize it.

    Cholesky is attempted with a diagonal jitter escalated from 0 through
    1e-8 of the largest diagonal entry; an all-zero kernel short-circuits to
    a zero factor.

    Raises
    ------
    NotPSD
        If every jitter level fails; the error carries an estimate of the
        most negative eigenvalue.
    """
    n = grid.n_nodes
    lags = grid.dt * np.arange(n)
    prof = kernel.matrix_batch(lags)  # (n, 3, 3)
    idx = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
    cov = np.empty((3 * n, 3 * n))
    for i in range(3):
        for j in range(3):
            cov[i * n : (i + 1) * n, j * n : (j + 1) * n] = prof[:, i, j][idx]
    cov = 0.5 * (cov + cov.T)

    max_diag = float(np.max(np.diag(cov)))
    if max_diag == 0.0 and np.all(cov == 0.0):
        zero = np.zeros_like(cov)
        return CovarianceOperator(kernel, grid, cov, zero, 0.0)

    eye = np.eye(3 * n)
    for jit in _JITTERS:
        try:
            factor = np.linalg.cholesky(cov + (jit * max_diag) * eye)
        except np.linalg.LinAlgError:
            continue
        return CovarianceOperator(kernel, grid, cov, factor, jit * max_diag)

    min_eig = float(np.linalg.eigvalsh(cov)[0])
    raise NotPSD(
        f"covariance not positive semidefinite within jitter ladder; "
        f"most negative eigenvalue ~ {min_eig:.3e}",
        min_eigenvalue=min_eig,
    )


@dataclass(frozen=True)
class NoiseSampleSet:
    """Zero-mean Gaussian noise paths drawn against an assembled covariance.

    ``paths`` has shape (count, 3, n_nodes): lab-frame components per node.
    """

    paths: np.ndarray
    seed: int
    kernel: NoiseKernel
    grid: TimeGrid

    def __post_init__(self):
        self.paths.setflags(write=False)

    @property
    def count(self) -> int:
        return self.paths.shape[0]


def _path_normals(seed: int, start: int, count: int, dim: int) -> np.ndarray:
    """Standard normals for paths [start, start+count), one substream each."""
    root = np.random.Philox(key=seed)
    out = np.empty((count, dim))
    for p in range(count):
        gen = np.random.Generator(root.jumped(start + p))
        out[p] = gen.standard_normal(dim)
    return out


def sample_block(cov: CovarianceOperator, seed: int, start: int, count: int) -> np.ndarray:
    """Paths for substreams [start, start + count); shape (count, 3, n_nodes)."""
    n = cov.grid.n_nodes
    z = _path_normals(seed, start, count, 3 * n)
    return (z @ cov.factor.T).reshape(count, 3, n)


def sample_paths(
    kernel: NoiseKernel,
    grid: TimeGrid,
    count: int,
    seed: int,
    cov: CovarianceOperator | None = None,
) -> NoiseSampleSet:
    """Draw independent zero-mean Gaussian paths with the grid covariance.

    Path p always draws its normals from Philox substream ``jumped(p)`` of
    the seed, so a given (seed, count) reproduces exactly and per-path
    generation parallelizes without coordination.  (The coloring matmul is
    batched, so prefixes of different-sized draws may differ at rounding
    level.)  A pre-assembled ``cov`` may be passed to skip refactorization.
    """
    if count < 0:
        raise ValueError("count must be >= 0")
    if cov is None:
        cov = assemble_covariance(kernel, grid)
    elif cov.grid != grid:
        raise ValueError("covariance operator was assembled on a different grid")
    paths = np.empty((count, 3, grid.n_nodes))
    for start in range(0, count, _SAMPLE_CHUNK):
        stop = min(start + _SAMPLE_CHUNK, count)
        paths[start:stop] = sample_block(cov, seed, start, stop - start)
    return NoiseSampleSet(paths, seed, kernel, grid)
