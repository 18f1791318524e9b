"""Exact and perturbative summation of the ordered exponential of a rotating field.

Given a pure-quaternion field n(t) sampled on a uniform grid, the ordered
product T exp((eps/2) int n dt) equals exp((eps/2) m(tau)) for a single
rotation vector m(t).  This module provides:

* ``time_ordered_exp`` -- the brute-force ordered midpoint product (the
  oracle everything else is checked against),
* ``solve_m_ode``      -- the exact first-order ODE for m(t), an all-orders
  resummation of the perturbative (Magnus-type) series,
* ``magnus_term``      -- individual perturbative orders 0..2,
* ``magnus_iterate``   -- fixed-point iteration of the exact equation,
* ``bernoulli``        -- the Bernoulli numbers entering the series.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Callable, NamedTuple

import numpy as np

from .errors import NonConvergence, SingularCot, UnsupportedOrder
from .quat import PureQuat, UnitQuat, qexp_vec

__all__ = [
    "TimeGrid",
    "PurePath",
    "EpsilonStrength",
    "time_ordered_exp",
    "solve_m_ode",
    "n_of_m",
    "magnus_term",
    "magnus_iterate",
    "MagnusIterateResult",
    "bernoulli",
    "random_smooth_path",
]

# Half-width (in radians of eps*|m|) of the refusal band around the
# cotangent poles at nonzero multiples of 2*pi.
COT_GUARD_BAND = 0.05


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_k = k * tau / n_steps on the transit interval [0, tau]."""

    tau: float
    n_steps: int

    def __post_init__(self):
        if not (math.isfinite(self.tau) and self.tau > 0.0):
            raise ValueError(f"tau must be positive and finite, got {self.tau!r}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 2:
            raise ValueError(f"n_steps must be an integer >= 2, got {self.n_steps!r}")

    @property
    def dt(self) -> float:
        return self.tau / self.n_steps

    @property
    def n_nodes(self) -> int:
        return self.n_steps + 1

    @cached_property
    def nodes(self) -> np.ndarray:
        t = np.linspace(0.0, self.tau, self.n_steps + 1)
        t.setflags(write=False)
        return t

    def refined(self, factor: int = 2) -> "TimeGrid":
        return TimeGrid(self.tau, self.n_steps * factor)


@dataclass(frozen=True)
class PurePath:
    """A pure-quaternion-valued trajectory sampled on a TimeGrid.

    ``values`` has shape (n_nodes, 3) holding the static-basis components of
    the field at each node.  Immutable after construction.
    """

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.values, dtype=float))
        if v.shape != (self.grid.n_nodes, 3):
            raise ValueError(f"values must have shape ({self.grid.n_nodes}, 3), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("path values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @staticmethod
    def from_function(grid: TimeGrid, fn: Callable[[float], tuple]) -> "PurePath":
        vals = np.array([fn(t) for t in grid.nodes], dtype=float)
        return PurePath(grid, vals)

    def at(self, k: int) -> PureQuat:
        x, y, z = self.values[k]
        return PureQuat(float(x), float(y), float(z))

    def sup_norm(self) -> float:
        return float(np.max(np.sqrt(np.sum(self.values**2, axis=1))))

    def with_values(self, values: np.ndarray) -> "PurePath":
        return PurePath(self.grid, values)


@dataclass(frozen=True)
class EpsilonStrength:
    """Dimensionless strength of the stochastic field."""

    epsilon: float

    def __post_init__(self):
        if not (math.isfinite(self.epsilon) and self.epsilon >= 0.0):
            raise ValueError(f"epsilon must be finite and >= 0, got {self.epsilon!r}")

    def __float__(self) -> float:
        return self.epsilon


def _as_eps(epsilon) -> float:
    return float(epsilon)


# ---------------------------------------------------------------------------
# Ordered exponential (oracle)
# ---------------------------------------------------------------------------


def time_ordered_exp(n: PurePath, epsilon) -> UnitQuat:
    """Ordered product of per-step factors exp((eps/2) n(t*) dt), later steps left.

    Midpoint sampling t* = (t_k + t_{k+1})/2 with the field linearly
    interpolated between nodes; converges at second order in dt.
    """
    eps = _as_eps(epsilon)
    v = n.values
    dt = n.grid.dt
    steps = qexp_vec(0.25 * eps * dt * (v[:-1] + v[1:])).tolist()
    w, x, y, z = 1.0, 0.0, 0.0, 0.0
    k = 0
    for bw, bx, by, bz in steps:
        w, x, y, z = (
            bw * w - bx * x - by * y - bz * z,
            bw * x + bx * w + by * z - bz * y,
            bw * y + by * w + bz * x - bx * z,
            bw * z + bz * w + bx * y - by * x,
        )
        k += 1
        if not k % 512:
            s = 1.0 / math.sqrt(w * w + x * x + y * y + z * z)
            w, x, y, z = w * s, x * s, y * s, z * s
    return UnitQuat.normalized(w, x, y, z)


def ordered_exp_batch(values: np.ndarray, epsilon, dt: float) -> np.ndarray:
    """Ordered midpoint product for a batch of sampled fields.

    ``values`` has shape (batch, n_nodes, 3); returns unit quaternions of
    shape (batch, 4).  Same discretization as ``time_ordered_exp``.
    """
    eps = _as_eps(epsilon)
    steps = qexp_vec(0.25 * eps * dt * (values[:, :-1, :] + values[:, 1:, :]))
    acc = np.zeros(values.shape[:1] + (4,))
    acc[:, 0] = 1.0
    for k in range(steps.shape[1]):
        b = steps[:, k, :]
        bw, bx, by, bz = b[:, 0], b[:, 1], b[:, 2], b[:, 3]
        aw, ax, ay, az = acc[:, 0], acc[:, 1], acc[:, 2], acc[:, 3]
        acc = np.stack(
            [
                bw * aw - bx * ax - by * ay - bz * az,
                bw * ax + bx * aw + by * az - bz * ay,
                bw * ay + by * aw + bz * ax - bx * az,
                bw * az + bz * aw + bx * ay - by * ax,
            ],
            axis=1,
        )
        if k % 512 == 511:
            acc /= np.sqrt(np.sum(acc * acc, axis=1))[:, None]
    acc /= np.sqrt(np.sum(acc * acc, axis=1))[:, None]
    return acc


# ---------------------------------------------------------------------------
# Exact rotation-vector ODE
# ---------------------------------------------------------------------------

# (1 - (y/2) cot(y/2)) / y^2 as a series in y^2; accurate to ~1e-12 for y < 1/2.
_H_SERIES = (
    1.0 / 12.0,
    1.0 / 720.0,
    1.0 / 30240.0,
    1.0 / 1209600.0,
    1.0 / 47900160.0,
)
_H_SERIES_CUT2 = 0.25  # switch on y^2


def _h_of_y2(y2: float) -> float:
    """Smooth coefficient h(y) = (1 - (y/2) cot(y/2)) / y^2, h(0) = 1/12."""
    if y2 < _H_SERIES_CUT2:
        return (
            _H_SERIES[0]
            + y2 * (_H_SERIES[1] + y2 * (_H_SERIES[2] + y2 * (_H_SERIES[3] + y2 * _H_SERIES[4])))
        )
    y = math.sqrt(y2)
    return (1.0 - 0.5 * y / math.tan(0.5 * y)) / y2


def _check_cot_guard(y: float, t: float):
    if y > math.pi:
        k = round(y / (2.0 * math.pi))
        if k >= 1 and abs(y - 2.0 * math.pi * k) < COT_GUARD_BAND:
            raise SingularCot(
                f"eps*|m| = {y:.6f} entered the guard band around 2*pi*{k} near t = {t:.6g}; "
                "refine the grid or reduce epsilon",
                t_cross=t,
            )


def _interval_midpoints(v: np.ndarray) -> np.ndarray:
    """Cubic (4-point) interpolation of node samples at interval midpoints."""
    n_nodes = v.shape[0]
    if n_nodes < 4:
        return 0.5 * (v[:-1] + v[1:])
    mids = np.empty((n_nodes - 1, v.shape[1]))
    mids[1:-1] = (-v[:-3] + 9.0 * v[1:-2] + 9.0 * v[2:-1] - v[3:]) / 16.0
    mids[0] = (5.0 * v[0] + 15.0 * v[1] - 5.0 * v[2] + v[3]) / 16.0
    mids[-1] = (v[-4] - 5.0 * v[-3] + 15.0 * v[-2] + 5.0 * v[-1]) / 16.0
    return mids


def solve_m_ode(n: PurePath, epsilon) -> PurePath:
    """Integrate the exact rotation-vector equation from m(0) = 0.

    The returned path m(t) satisfies
    exp((eps/2) m(t)) = T exp((eps/2) int_0^t n dt) at every node, i.e. it is
    the all-orders resummation of the perturbative series.  Classic
    fourth-order Runge-Kutta with cubic midpoint interpolation of n.

    Raises
    ------
    SingularCot
        When eps*|m| approaches a nonzero multiple of 2*pi, where the
        right-hand side has a cotangent pole and exp((eps/2) m) = -1 makes
        the continuation ambiguous.
    """
    eps = _as_eps(epsilon)
    v = n.values
    dt = n.grid.dt
    nodes = n.grid.nodes
    mids = _interval_midpoints(v)
    half_eps = 0.5 * eps
    eps2 = eps * eps

    def rhs(nx, ny, nz, mx, my, mz):
        cx = my * nz - mz * ny
        cy = mz * nx - mx * nz
        cz = mx * ny - my * nx
        m2 = mx * mx + my * my + mz * mz
        h = _h_of_y2(eps2 * m2)
        mdotn = mx * nx + my * ny + mz * nz
        # m x (m x n) = m (m.n) - n |m|^2
        f = eps2 * h
        return (
            nx - half_eps * cx + f * (mx * mdotn - nx * m2),
            ny - half_eps * cy + f * (my * mdotn - ny * m2),
            nz - half_eps * cz + f * (mz * mdotn - nz * m2),
        )

    out = np.empty_like(v)
    out[0] = 0.0
    mx = my = mz = 0.0
    h2 = 0.5 * dt
    h6 = dt / 6.0
    pts = v.tolist()
    midl = mids.tolist()
    for k in range(v.shape[0] - 1):
        n0x, n0y, n0z = pts[k]
        nmx, nmy, nmz = midl[k]
        n1x, n1y, n1z = pts[k + 1]
        k1 = rhs(n0x, n0y, n0z, mx, my, mz)
        k2 = rhs(nmx, nmy, nmz, mx + h2 * k1[0], my + h2 * k1[1], mz + h2 * k1[2])
        k3 = rhs(nmx, nmy, nmz, mx + h2 * k2[0], my + h2 * k2[1], mz + h2 * k2[2])
        k4 = rhs(n1x, n1y, n1z, mx + dt * k3[0], my + dt * k3[1], mz + dt * k3[2])
        mx += h6 * (k1[0] + 2.0 * (k2[0] + k3[0]) + k4[0])
        my += h6 * (k1[1] + 2.0 * (k2[1] + k3[1]) + k4[1])
        mz += h6 * (k1[2] + 2.0 * (k2[2] + k3[2]) + k4[2])
        _check_cot_guard(eps * math.sqrt(mx * mx + my * my + mz * mz), nodes[k + 1])
        out[k + 1] = (mx, my, mz)
    return PurePath(n.grid, out)


def _central_diff(v: np.ndarray, dt: float) -> np.ndarray:
    """Second-order time derivative: central interior, one-sided ends."""
    d = np.empty_like(v)
    d[1:-1] = (v[2:] - v[:-2]) / (2.0 * dt)
    d[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * dt)
    d[-1] = (3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * dt)
    return d


def n_of_m(m: PurePath, epsilon) -> PurePath:
    """Recover the field n(t) generating a given rotation-vector history.

    Exact inverse of ``solve_m_ode`` up to finite-difference error:
    n = (dm/dt).m_hat m_hat + (sin eps m / eps) dm_hat/dt
      + ((1 - cos eps m)/eps) m_hat x dm_hat/dt,
    implemented in a form that stays smooth as |m| -> 0 (where it reduces to
    n = dm/dt, which is also the eps -> 0 limit).
    """
    eps = _as_eps(epsilon)
    v = m.values
    dm = _central_diff(v, m.grid.dt)
    m2 = np.sum(v * v, axis=1)
    y2 = (eps * eps) * m2
    y = np.sqrt(y2)

    small = y < 1e-4
    with np.errstate(invalid="ignore", divide="ignore"):
        sinc = np.where(small, 1.0 - y2 / 6.0 + y2 * y2 / 120.0, np.sin(y) / np.where(y == 0.0, 1.0, y))
        gcos = np.where(small, 0.5 - y2 / 24.0 + y2 * y2 / 720.0, (1.0 - np.cos(y)) / np.where(y2 == 0.0, 1.0, y2))
        # (1 - sinc y)/y^2, finite at 0
        acoef = np.where(small, 1.0 / 6.0 - y2 / 120.0 + y2 * y2 / 5040.0, (1.0 - sinc) / np.where(y2 == 0.0, 1.0, y2))

    mdotdm = np.sum(v * dm, axis=1)
    cross = np.cross(v, dm)
    out = (
        sinc[:, None] * dm
        + (eps * eps) * (acoef * mdotdm)[:, None] * v
        + eps * gcos[:, None] * cross
    )
    return PurePath(m.grid, out)


# ---------------------------------------------------------------------------
# Perturbative orders and fixed-point iteration
# ---------------------------------------------------------------------------


def _cumtrapz(y: np.ndarray, dt: float) -> np.ndarray:
    """Cumulative trapezoid along axis 0, starting at zero."""
    out = np.zeros_like(y)
    np.cumsum(0.5 * dt * (y[1:] + y[:-1]), axis=0, out=out[1:])
    return out


def magnus_term(n: PurePath, order: int) -> PurePath:
    """Perturbative term of the stated order in the strength parameter.

    Order 0 is the running integral of n; order 1 the ordered double
    integral of n^n; order 2 the two nested triple-wedge integrals.  All
    quadratures are iterated trapezoids on the path's grid.
    """
    if order not in (0, 1, 2):
        raise UnsupportedOrder(f"perturbative order {order} not implemented (0..2 supported)")
    v = n.values
    dt = n.grid.dt
    m0 = _cumtrapz(v, dt)
    if order == 0:
        return PurePath(n.grid, m0)
    m1 = 0.5 * _cumtrapz(np.cross(v, m0), dt)
    if order == 1:
        return PurePath(n.grid, m1)
    # Second piece needs the running outer-product integral of n (x) m0.
    outer = _cumtrapz(v[:, :, None] * m0[:, None, :], dt)  # (n, 3, 3)
    scal = _cumtrapz(np.sum(v * m0, axis=1), dt)  # (n,)
    piece1 = _cumtrapz(np.cross(v, 2.0 * m1), dt)
    inner2 = np.einsum("kab,kb->ka", outer, v) - scal[:, None] * v
    piece2 = _cumtrapz(inner2, dt)
    return PurePath(n.grid, (piece1 + piece2) / 6.0)


class MagnusIterateResult(NamedTuple):
    """Fixed-point iterate plus the sup-norm change of the final step."""

    path: PurePath
    final_change: float


def magnus_iterate(n: PurePath, epsilon, iterations: int) -> MagnusIterateResult:
    """Solve the exact rotation-vector equation by fixed-point iteration.

    Iterate 0 is the running integral of n; each subsequent iterate
    re-integrates the exact right-hand side evaluated on the previous one.
    Unlike the order-by-order expansion, every iterate beyond the first
    mixes all orders of the strength parameter.

    Raises
    ------
    NonConvergence
        If the sup-norm step change grows for three consecutive iterations
        (the iterates can oscillate for very strong fields).
    """
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    eps = _as_eps(epsilon)
    v = n.values
    dt = n.grid.dt
    eps2 = eps * eps

    cur = _cumtrapz(v, dt)
    change = math.inf
    changes: list[float] = []
    grew = 0
    for _ in range(iterations):
        m2 = np.sum(cur * cur, axis=1)
        h = np.array([_h_of_y2(y2) for y2 in eps2 * m2])
        mdotn = np.sum(cur * v, axis=1)
        rhs = (
            v
            - 0.5 * eps * np.cross(cur, v)
            + (eps2 * h)[:, None] * (cur * mdotn[:, None] - v * m2[:, None])
        )
        nxt = _cumtrapz(rhs, dt)
        change = float(np.max(np.sqrt(np.sum((nxt - cur) ** 2, axis=1))))
        if changes and change > changes[-1]:
            grew += 1
            if grew >= 3:
                raise NonConvergence(
                    f"iterate changes grew for 3 consecutive steps: {changes[-2:] + [change]}",
                    changes=changes + [change],
                )
        else:
            grew = 0
        changes.append(change)
        cur = nxt
    return MagnusIterateResult(PurePath(n.grid, cur), change if iterations > 0 else 0.0)


def random_smooth_path(
    grid: TimeGrid,
    rng: np.random.Generator,
    amplitude: float = 0.1,
    harmonics: int = 3,
) -> PurePath:
    """Band-limited random field for consistency checks.

    Each component is a sum of Fourier modes h = 1..harmonics on [0, tau]
    with Gaussian coefficients of standard deviation amplitude / h^2, so the
    field is smooth enough for second-order product formulas to resolve.
    """
    t = grid.nodes / grid.tau
    vals = np.zeros((grid.n_nodes, 3))
    for h in range(1, harmonics + 1):
        a = rng.normal(0.0, amplitude / h**2, size=3)
        b = rng.normal(0.0, amplitude / h**2, size=3)
        phase = 2.0 * math.pi * h * t
        vals += np.outer(np.cos(phase), a) + np.outer(np.sin(phase), b)
    return PurePath(grid, vals)


def bernoulli(j: int) -> Fraction:
    """Bernoulli number B_j (B_1 = -1/2 convention) via the explicit double sum."""
    if j < 0 or j > 20:
        raise ValueError("bernoulli(j) supports 0 <= j <= 20")
    total = Fraction(0)
    for k in range(j + 1):
        for el in range(k + 1):
            term = Fraction(
                (-1) ** el * math.factorial(k) * el**j,
                math.factorial(el) * math.factorial(k - el) * (k + 1),
            )
            total += term
    return total
