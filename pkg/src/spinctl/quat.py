"""Quaternion algebra: the arithmetic substrate for rotations, controls and noise.

Scalar types (`Quat`, `PureQuat`, `UnitQuat`) are immutable and validated on
construction.  The module also exposes vectorized helpers operating on numpy
arrays of shape (..., 4) in (w, x, y, z) order, or (..., 3) for pure
quaternions; these power the batched inner loops elsewhere in the package.

Conventions: the basis satisfies e_i e_j = -delta_ij + eps_ijk e_k, a unit
quaternion u rotates a pure quaternion p via u p conj(u), and composing
rotations multiplies the later rotation on the left (u_total = u2 u1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AmbiguousAxis

__all__ = [
    "Quat",
    "PureQuat",
    "UnitQuat",
    "E1",
    "E2",
    "E3",
    "qmul",
    "umul",
    "qconj",
    "qdot",
    "qwedge",
    "qnorm",
    "qexp",
    "qlog",
    "rotate",
    "qmul_wxyz",
    "qconj_wxyz",
    "qexp_vec",
    "rotate_vec",
    "quat_to_matrix",
]

_UNIT_TOL = 1e-12
# Below this angle sin|p|/|p| switches to its Taylor series (controls near
# zero occur at the infinitely-stiff-constraint limit).
_EXP_SERIES_CUT = 1e-6


def _check_finite(*comps):
    for c in comps:
        if not math.isfinite(c):
            raise ValueError("quaternion component is not finite")


@dataclass(frozen=True)
class Quat:
    """General quaternion w + x e1 + y e2 + z e3."""

    w: float
    x: float
    y: float
    z: float

    def __post_init__(self):
        _check_finite(self.w, self.x, self.y, self.z)

    @property
    def scalar(self) -> float:
        return self.w

    @property
    def vector(self) -> "PureQuat":
        return PureQuat(self.x, self.y, self.z)

    def wxyz(self) -> tuple[float, float, float, float]:
        return (self.w, self.x, self.y, self.z)


@dataclass(frozen=True)
class PureQuat:
    """Quaternion with identically zero scalar part; behaves like a 3-vector."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        _check_finite(self.x, self.y, self.z)

    def wxyz(self) -> tuple[float, float, float, float]:
        return (0.0, self.x, self.y, self.z)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    @staticmethod
    def from_array(v) -> "PureQuat":
        x, y, z = (float(c) for c in v)
        return PureQuat(x, y, z)

    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)


@dataclass(frozen=True)
class UnitQuat:
    """Modulus-one quaternion representing a rotation."""

    w: float
    x: float
    y: float
    z: float

    def __post_init__(self):
        _check_finite(self.w, self.x, self.y, self.z)
        n = math.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2)
        if abs(n - 1.0) > _UNIT_TOL:
            raise ValueError(f"not a unit quaternion: |q| = {n!r}")

    @staticmethod
    def normalized(w: float, x: float, y: float, z: float) -> "UnitQuat":
        n = math.sqrt(w * w + x * x + y * y + z * z)
        if n == 0.0 or not math.isfinite(n):
            raise ValueError("cannot normalize a zero or non-finite quaternion")
        return UnitQuat(w / n, x / n, y / n, z / n)

    @property
    def scalar(self) -> float:
        return self.w

    @property
    def vector(self) -> PureQuat:
        return PureQuat(self.x, self.y, self.z)

    def wxyz(self) -> tuple[float, float, float, float]:
        return (self.w, self.x, self.y, self.z)


E1 = PureQuat(1.0, 0.0, 0.0)
E2 = PureQuat(0.0, 1.0, 0.0)
E3 = PureQuat(0.0, 0.0, 1.0)

IDENTITY = UnitQuat(1.0, 0.0, 0.0, 0.0)


def _wxyz(q) -> tuple[float, float, float, float]:
    """Coerce Quat/PureQuat/UnitQuat/real into component form."""
    if isinstance(q, (Quat, PureQuat, UnitQuat)):
        return q.wxyz()
    if isinstance(q, (int, float)):
        return (float(q), 0.0, 0.0, 0.0)
    raise TypeError(f"not a quaternion: {type(q).__name__}")


def _mul4(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return (
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by + ay * bw + az * bx - ax * bz,
        aw * bz + az * bw + ax * by - ay * bx,
    )


def qmul(p, q) -> Quat:
    """Geometric quaternion product p q (bilinear, non-commutative)."""
    return Quat(*_mul4(_wxyz(p), _wxyz(q)))


def umul(u2: UnitQuat, u1: UnitQuat) -> UnitQuat:
    """Compose rotations: u1 first, then u2.  Result is renormalized."""
    return UnitQuat.normalized(*_mul4(u2.wxyz(), u1.wxyz()))


def qconj(q):
    """Quaternion conjugate: scalar part kept, vector part negated.

    Preserves the input's type; satisfies conj(p q) = conj(q) conj(p).
    """
    if isinstance(q, PureQuat):
        return PureQuat(-q.x, -q.y, -q.z)
    if isinstance(q, UnitQuat):
        return UnitQuat(q.w, -q.x, -q.y, -q.z)
    w, x, y, z = _wxyz(q)
    return Quat(w, -x, -y, -z)


def qdot(p, q) -> float:
    """Symmetric dot product, the scalar part of (p conj(q) + q conj(p))/2.

    On pure quaternions this is the Euclidean 3-vector dot product.
    """
    pw, px, py, pz = _wxyz(p)
    qw, qx, qy, qz = _wxyz(q)
    return pw * qw + px * qx + py * qy + pz * qz


def qwedge(p, q) -> PureQuat:
    """Antisymmetric wedge product (pq - qp)/2; the cross product on pure inputs."""
    a = _mul4(_wxyz(p), _wxyz(q))
    b = _mul4(_wxyz(q), _wxyz(p))
    # Scalar parts cancel identically.
    return PureQuat(0.5 * (a[1] - b[1]), 0.5 * (a[2] - b[2]), 0.5 * (a[3] - b[3]))


def qnorm(q) -> float:
    """Quaternion modulus |q| = sqrt(q conj(q))."""
    w, x, y, z = _wxyz(q)
    return math.sqrt(w * w + x * x + y * y + z * z)


def qexp(p: PureQuat) -> UnitQuat:
    """Exponential of a pure quaternion: cos|p| + sin|p| p/|p|."""
    x, y, z = p.x, p.y, p.z
    theta = math.sqrt(x * x + y * y + z * z)
    if theta < _EXP_SERIES_CUT:
        t2 = theta * theta
        s = 1.0 - t2 / 6.0 + t2 * t2 / 120.0  # sin(theta)/theta
        return UnitQuat.normalized(1.0 - t2 / 2.0 + t2 * t2 / 24.0, s * x, s * y, s * z)
    s = math.sin(theta) / theta
    return UnitQuat.normalized(math.cos(theta), s * x, s * y, s * z)


def qlog(u: UnitQuat) -> PureQuat:
    """Principal logarithm of a unit quaternion, with |log(u)| <= pi.

    Raises
    ------
    AmbiguousAxis
        If u = -1 (rotation angle pi through the exponent, so the axis is
        undefined); the caller must supply a convention axis itself.
    """
    vn = math.sqrt(u.x**2 + u.y**2 + u.z**2)
    if vn < _UNIT_TOL:
        if u.w < 0.0:
            raise AmbiguousAxis("log(-1) is ambiguous: axis undefined at angle pi")
        return PureQuat(0.0, 0.0, 0.0)
    angle = math.atan2(vn, u.w)  # in (0, pi]
    f = angle / vn
    return PureQuat(f * u.x, f * u.y, f * u.z)


def rotate(u: UnitQuat, p: PureQuat) -> PureQuat:
    """Rotate a pure quaternion: u p conj(u).  Norm-preserving."""
    a = _mul4(u.wxyz(), p.wxyz())
    w, x, y, z = _mul4(a, (u.w, -u.x, -u.y, -u.z))
    # Scalar part vanishes up to rounding for unit u.
    return PureQuat(x, y, z)


# ---------------------------------------------------------------------------
# Vectorized array helpers.  Shapes: quaternions (..., 4) as (w, x, y, z),
# pure quaternions (..., 3).  No validation: callers own the invariants.
# ---------------------------------------------------------------------------


def qmul_wxyz(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Componentwise-batched quaternion product of (..., 4) arrays."""
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by + ay * bw + az * bx - ax * bz,
            aw * bz + az * bw + ax * by - ay * bx,
        ],
        axis=-1,
    )


def qconj_wxyz(a: np.ndarray) -> np.ndarray:
    out = a.copy()
    out[..., 1:] *= -1.0
    return out


def qexp_vec(v: np.ndarray) -> np.ndarray:
    """Batched exponential of pure quaternions (..., 3) -> unit (..., 4)."""
    v = np.asarray(v, dtype=float)
    theta = np.sqrt(np.sum(v * v, axis=-1))
    t2 = theta * theta
    small = theta < _EXP_SERIES_CUT
    with np.errstate(invalid="ignore", divide="ignore"):
        s = np.where(small, 1.0 - t2 / 6.0 + t2 * t2 / 120.0, np.sin(theta) / np.where(theta == 0.0, 1.0, theta))
    w = np.cos(theta)
    return np.concatenate([w[..., None], s[..., None] * v], axis=-1)


def rotate_vec(u: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Batched rotation u p conj(u): u is (..., 4) unit, p is (..., 3)."""
    w = u[..., :1]
    v = u[..., 1:]
    cv = np.cross(v, p)
    return p + 2.0 * (w * cv + np.cross(v, cv))


def quat_to_matrix(u: np.ndarray) -> np.ndarray:
    """Rotation matrices R with R @ p = components of u p conj(u); (..., 3, 3)."""
    w, x, y, z = u[..., 0], u[..., 1], u[..., 2], u[..., 3]
    out = np.empty(u.shape[:-1] + (3, 3), dtype=float)
    out[..., 0, 0] = 1.0 - 2.0 * (y * y + z * z)
    out[..., 0, 1] = 2.0 * (x * y - w * z)
    out[..., 0, 2] = 2.0 * (x * z + w * y)
    out[..., 1, 0] = 2.0 * (x * y + w * z)
    out[..., 1, 1] = 1.0 - 2.0 * (x * x + z * z)
    out[..., 1, 2] = 2.0 * (y * z - w * x)
    out[..., 2, 0] = 2.0 * (x * z - w * y)
    out[..., 2, 1] = 2.0 * (y * z + w * x)
    out[..., 2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return out
