"""
Directional quadratic metrics on the plane.

A directional matrix Q[v] has eigenvalue c1 along v and c2 > c1 across it, so
its unit ellipsoid is elongated in the direction of motion. Every quantity in
the package is two dimensional; vectors are float arrays of shape (2,) and
symmetric matrices are float arrays of shape (2, 2).
"""

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import InvalidParametersError

Vec2 = NDArray[np.float64]
SymMat2 = NDArray[np.float64]

# below this norm a direction is treated as the zero vector
ZERO_DIRECTION_THRESHOLD = 1e-9
# absolute slack on the quadratic form for ellipsoid membership
MEMBERSHIP_TOLERANCE = 1e-9


def as_vec2(p: ArrayLike) -> Vec2:
    """Convert to a finite float vector of shape (2,)."""
    v = np.asarray(p, dtype=np.float64).reshape(-1)
    if v.shape != (2,):
        raise InvalidParametersError(f"expected a 2-vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise InvalidParametersError(f"vector {v.tolist()} has non-finite components")
    return v


def frozen(a: NDArray[np.float64]) -> NDArray[np.float64]:
    """Return a read-only copy of an array."""
    out = np.array(a, dtype=np.float64)
    out.setflags(write=False)
    return out


class Eigen2(NamedTuple):
    lam_min: float
    lam_max: float
    v_min: Vec2
    v_max: Vec2


def _canonical(v: Vec2) -> Vec2:
    if v[0] < 0 or (v[0] == 0 and v[1] < 0):
        return -v
    return v


def eig_sym2(q: ArrayLike) -> Eigen2:
    """Closed-form eigendecomposition of a symmetric 2x2 matrix."""
    m = np.asarray(q, dtype=np.float64)
    a, b, d = m[0, 0], 0.5 * (m[0, 1] + m[1, 0]), m[1, 1]
    mean = 0.5 * (a + d)
    radius = math.hypot(0.5 * (a - d), b)
    if radius == 0.0:
        return Eigen2(mean, mean, np.array([1.0, 0.0]), np.array([0.0, 1.0]))
    theta = 0.5 * math.atan2(2.0 * b, a - d)
    v_max = np.array([math.cos(theta), math.sin(theta)])
    v_min = np.array([-math.sin(theta), math.cos(theta)])
    return Eigen2(mean - radius, mean + radius, _canonical(v_min), _canonical(v_max))


def sqrtm_sym2(q: ArrayLike) -> SymMat2:
    """Principal square root of a symmetric positive semi-definite 2x2 matrix."""
    lam_min, lam_max, v_min, v_max = eig_sym2(q)
    root = math.sqrt(max(lam_min, 0.0)) * np.outer(v_min, v_min) + math.sqrt(
        max(lam_max, 0.0)
    ) * np.outer(v_max, v_max)
    return 0.5 * (root + root.T)


def is_positive_definite(q: ArrayLike) -> bool:
    m = np.asarray(q, dtype=np.float64)
    return bool(m[0, 1] == m[1, 0] and eig_sym2(m).lam_min > 0.0)


@dataclass(kw_only=True, frozen=True, eq=False)
class DirectionalMatrix:
    """Q[v] together with the parameters that generated it."""

    q: SymMat2
    c1: float
    c2: float
    dir: Vec2

    def __post_init__(self):
        _check_weights(self.c1, self.c2)

    @property
    def is_isotropic(self) -> bool:
        return float(np.linalg.norm(self.dir)) < ZERO_DIRECTION_THRESHOLD


@dataclass(kw_only=True, frozen=True, eq=False)
class IsotropicMatrix:
    """scale * I, the metric of the Euclidean zones."""

    q: SymMat2
    scale: float

    def __post_init__(self):
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise InvalidParametersError(f"scale={self.scale} must be positive and finite")

    @property
    def is_isotropic(self) -> bool:
        return True


def isotropic_matrix(scale: float = 1.0) -> IsotropicMatrix:
    return IsotropicMatrix(q=frozen(scale * np.eye(2)), scale=float(scale))


def _check_weights(c1: float, c2: float) -> None:
    if not (math.isfinite(c1) and math.isfinite(c2)):
        raise InvalidParametersError(f"c1={c1}, c2={c2} must be finite")
    if c1 <= 0:
        raise InvalidParametersError(f"c1={c1} must be positive")
    if c2 <= c1:
        raise InvalidParametersError(f"c2={c2} must exceed c1={c1}")


def directional_matrix(v: ArrayLike, c1: float, c2: float) -> DirectionalMatrix:
    """Build Q[v] = c2 I + (c1 - c2) v v^T / |v|^2, or c1 I for a (near) zero v."""
    _check_weights(c1, c2)
    direction = as_vec2(v)
    norm_sq = float(direction @ direction)
    if math.sqrt(norm_sq) < ZERO_DIRECTION_THRESHOLD:
        q = c1 * np.eye(2)
    else:
        q = c2 * np.eye(2) + (c1 - c2) * np.outer(direction, direction) / norm_sq
        # outer() is symmetric up to rounding of the off-diagonal products
        q[1, 0] = q[0, 1]
    return DirectionalMatrix(q=frozen(q), c1=float(c1), c2=float(c2), dir=frozen(direction))


def quad_norm_sq(q: ArrayLike, x: ArrayLike) -> float:
    """Return x^T q x."""
    m = np.asarray(q, dtype=np.float64)
    v = np.asarray(x, dtype=np.float64)
    return float(v @ m @ v)


@dataclass(kw_only=True, frozen=True, eq=False)
class Ellipsoid:
    """E_Q(center, level) = {p : (p - center)^T q (p - center) <= level}."""

    center: Vec2
    q: SymMat2
    level: float

    def __post_init__(self):
        if not self.level >= 0:
            raise InvalidParametersError(f"ellipsoid level {self.level} must be >= 0")
        object.__setattr__(self, "center", frozen(as_vec2(self.center)))
        object.__setattr__(self, "q", frozen(self.q))

    def contains(self, p: ArrayLike) -> bool:
        return ellipsoid_contains(self, p)

    def semi_axes(self) -> tuple[float, float, float]:
        """Semi-axis lengths (major, minor) and the major-axis angle in radians."""
        lam_min, lam_max, v_min, _ = eig_sym2(self.q)
        if math.isinf(self.level):
            return math.inf, math.inf, math.atan2(v_min[1], v_min[0])
        return (
            math.sqrt(self.level / lam_min),
            math.sqrt(self.level / lam_max),
            math.atan2(v_min[1], v_min[0]),
        )

    def replace(self, **kwargs) -> "Ellipsoid":
        return replace(self, **kwargs)


def ellipsoid_contains(e: Ellipsoid, p: ArrayLike) -> bool:
    if math.isinf(e.level):
        return True
    diff = np.asarray(p, dtype=np.float64) - e.center
    return quad_norm_sq(e.q, diff) <= e.level + MEMBERSHIP_TOLERANCE


def ellipse_area(q: ArrayLike, level: float) -> float:
    """Area of E_q(., level)."""
    m = np.asarray(q, dtype=np.float64)
    return math.pi * level / math.sqrt(float(np.linalg.det(m)))
