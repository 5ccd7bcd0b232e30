from abc import ABCMeta, abstractmethod
from typing import Any, NamedTuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ..metric import SymMat2, Vec2

# contact band for zero-thickness shapes and ray parameters
CONTACT_TOLERANCE = 1e-9


class Proximity(NamedTuple):
    """Result of a Q-distance query: distance, closest obstacle point and obstacle index."""

    dist: float
    witness: Vec2 | None
    index: int = -1


class BaseObstacle(metaclass=ABCMeta):
    """Abstract base class for static obstacles in the plane."""

    @abstractmethod
    def dist_q(self, q: SymMat2, p: Vec2) -> Proximity:
        """Q-distance from p to the obstacle and the point that attains it."""
        ...

    @abstractmethod
    def ray_distances(
        self, origin: Vec2, directions: NDArray[np.float64], max_range: float
    ) -> NDArray[np.float64]:
        """First hit distance along each unit direction (rows), or max_range."""
        ...

    @abstractmethod
    def distance(self, p: Vec2) -> float:
        """Euclidean distance from p to the obstacle."""
        ...

    @abstractmethod
    def contains(self, p: ArrayLike) -> bool:
        """True when p touches or lies inside the obstacle."""
        ...

    @abstractmethod
    def blocks_segment(self, a: Vec2, b: Vec2) -> bool:
        """True when the closed segment ab meets the obstacle."""
        ...

    @abstractmethod
    def to_params(self) -> dict[str, Any]:
        raise NotImplementedError


def point_segment_param(p: Vec2, a: Vec2, b: Vec2) -> float:
    """Parameter in [0, 1] of the Euclidean projection of p onto segment ab."""
    e = b - a
    denom = float(e @ e)
    if denom == 0.0:
        return 0.0
    return min(1.0, max(0.0, float((p - a) @ e) / denom))


def segment_distance(p: Vec2, a: Vec2, b: Vec2) -> float:
    t = point_segment_param(p, a, b)
    return float(np.linalg.norm(p - (a + t * (b - a))))


def _cross(u: Vec2, v: Vec2) -> float:
    return float(u[0] * v[1] - u[1] * v[0])


def segments_intersect(p0: Vec2, p1: Vec2, a: Vec2, b: Vec2) -> bool:
    """Closed segments p0p1 and ab share a point (within the contact band)."""
    if min(segment_distance(p0, a, b), segment_distance(p1, a, b)) <= CONTACT_TOLERANCE:
        return True
    if min(segment_distance(a, p0, p1), segment_distance(b, p0, p1)) <= CONTACT_TOLERANCE:
        return True
    d1 = _cross(b - a, p0 - a)
    d2 = _cross(b - a, p1 - a)
    d3 = _cross(p1 - p0, a - p0)
    d4 = _cross(p1 - p0, b - p0)
    return d1 * d2 < 0 and d3 * d4 < 0
