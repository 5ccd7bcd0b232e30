import math
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ..errors import InvalidParametersError
from ..metric import SymMat2, Vec2, as_vec2, frozen
from .base import CONTACT_TOLERANCE, BaseObstacle, Proximity


def dist_q_point(q: SymMat2, p: ArrayLike, point: ArrayLike) -> float:
    """|p - point|_Q, the norm rather than its square."""
    diff = as_vec2(p) - as_vec2(point)
    return math.sqrt(float(diff @ np.asarray(q, dtype=np.float64) @ diff))


class PointCloud(BaseObstacle):
    """
    Finite set of obstacle points, typically lidar returns.

    Points have no extent, so rays pass between them and only an exact
    (within the contact band) coincidence counts as contact.
    """

    def __init__(self, points: ArrayLike):
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        if len(pts) == 0:
            raise InvalidParametersError("point cloud must not be empty")
        if not np.all(np.isfinite(pts)):
            raise InvalidParametersError("point cloud has non-finite coordinates")
        self.points = frozen(pts)

    def __len__(self) -> int:
        return len(self.points)

    def __repr__(self) -> str:
        return f"PointCloud(n={len(self.points)})"

    def dist_q(self, q: SymMat2, p: Vec2) -> Proximity:
        diffs = self.points - as_vec2(p)
        values = np.einsum("ij,jk,ik->i", diffs, np.asarray(q, dtype=np.float64), diffs)
        i = int(np.argmin(values))
        return Proximity(math.sqrt(max(float(values[i]), 0.0)), self.points[i].copy())

    def ray_distances(
        self, origin: Vec2, directions: NDArray[np.float64], max_range: float
    ) -> NDArray[np.float64]:
        return np.full(len(directions), float(max_range))

    def distance(self, p: Vec2) -> float:
        return float(np.linalg.norm(self.points - as_vec2(p), axis=1).min())

    def contains(self, p: ArrayLike) -> bool:
        dists = np.linalg.norm(self.points - as_vec2(p), axis=1)
        return bool(dists.min() <= CONTACT_TOLERANCE)

    def blocks_segment(self, a: Vec2, b: Vec2) -> bool:
        av, bv = as_vec2(a), as_vec2(b)
        e = bv - av
        denom = float(e @ e)
        if denom == 0.0:
            return self.contains(av)
        t = np.clip((self.points - av) @ e / denom, 0.0, 1.0)
        gaps = np.linalg.norm(self.points - (av + t[:, None] * e), axis=1)
        return bool(gaps.min() <= CONTACT_TOLERANCE)

    def to_params(self) -> dict[str, Any]:
        return {"kind": "points", "points": self.points.tolist()}
