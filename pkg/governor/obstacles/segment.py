import math
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ..errors import InvalidParametersError
from ..metric import SymMat2, Vec2, as_vec2, frozen, quad_norm_sq
from .base import CONTACT_TOLERANCE, BaseObstacle, Proximity, segment_distance, segments_intersect


def dist_q_segment(q: SymMat2, p: ArrayLike, a: ArrayLike, b: ArrayLike) -> Proximity:
    """Minimize |p - (a + t (b - a))|_Q over t in [0, 1]; the minimizer is clamped."""
    pv, av, bv = as_vec2(p), as_vec2(a), as_vec2(b)
    m = np.asarray(q, dtype=np.float64)
    d = bv - av
    denom = float(d @ m @ d)
    t = 0.0 if denom == 0.0 else min(1.0, max(0.0, float(d @ m @ (pv - av)) / denom))
    witness = av + t * d
    return Proximity(math.sqrt(quad_norm_sq(m, pv - witness)), witness)


class Segment(BaseObstacle):
    """Zero-thickness wall between two distinct points."""

    def __init__(self, a: ArrayLike, b: ArrayLike):
        self.a = frozen(as_vec2(a))
        self.b = frozen(as_vec2(b))
        if np.array_equal(self.a, self.b):
            raise InvalidParametersError(f"segment endpoints coincide at {self.a.tolist()}")

    def __repr__(self) -> str:
        return f"Segment(a={self.a.tolist()}, b={self.b.tolist()})"

    def dist_q(self, q: SymMat2, p: Vec2) -> Proximity:
        return dist_q_segment(q, p, self.a, self.b)

    def ray_distances(
        self, origin: Vec2, directions: NDArray[np.float64], max_range: float
    ) -> NDArray[np.float64]:
        # rays running along the wall line never report a hit
        e = self.b - self.a
        w = self.a - np.asarray(origin, dtype=np.float64)
        denom = directions[:, 0] * e[1] - directions[:, 1] * e[0]
        valid = np.abs(denom) > 1e-12
        safe = np.where(valid, denom, 1.0)
        t = (w[0] * e[1] - w[1] * e[0]) / safe
        s = (w[0] * directions[:, 1] - w[1] * directions[:, 0]) / safe
        hit = (
            valid
            & (t > CONTACT_TOLERANCE)
            & (s >= -CONTACT_TOLERANCE)
            & (s <= 1.0 + CONTACT_TOLERANCE)
        )
        return np.minimum(np.where(hit, t, np.inf), max_range)

    def distance(self, p: Vec2) -> float:
        return segment_distance(as_vec2(p), self.a, self.b)

    def contains(self, p: ArrayLike) -> bool:
        return segment_distance(as_vec2(p), self.a, self.b) <= CONTACT_TOLERANCE

    def blocks_segment(self, a: Vec2, b: Vec2) -> bool:
        return segments_intersect(as_vec2(a), as_vec2(b), self.a, self.b)

    def to_params(self) -> dict[str, Any]:
        return {"kind": "segment", "a": self.a.tolist(), "b": self.b.tolist()}
