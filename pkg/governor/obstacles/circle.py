import math
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import root_scalar

from ..errors import InvalidParametersError
from ..metric import SymMat2, Vec2, as_vec2, eig_sym2, frozen, quad_norm_sq
from .base import CONTACT_TOLERANCE, BaseObstacle, Proximity, segment_distance


def dist_q_circle(q: SymMat2, p: ArrayLike, center: ArrayLike, radius: float) -> Proximity:
    """
    Q-distance from p to the closed disk |u - center| <= radius.

    The minimizer lies on the circle at u = c + (Q + mu I)^-1 Q (p - c) where
    mu >= 0 solves |u - c| = radius. In the eigenbasis of Q that norm is
    |lam_i y_i / (lam_i + mu)|, which decreases monotonically in mu.
    """
    pv = as_vec2(p)
    c = as_vec2(center)
    shifted = pv - c
    norm = float(np.linalg.norm(shifted))
    if norm <= radius:
        return Proximity(0.0, pv)

    lam_min, lam_max, v_min, v_max = eig_sym2(q)
    if lam_min == lam_max:
        witness = c + radius * shifted / norm
        return Proximity(math.sqrt(lam_min) * (norm - radius), witness)
    lams = np.array([lam_min, lam_max])
    basis = np.column_stack([v_min, v_max])
    y = basis.T @ shifted

    def excess(mu: float) -> float:
        return float(np.linalg.norm(lams * y / (lams + mu))) - radius

    upper = lam_max * norm / radius
    if excess(upper) > 0.0:
        upper *= 2.0
    mu = root_scalar(excess, bracket=(0.0, upper), method="brentq", xtol=1e-14 * max(1.0, upper)).root
    local = basis @ (lams * y / (lams + mu))
    witness = c + radius * local / float(np.linalg.norm(local))
    return Proximity(math.sqrt(quad_norm_sq(q, pv - witness)), witness)


class Circle(BaseObstacle):
    def __init__(self, center: ArrayLike, radius: float):
        if not (radius > 0 and math.isfinite(radius)):
            raise InvalidParametersError(f"circle radius {radius} must be positive")
        self.center = frozen(as_vec2(center))
        self.radius = float(radius)

    def __repr__(self) -> str:
        return f"Circle(center={self.center.tolist()}, radius={self.radius})"

    def dist_q(self, q: SymMat2, p: Vec2) -> Proximity:
        return dist_q_circle(q, p, self.center, self.radius)

    def ray_distances(
        self, origin: Vec2, directions: NDArray[np.float64], max_range: float
    ) -> NDArray[np.float64]:
        rel = np.asarray(origin, dtype=np.float64) - self.center
        half_b = directions @ rel
        c = float(rel @ rel) - self.radius**2
        disc = half_b**2 - c
        root = np.sqrt(np.maximum(disc, 0.0))
        near = -half_b - root
        far = -half_b + root
        hit = np.where(near > CONTACT_TOLERANCE, near, np.where(far > CONTACT_TOLERANCE, far, np.inf))
        hit = np.where(disc >= 0.0, hit, np.inf)
        return np.minimum(hit, max_range)

    def distance(self, p: Vec2) -> float:
        return max(0.0, float(np.linalg.norm(as_vec2(p) - self.center)) - self.radius)

    def contains(self, p: ArrayLike) -> bool:
        return float(np.linalg.norm(as_vec2(p) - self.center)) <= self.radius

    def blocks_segment(self, a: Vec2, b: Vec2) -> bool:
        return segment_distance(self.center, as_vec2(a), as_vec2(b)) <= self.radius

    def to_params(self) -> dict[str, Any]:
        return {"kind": "circle", "center": self.center.tolist(), "radius": self.radius}
