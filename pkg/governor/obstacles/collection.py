"""Collection class for querying a set of obstacles as one environment."""

import math
from collections.abc import Iterable, Iterator
from dataclasses import dataclass
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ..errors import InvalidParametersError
from ..metric import SymMat2, as_vec2, eig_sym2
from .base import BaseObstacle, Proximity


@dataclass(kw_only=True, frozen=True)
class Workspace:
    """Axis-aligned rectangle the robot operates in."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def __post_init__(self):
        values = (self.xmin, self.ymin, self.xmax, self.ymax)
        if not all(math.isfinite(v) for v in values):
            raise InvalidParametersError(f"workspace bounds {values} must be finite")
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise InvalidParametersError(f"workspace bounds {values} are degenerate")

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    def contains(self, p: ArrayLike) -> bool:
        x, y = as_vec2(p)
        return self.xmin <= x <= self.xmax and self.ymin <= y <= self.ymax

    def to_params(self) -> list[float]:
        return [self.xmin, self.ymin, self.xmax, self.ymax]


class Environment:
    """
    Static obstacles inside a workspace.

    The workspace rectangle bounds planning and drawing; it is not itself an
    obstacle, so free-space membership only looks at the obstacles.
    """

    def __init__(self, *obstacles: BaseObstacle, bounds: Workspace):
        self.obstacles = tuple(obstacles)
        self.bounds = bounds

    def __iter__(self) -> Iterator[BaseObstacle]:
        return iter(self.obstacles)

    def __len__(self) -> int:
        return len(self.obstacles)

    def with_obstacles(self, obstacles: Iterable[BaseObstacle]) -> "Environment":
        return Environment(*obstacles, bounds=self.bounds)

    def to_params(self) -> dict[str, Any]:
        return {
            "bounds": self.bounds.to_params(),
            "obstacles": [obstacle.to_params() for obstacle in self.obstacles],
        }

    def dist_q(self, q: SymMat2, p: ArrayLike) -> Proximity:
        """Smallest Q-distance over all obstacles; (inf, None, -1) when there are none."""
        pv = as_vec2(p)
        best = Proximity(math.inf, None, -1)
        if not self.obstacles:
            return best
        # |.|_Q >= sqrt(lam_min) |.|, so obstacles are visited nearest-first and pruned
        scale = math.sqrt(eig_sym2(q).lam_min)
        lower = [(scale * obstacle.distance(pv), index) for index, obstacle in enumerate(self.obstacles)]
        for bound, index in sorted(lower):
            if bound > best.dist:
                break
            found = self.obstacles[index].dist_q(q, pv)
            if found.dist < best.dist:
                best = Proximity(found.dist, found.witness, index)
        return best

    def clearance(self, p: ArrayLike) -> float:
        """Euclidean distance to the nearest obstacle, inf when there are none."""
        pv = as_vec2(p)
        return min((obstacle.distance(pv) for obstacle in self.obstacles), default=math.inf)

    def scan(self, origin: ArrayLike, angles: ArrayLike, max_range: float) -> NDArray[np.float64]:
        """Ranges of one lidar sweep, one per angle."""
        if not max_range > 0:
            raise InvalidParametersError(f"max_range={max_range} must be positive")
        theta = np.asarray(angles, dtype=np.float64).reshape(-1)
        directions = np.column_stack([np.cos(theta), np.sin(theta)])
        o = as_vec2(origin)
        ranges = np.full(len(theta), float(max_range))
        for obstacle in self.obstacles:
            ranges = np.minimum(ranges, obstacle.ray_distances(o, directions, max_range))
        return ranges

    def free_space_contains(self, p: ArrayLike) -> bool:
        pv = as_vec2(p)
        return not any(obstacle.contains(pv) for obstacle in self.obstacles)

    def blocks_segment(self, a: ArrayLike, b: ArrayLike) -> bool:
        av, bv = as_vec2(a), as_vec2(b)
        return any(obstacle.blocks_segment(av, bv) for obstacle in self.obstacles)


def dist_q_env(q: SymMat2, p: ArrayLike, env: Environment) -> Proximity:
    return env.dist_q(q, p)


def raycast(env: Environment, origin: ArrayLike, angle: float, max_range: float) -> float:
    """Distance to the first obstacle boundary along a ray, or max_range."""
    return float(env.scan(origin, [angle], max_range)[0])


def free_space_contains(env: Environment, p: ArrayLike) -> bool:
    return env.free_space_contains(p)
