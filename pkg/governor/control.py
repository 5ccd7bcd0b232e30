"""
Robot-governor control laws.

The robot tracks the governor g with the PD law u = -2k (x - g) - zeta x',
and the governor chases the local projected goal: the farthest point of the
navigation path that lies inside the local safe zone, an ellipsoid around g
whose level is the directional clearance d_Q(g, O)^2 minus the bound on the
robot's future excursion.
"""

import math
from dataclasses import dataclass, field, replace
from enum import StrEnum
from typing import NamedTuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .bounds import DoubleIntegratorGains, build_double_integrator, peak, relaxed_peak
from .errors import InvalidParametersError, InvalidPathError, NoFeasibleAlphaError
from .metric import (
    DirectionalMatrix,
    Ellipsoid,
    IsotropicMatrix,
    Vec2,
    as_vec2,
    directional_matrix,
    frozen,
    isotropic_matrix,
)
from .obstacles import Environment


class BoundMode(StrEnum):
    """Which output-peak value drives the safe zone."""

    EXACT = "exact"
    RELAXED = "relaxed"
    MONITOR = "monitor"


@dataclass(kw_only=True, frozen=True)
class ControllerParams:
    k: float = 1.0
    zeta: float = 2.0 * math.sqrt(2.0)
    kg: float = 1.0
    c1: float = 1.0
    c2: float = 4.0

    def __post_init__(self):
        for name in ("k", "zeta", "kg", "c1", "c2"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise InvalidParametersError(f"{name}={value} must be positive and finite")
        if self.c2 <= self.c1:
            raise InvalidParametersError(f"c2={self.c2} must exceed c1={self.c1}")

    @property
    def gains(self) -> DoubleIntegratorGains:
        return DoubleIntegratorGains(k=self.k, zeta=self.zeta)

    def replace(self, **kwargs) -> "ControllerParams":
        return replace(self, **kwargs)


@dataclass(kw_only=True, frozen=True, eq=False)
class RobotGovernorState:
    robot_pos: Vec2
    robot_vel: Vec2
    gov_pos: Vec2

    def __post_init__(self):
        for name in ("robot_pos", "robot_vel", "gov_pos"):
            object.__setattr__(self, name, frozen(as_vec2(getattr(self, name))))

    @property
    def pos_err(self) -> Vec2:
        return self.robot_pos - self.gov_pos

    def as_array(self) -> NDArray[np.float64]:
        return np.concatenate([self.robot_pos, self.robot_vel, self.gov_pos])

    @classmethod
    def from_array(cls, s: ArrayLike) -> "RobotGovernorState":
        a = np.asarray(s, dtype=np.float64)
        return cls(robot_pos=a[0:2], robot_vel=a[2:4], gov_pos=a[4:6])

    @classmethod
    def at_rest(cls, p: ArrayLike) -> "RobotGovernorState":
        """Robot at rest on top of its governor."""
        return cls(robot_pos=p, robot_vel=(0.0, 0.0), gov_pos=p)

    def replace(self, **kwargs) -> "RobotGovernorState":
        return replace(self, **kwargs)


@dataclass(kw_only=True, frozen=True, eq=False)
class PathSpec:
    """Piecewise-linear path r: [0, 1] -> R^2, with alpha proportional to arc length."""

    waypoints: NDArray[np.float64]
    cumulative: NDArray[np.float64] = field(init=False)

    def __post_init__(self):
        points = np.asarray(self.waypoints, dtype=np.float64).reshape(-1, 2)
        if len(points) < 2:
            raise InvalidPathError(f"a path needs at least 2 waypoints, got {len(points)}")
        if not np.all(np.isfinite(points)):
            raise InvalidPathError("path waypoints must be finite")
        lengths = np.linalg.norm(np.diff(points, axis=0), axis=1)
        if np.any(lengths == 0.0):
            raise InvalidPathError("consecutive path waypoints must be distinct")
        object.__setattr__(self, "waypoints", frozen(points))
        object.__setattr__(self, "cumulative", frozen(np.concatenate([[0.0], np.cumsum(lengths)])))

    @property
    def length(self) -> float:
        return float(self.cumulative[-1])

    @property
    def start(self) -> Vec2:
        return self.waypoints[0]

    @property
    def end(self) -> Vec2:
        return self.waypoints[-1]

    def point(self, alpha: float) -> Vec2:
        """r(alpha)."""
        s = min(1.0, max(0.0, alpha)) * self.length
        i = int(np.searchsorted(self.cumulative, s, side="right")) - 1
        i = min(max(i, 0), len(self.waypoints) - 2)
        seg = self.cumulative[i + 1] - self.cumulative[i]
        t = (s - self.cumulative[i]) / seg
        return self.waypoints[i] + t * (self.waypoints[i + 1] - self.waypoints[i])

    def alpha_at(self, segment: int, t: float) -> float:
        seg = self.cumulative[segment + 1] - self.cumulative[segment]
        return float((self.cumulative[segment] + t * seg) / self.length)


@dataclass(kw_only=True, frozen=True, eq=False)
class SafetyAssessment:
    """
    Local safe zone of a robot-governor state.

    delta is the peak value driving the zone (the exact peak unless the bound
    mode says otherwise); certified carries the relaxed bound when it was
    computed.
    """

    q: DirectionalMatrix | IsotropicMatrix
    eta: float
    delta: float
    dist_sq: float
    delta_e: float
    safe_zone: Ellipsoid
    witness: Vec2 | None = None
    certified: float | None = None

    @property
    def dist_q(self) -> float:
        return math.sqrt(self.dist_sq)

    def replace(self, **kwargs) -> "SafetyAssessment":
        return replace(self, **kwargs)


class ProjectedGoal(NamedTuple):
    alpha: float
    goal: Vec2


def _zone(
    q: DirectionalMatrix | IsotropicMatrix, gov_pos: Vec2, dist_sq: float, delta: float
) -> tuple[float, Ellipsoid]:
    delta_e = dist_sq - delta
    return delta_e, Ellipsoid(center=gov_pos, q=q.q, level=max(0.0, delta_e))


def assess(
    state: RobotGovernorState,
    env: Environment,
    params: ControllerParams,
    mode: BoundMode = BoundMode.EXACT,
) -> SafetyAssessment:
    """Directional safe zone with Q = Q[g - x]."""
    q = directional_matrix(state.gov_pos - state.robot_pos, params.c1, params.c2)
    sys = build_double_integrator(params.gains, q.q)
    s0 = np.concatenate([state.pos_err, state.robot_vel])
    eta, _ = peak(sys, s0)
    certified = None if mode == BoundMode.EXACT else max(relaxed_peak(sys, s0), eta)
    delta = certified if mode == BoundMode.RELAXED else eta
    proximity = env.dist_q(q.q, state.gov_pos)
    dist_sq = proximity.dist**2
    delta_e, zone = _zone(q, state.gov_pos, dist_sq, delta)
    return SafetyAssessment(
        q=q,
        eta=eta,
        delta=delta,
        dist_sq=dist_sq,
        delta_e=delta_e,
        safe_zone=zone,
        witness=proximity.witness,
        certified=certified,
    )


def energy(state: RobotGovernorState, params: ControllerParams) -> float:
    """E = k |x - g|^2 + |x'|^2 / 2."""
    err = state.pos_err
    return params.k * float(err @ err) + 0.5 * float(state.robot_vel @ state.robot_vel)


def baseline_energy_zone(
    state: RobotGovernorState,
    env: Environment,
    params: ControllerParams,
    mode: BoundMode = BoundMode.EXACT,
) -> SafetyAssessment:
    """Euclidean ball zone of radius^2 d(g, O)^2 - E; the bound mode does not apply."""
    q = isotropic_matrix()
    e = energy(state, params)
    proximity = env.dist_q(q.q, state.gov_pos)
    dist_sq = proximity.dist**2
    delta_e, zone = _zone(q, state.gov_pos, dist_sq, e)
    return SafetyAssessment(
        q=q, eta=e, delta=e, dist_sq=dist_sq, delta_e=delta_e, safe_zone=zone, witness=proximity.witness
    )


def _largest_inside(a: float, b: float, c: float) -> float | None:
    """Largest s in [0, 1] with a s^2 + b s + c <= 0, for a > 0."""
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        return None
    root = math.sqrt(disc)
    q = -0.5 * (b + math.copysign(root, b))
    if q == 0.0:
        lo = hi = 0.0
    else:
        lo, hi = sorted((q / a, c / q))
    if hi < 0.0 or lo > 1.0:
        return None
    return min(hi, 1.0)


def local_projected_goal(
    path: PathSpec, assessment: SafetyAssessment, held_alpha: float = 0.0
) -> ProjectedGoal:
    """
    Farthest path point inside the safe zone.

    Segments are scanned from the last toward the first; on each one the zone
    membership (r - g)^T Q (r - g) <= level is a quadratic inequality in the
    segment parameter. A zero-level zone off the path pins the goal at g and
    keeps held_alpha.
    """
    zone = assessment.safe_zone
    if math.isinf(zone.level):
        return ProjectedGoal(1.0, path.end.copy())
    q = np.asarray(zone.q)
    points = path.waypoints
    for i in range(len(points) - 2, -1, -1):
        start = points[i] - zone.center
        e = points[i + 1] - points[i]
        qe = q @ e
        s = _largest_inside(float(e @ qe), 2.0 * float(start @ qe), float(start @ q @ start) - zone.level)
        if s is not None:
            goal = points[i + 1].copy() if s >= 1.0 else points[i] + s * e
            return ProjectedGoal(path.alpha_at(i, s), goal)
    if zone.level <= 0.0:
        return ProjectedGoal(held_alpha, zone.center.copy())
    raise NoFeasibleAlphaError(
        f"no path point inside the safe zone around {zone.center.tolist()} (level {zone.level:.3e})"
    )


def governor_input(state: RobotGovernorState, goal: ArrayLike, kg: float) -> Vec2:
    """u_g = -kg (g - goal)."""
    return -kg * (state.gov_pos - np.asarray(goal, dtype=np.float64))


def robot_input(state: RobotGovernorState, params: ControllerParams) -> Vec2:
    return -2.0 * params.k * state.pos_err - params.zeta * state.robot_vel
