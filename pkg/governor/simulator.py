"""
Fixed-step simulation of the robot-governor closed loop.

The 6-state system (x, x', g) is integrated with classical RK4. The robot PD
input and the governor input are computed once per step from the sampled
state and held constant over it (zero-order hold).
"""

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field, replace
from enum import StrEnum

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import expm

from .control import (
    BoundMode,
    ControllerParams,
    PathSpec,
    ProjectedGoal,
    RobotGovernorState,
    SafetyAssessment,
    governor_input,
    local_projected_goal,
    robot_input,
)
from .controllers import CONTROLLERS_BY_KIND, Controller
from .errors import GovernorError, InvalidParametersError, NoFeasibleAlphaError, NoPathError, ScenarioError
from .metric import SymMat2, Vec2, as_vec2, frozen, quad_norm_sq
from .obstacles import Environment
from .planner import MappingConfig, MappingPlanner, OccupancyGrid

logger = logging.getLogger(__name__)

DEFAULT_DT = 0.005
MAX_DT = 0.05
DEFAULT_T_MAX = 120.0
GOAL_POSITION_TOLERANCE = 0.05
GOAL_SPEED_TOLERANCE = 0.05
# robot counts as settled on a holding governor below these
SETTLE_TOLERANCE = 1e-4
CONTAINMENT_SLACK = 1e-6


class RunStatus(StrEnum):
    GOAL_REACHED = "GoalReached"
    TIMEOUT = "Timeout"
    COLLISION = "Collision"
    NO_FEASIBLE_ALPHA = "NoFeasibleAlpha"


@dataclass(kw_only=True, frozen=True, eq=False)
class Scenario:
    """
    One closed-loop experiment.

    Either a fixed path is given, or mapping is set together with a goal and
    the path is planned from lidar scans while the run progresses.
    """

    env: Environment
    initial: RobotGovernorState
    path: PathSpec | None = None
    goal: Vec2 | None = None
    params: ControllerParams = field(default_factory=ControllerParams)
    dt: float = DEFAULT_DT
    t_max: float = DEFAULT_T_MAX
    controller: Controller = Controller.SDDM
    bound_mode: BoundMode = BoundMode.EXACT
    mapping: MappingConfig | None = None
    static_governor: bool = False
    allow_unsafe: bool = False
    seed: int = 0
    name: str = "scenario"

    def __post_init__(self):
        if not (0 < self.dt <= MAX_DT):
            raise InvalidParametersError(f"dt={self.dt} must lie in (0, {MAX_DT}]")
        if not (self.t_max > 0 and math.isfinite(self.t_max)):
            raise InvalidParametersError(f"t_max={self.t_max} must be positive and finite")
        if self.goal is not None:
            object.__setattr__(self, "goal", frozen(as_vec2(self.goal)))
        if self.mapping is not None and self.goal is None:
            raise InvalidParametersError("mapping mode needs a goal")
        if self.mapping is None and self.path is None and not self.static_governor:
            raise InvalidParametersError("a scenario needs a path, a mapping goal or a static governor")

    @property
    def target(self) -> Vec2:
        """Point the robot has to reach."""
        if self.goal is not None:
            return self.goal
        if self.path is not None:
            return self.path.end
        return self.initial.gov_pos

    def replace(self, **kwargs) -> "Scenario":
        return replace(self, **kwargs)


@dataclass(kw_only=True, frozen=True, eq=False)
class LogRow:
    t: float
    robot_pos: Vec2
    robot_vel: Vec2
    gov_pos: Vec2
    alpha_star: float
    eta: float
    delta: float
    delta_e: float
    dist_q: float
    dist_euclid: float
    gov_input: Vec2
    q: SymMat2
    holding: bool = False
    projection_failed: bool = False

    @property
    def zone_level(self) -> float:
        return max(0.0, self.delta_e)


@dataclass(kw_only=True)
class TrajectoryLog:
    scenario: str
    controller: Controller
    dt: float
    rows: list[LogRow] = field(default_factory=list)
    status: RunStatus | None = None
    end_time: float | None = None
    final_state: RobotGovernorState | None = None
    replans: int = 0
    containment_findings: int = 0
    grid: OccupancyGrid | None = None

    def append(self, row: LogRow) -> None:
        if self.rows and not row.t > self.rows[-1].t:
            raise GovernorError(f"log time {row.t} does not increase past {self.rows[-1].t}")
        self.rows.append(row)

    def finish(self, status: RunStatus, t: float, state: RobotGovernorState) -> None:
        if self.status is not None:
            raise GovernorError(f"run status already set to {self.status}")
        self.status = status
        self.end_time = t
        self.final_state = state

    def column(self, name: str) -> NDArray[np.float64]:
        return np.array([getattr(row, name) for row in self.rows], dtype=np.float64)


def _held_rhs(u: Vec2, u_g: Vec2) -> Callable[[NDArray[np.float64]], NDArray[np.float64]]:
    def rhs(s: NDArray[np.float64]) -> NDArray[np.float64]:
        return np.concatenate([s[2:4], u, u_g])

    return rhs


class ClosedLoopFlow:
    """
    Exact continuous flow of the closed loop over one step with the projected goal fixed.

    Used by the containment monitor to separate zone violations from the
    error of holding the inputs.
    """

    def __init__(self, params: ControllerParams, kg: float, dt: float):
        eye = np.eye(2)
        a = np.zeros((8, 8))
        a[0:2, 2:4] = eye
        a[2:4, 0:2] = -2.0 * params.k * eye
        a[2:4, 2:4] = -params.zeta * eye
        a[2:4, 4:6] = 2.0 * params.k * eye
        a[4:6, 4:6] = -kg * eye
        a[4:6, 6:8] = kg * eye
        m = expm(a * dt)
        self.phi = m[:6, :6]
        self.gamma = m[:6, 6:8]

    def advance(self, state: RobotGovernorState, goal: Vec2) -> RobotGovernorState:
        return RobotGovernorState.from_array(self.phi @ state.as_array() + self.gamma @ np.asarray(goal))


def rk4(s: NDArray[np.float64], dt: float, f: Callable[[NDArray[np.float64]], NDArray[np.float64]]):
    k1 = f(s)
    k2 = f(s + 0.5 * dt * k1)
    k3 = f(s + 0.5 * dt * k2)
    k4 = f(s + dt * k3)
    return s + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _project(
    assessment: SafetyAssessment, path: PathSpec | None, state: RobotGovernorState, held: ProjectedGoal
) -> tuple[ProjectedGoal, bool, bool]:
    """Projected goal plus (holding, projection_failed); holding pins the goal at g."""
    hold = ProjectedGoal(held.alpha, state.gov_pos.copy())
    if path is None or assessment.safe_zone.level <= 0.0:
        return hold, True, False
    try:
        return local_projected_goal(path, assessment, held.alpha), False, False
    except NoFeasibleAlphaError:
        return hold, True, True


def step(
    state: RobotGovernorState,
    scenario: Scenario,
    frozen_goal: ProjectedGoal,
    *,
    t: float = 0.0,
    env: Environment | None = None,
    path: PathSpec | None = None,
) -> tuple[RobotGovernorState, LogRow, ProjectedGoal]:
    """
    Advance one step of size scenario.dt.

    env and path override the scenario's own (mapping mode assesses against
    the mapped obstacles and follows the latest plan). frozen_goal is the
    previous projected goal; its alpha is kept while the governor holds.
    """
    env = env if env is not None else scenario.env
    path = path if path is not None else scenario.path
    params = scenario.params
    assessment = CONTROLLERS_BY_KIND[scenario.controller].assess(state, env, params, scenario.bound_mode)

    if scenario.static_governor:
        projected, holding, failed = ProjectedGoal(frozen_goal.alpha, state.gov_pos.copy()), True, False
        kg = 0.0
    else:
        projected, holding, failed = _project(assessment, path, state, frozen_goal)
        kg = params.kg

    u = robot_input(state, params)
    u_g = governor_input(state, projected.goal, kg)
    advanced = rk4(state.as_array(), scenario.dt, _held_rhs(u, u_g))
    clearance = scenario.env.clearance(state.robot_pos)
    row = LogRow(
        t=t,
        robot_pos=state.robot_pos,
        robot_vel=state.robot_vel,
        gov_pos=state.gov_pos,
        alpha_star=projected.alpha,
        eta=assessment.eta,
        delta=assessment.certified if assessment.certified is not None else assessment.delta,
        delta_e=assessment.delta_e,
        dist_q=assessment.dist_q,
        dist_euclid=clearance,
        gov_input=frozen(u_g),
        q=assessment.q.q,
        holding=holding,
        projection_failed=failed,
    )
    return RobotGovernorState.from_array(advanced), row, projected


def validate_scenario(scenario: Scenario) -> None:
    """Load-time checks: path interior to free space and a safe initial state that sees the path."""
    env = scenario.env
    if scenario.path is not None and scenario.mapping is None:
        points = scenario.path.waypoints
        for p in points:
            if not env.free_space_contains(p):
                raise ScenarioError(f"path waypoint {p.tolist()} lies inside an obstacle")
        for a, b in zip(points[:-1], points[1:], strict=True):
            if env.blocks_segment(a, b):
                raise ScenarioError(f"path segment {a.tolist()} -> {b.tolist()} crosses an obstacle")
    state = scenario.initial
    if not env.free_space_contains(state.robot_pos):
        raise ScenarioError(f"robot starts inside an obstacle at {state.robot_pos.tolist()}")
    group = CONTROLLERS_BY_KIND[scenario.controller]
    assessment = group.assess(state, env, scenario.params, scenario.bound_mode)
    if not assessment.delta_e > 0:
        raise ScenarioError(f"initial state is not safe (delta_e={assessment.delta_e:.6g})")
    if scenario.path is not None and scenario.mapping is None and not scenario.static_governor:
        try:
            local_projected_goal(scenario.path, assessment)
        except NoFeasibleAlphaError as exc:
            raise ScenarioError(f"initial safe zone does not reach the path: {exc.message}") from exc


def _reached(state: RobotGovernorState, target: Vec2) -> bool:
    return (
        float(np.linalg.norm(state.robot_pos - target)) <= GOAL_POSITION_TOLERANCE
        and float(np.linalg.norm(state.robot_vel)) <= GOAL_SPEED_TOLERANCE
    )


def _settled(state: RobotGovernorState) -> bool:
    return (
        float(np.linalg.norm(state.pos_err)) <= SETTLE_TOLERANCE
        and float(np.linalg.norm(state.robot_vel)) <= SETTLE_TOLERANCE
    )


def _containment_excess(previous: LogRow, row: LogRow, expected: RobotGovernorState) -> float:
    """
    How far the robot left the zone predicted one step earlier.

    Both the held-input sample and the exact continuous flow have to leave
    the zone for a positive excess, so the hold error alone never counts.
    """
    held = quad_norm_sq(previous.q, row.robot_pos - row.gov_pos)
    exact = quad_norm_sq(previous.q, expected.pos_err)
    return min(held, exact) - previous.delta - CONTAINMENT_SLACK


def run(
    scenario: Scenario,
    *,
    row_callback: Callable[[LogRow], None] | None = None,
    replan_callback: Callable[[float, PathSpec | None], None] | None = None,
) -> TrajectoryLog:
    """Simulate until the goal is reached, t_max passes, the robot collides or the governor is stuck."""
    if not scenario.allow_unsafe:
        validate_scenario(scenario)
    log = TrajectoryLog(scenario=scenario.name, controller=scenario.controller, dt=scenario.dt)
    logger.info(
        "run start scenario=%s controller=%s dt=%g t_max=%g",
        scenario.name,
        scenario.controller,
        scenario.dt,
        scenario.t_max,
    )

    state = scenario.initial
    path = scenario.path
    assess_env = scenario.env
    memory = ProjectedGoal(0.0, state.gov_pos.copy())
    mapper = MappingPlanner(scenario.env.bounds, scenario.mapping) if scenario.mapping else None
    scan_every = replan_every = 0
    if mapper is not None:
        scan_every = max(1, round(mapper.config.scan_period / scenario.dt))
        replan_every = max(1, round(mapper.config.replan_period / scenario.dt))

    def observe():
        """Scan from the robot and rebuild the obstacle set used for safety."""
        nonlocal assess_env
        mapper.observe(scenario.env, state.robot_pos)
        assess_env = scenario.env.with_obstacles(mapper.obstacles())

    def replan(t: float):
        """Plan from the governor; alpha restarts at the governor."""
        nonlocal path, memory
        try:
            path = mapper.plan(state.gov_pos, scenario.target)
        except NoPathError as exc:
            logger.warning("no path t=%.3f reason=%s keeping previous path", t, exc.message)
            return
        memory = ProjectedGoal(0.0, state.gov_pos.copy())
        log.replans += 1
        logger.debug(
            "replanned t=%.3f waypoints=%d", t, 0 if path is None else len(path.waypoints)
        )
        if replan_callback:
            replan_callback(t, path)

    flow = ClosedLoopFlow(scenario.params, 0.0 if scenario.static_governor else scenario.params.kg, scenario.dt)
    previous: LogRow | None = None
    expected = state
    steps = math.floor(scenario.t_max / scenario.dt + 1e-9)
    for k in range(steps + 1):
        t = k * scenario.dt
        if mapper is not None:
            scanned = k % scan_every == 0
            if scanned:
                observe()
            stale = scanned and (path is None or mapper.path_blocked(path))
            if k % replan_every == 0 or stale:
                replan(t)

        if not scenario.static_governor and _reached(state, scenario.target):
            log.finish(RunStatus.GOAL_REACHED, t, state)
            break

        new_state, row, memory = step(state, scenario, memory, t=t, env=assess_env, path=path)
        if previous is not None and previous.delta_e >= 0.0:
            excess = _containment_excess(previous, row, expected)
            if excess > 0.0:
                log.containment_findings += 1
                logger.warning("containment finding t=%.3f excess=%.3e", t, excess)
        log.append(row)
        previous, expected = row, flow.advance(state, memory.goal)
        if row_callback:
            row_callback(row)

        if not scenario.env.free_space_contains(new_state.robot_pos) or scenario.env.blocks_segment(
            state.robot_pos, new_state.robot_pos
        ):
            log.finish(RunStatus.COLLISION, t + scenario.dt, new_state)
            break
        if row.projection_failed and _settled(state):
            log.finish(RunStatus.NO_FEASIBLE_ALPHA, t, state)
            break
        state = new_state
    else:
        log.finish(RunStatus.TIMEOUT, steps * scenario.dt, state)

    if mapper is not None:
        log.grid = mapper.grid
    logger.info(
        "run end scenario=%s controller=%s status=%s t=%.3f rows=%d",
        scenario.name,
        scenario.controller,
        log.status,
        log.end_time,
        len(log.rows),
    )
    return log
