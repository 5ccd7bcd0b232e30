import numpy as np
import pytest
from scipy.linalg import expm

from governor import scenario as scenario_io
from governor.control import PathSpec, ProjectedGoal, RobotGovernorState, assess, energy, robot_input
from governor.controllers import Controller
from governor.errors import GovernorError, InvalidParametersError, ScenarioError
from governor.metric import quad_norm_sq
from governor.obstacles import Circle, Environment, Workspace
from governor.report import summarize
from governor.simulator import (
    ClosedLoopFlow,
    LogRow,
    RunStatus,
    Scenario,
    TrajectoryLog,
    rk4,
    run,
    step,
)

OPEN = Environment(bounds=Workspace(xmin=-10.0, ymin=-10.0, xmax=10.0, ymax=10.0))


def _static(initial: RobotGovernorState, **kwargs) -> Scenario:
    return Scenario(env=OPEN, initial=initial, static_governor=True, **kwargs)


def _closed_loop_matrix(k: float, zeta: float) -> np.ndarray:
    """Linear system for (x, x', g) with a frozen governor."""
    a = np.zeros((6, 6))
    a[0:2, 2:4] = np.eye(2)
    a[2:4, 0:2] = -2.0 * k * np.eye(2)
    a[2:4, 2:4] = -zeta * np.eye(2)
    a[2:4, 4:6] = 2.0 * k * np.eye(2)
    return a


def test_equilibrium_is_a_fixed_point():
    path = PathSpec(waypoints=[(0.0, 0.0), (5.0, 0.0)])
    state = RobotGovernorState.at_rest((5.0, 0.0))
    scenario = Scenario(env=OPEN, initial=state, path=path)
    new_state, row, projected = step(state, scenario, ProjectedGoal(1.0, state.gov_pos))
    assert np.array_equal(new_state.as_array(), state.as_array())
    assert projected.alpha == 1.0
    assert not np.any(row.gov_input)


def test_rk4_fourth_order(params):
    s0 = RobotGovernorState(robot_pos=(1.0, -0.5), robot_vel=(0.3, 0.8), gov_pos=(0.0, 0.0)).as_array()
    a = _closed_loop_matrix(params.k, params.zeta)
    errors = []
    for dt in (0.04, 0.02):
        errors.append(float(np.linalg.norm(rk4(s0, dt, lambda s: a @ s) - expm(a * dt) @ s0)))
    assert errors[1] > 0.0
    assert errors[0] / errors[1] >= 16.0


@pytest.mark.parametrize("static", [True, False])
def test_step_holds_inputs_over_the_step(params, static):
    initial = RobotGovernorState(robot_pos=(0.4, -0.3), robot_vel=(0.3, 0.8), gov_pos=(0.0, 0.0))
    path = PathSpec(waypoints=[(0.0, 0.0), (5.0, 0.0)])
    scenario = Scenario(env=OPEN, initial=initial, path=path, static_governor=static, dt=0.04)
    new_state, row, _ = step(initial, scenario, ProjectedGoal(0.0, initial.gov_pos))
    h = scenario.dt
    u = robot_input(initial, params)
    assert np.any(row.gov_input) != static
    held_pos = initial.robot_pos + h * initial.robot_vel + 0.5 * h * h * u
    assert np.allclose(new_state.robot_pos, held_pos, rtol=0.0, atol=1e-14)
    assert np.allclose(new_state.robot_vel, initial.robot_vel + h * u, rtol=0.0, atol=1e-14)
    assert np.allclose(new_state.gov_pos, initial.gov_pos + h * row.gov_input, rtol=0.0, atol=1e-14)


def test_held_step_converges_to_the_continuous_flow(params):
    initial = RobotGovernorState(robot_pos=(1.0, -0.5), robot_vel=(0.3, 0.8), gov_pos=(0.0, 0.0))
    a = _closed_loop_matrix(params.k, params.zeta)
    errors = []
    for dt in (0.04, 0.02):
        new_state, _, _ = step(initial, _static(initial, dt=dt), ProjectedGoal(0.0, initial.gov_pos))
        errors.append(float(np.linalg.norm(new_state.as_array() - expm(a * dt) @ initial.as_array())))
    # holding u leaves a velocity error of h^2 u' / 2 per step
    assert 3.5 <= errors[0] / errors[1] <= 4.5


def test_closed_loop_flow_matches_the_matrix_exponential(params):
    initial = RobotGovernorState(robot_pos=(1.0, -0.5), robot_vel=(0.3, 0.8), gov_pos=(0.2, 0.1))
    flow = ClosedLoopFlow(params, 0.0, 0.05)
    exact = expm(_closed_loop_matrix(params.k, params.zeta) * 0.05) @ initial.as_array()
    assert np.allclose(flow.advance(initial, (9.0, 9.0)).as_array(), exact, rtol=1e-12, atol=1e-14)


def test_static_governor_converges_with_decreasing_energy(params):
    initial = RobotGovernorState(robot_pos=(1.0, 0.5), robot_vel=(-0.5, 1.0), gov_pos=(0.0, 0.0))
    log = run(_static(initial, dt=0.01, t_max=20.0))
    assert log.status == RunStatus.TIMEOUT
    assert np.array_equal(log.final_state.gov_pos, initial.gov_pos)
    assert np.linalg.norm(log.final_state.pos_err) <= 1e-3
    assert log.containment_findings == 0

    energies = [
        energy(RobotGovernorState(robot_pos=r.robot_pos, robot_vel=r.robot_vel, gov_pos=r.gov_pos), params)
        for r in log.rows
    ]
    assert all(b <= a + 1e-12 for a, b in zip(energies[:-1], energies[1:], strict=True))
    for r in log.rows:
        assert np.array_equal(r.gov_pos, initial.gov_pos)
        assert r.eta <= r.delta + 1e-9
        assert quad_norm_sq(r.q, r.robot_pos - r.gov_pos) <= r.delta + 1e-6


def test_static_run_stays_inside_the_first_zone():
    initial = RobotGovernorState(robot_pos=(-2.0, 0.0), robot_vel=(0.0, 2.0), gov_pos=(0.0, 0.0))
    log = run(_static(initial, dt=0.001, t_max=8.0))
    first = log.rows[0]
    # the held input drifts from the continuous flow by O(dt)
    for r in log.rows:
        assert quad_norm_sq(first.q, r.robot_pos - first.gov_pos) <= first.eta * (1.0 + 5e-3)


def test_rows_are_spaced_by_dt():
    log = run(scenario_io.bundled("empty"))
    t = log.column("t")
    assert t[0] == 0.0
    assert np.allclose(np.diff(t), log.dt)


def test_trivial_scenario_reaches_goal():
    loaded = scenario_io.bundled("empty")
    log = run(loaded)
    assert log.status == RunStatus.GOAL_REACHED
    assert np.linalg.norm(log.final_state.robot_pos - loaded.path.end) <= 0.05
    assert all(loaded.env.free_space_contains(r.robot_pos) for r in log.rows)


def test_governor_holds_when_zone_is_empty():
    corridor = scenario_io.bundled("corridor")
    state = RobotGovernorState(robot_pos=(1.0, 0.0), robot_vel=(0.0, 5.0), gov_pos=(1.0, 0.0))
    _, row, projected = step(state, corridor, ProjectedGoal(0.0, state.gov_pos))
    assert row.delta_e <= 0.0
    assert row.holding
    assert not np.any(row.gov_input)
    assert np.array_equal(projected.goal, state.gov_pos)


def test_governor_gating_over_a_run():
    log = run(scenario_io.bundled("corridor").replace(t_max=10.0))
    for r in log.rows:
        if r.delta_e <= 0.0:
            assert not np.any(r.gov_input)


def test_corridor_directional_metric_is_faster():
    corridor = scenario_io.bundled("corridor")
    sddm = run(corridor)
    euclid = run(corridor.replace(controller=Controller.EUCLID))
    for log in (sddm, euclid):
        assert log.status == RunStatus.GOAL_REACHED
        assert all(corridor.env.free_space_contains(r.robot_pos) for r in log.rows)
    assert sddm.end_time < euclid.end_time


def test_sparse_circles_directional_metric_moves_faster():
    circles = scenario_io.bundled("sparse_circles")
    sddm = summarize(run(circles))
    euclid = summarize(run(circles.replace(controller=Controller.EUCLID)))
    assert sddm.mean_speed > euclid.mean_speed
    assert sddm.min_clearance > 0.0
    assert euclid.min_clearance > 0.0


def test_unknown_maze_reaches_goal():
    maze = scenario_io.bundled("unknown_maze")
    replans = []
    log = run(maze, replan_callback=lambda t, path: replans.append(t))
    assert log.status == RunStatus.GOAL_REACHED
    assert log.replans == len(replans) > 0
    assert log.grid is not None
    assert all(maze.env.free_space_contains(r.robot_pos) for r in log.rows)


def test_collision_is_reported():
    corridor = scenario_io.bundled("corridor")
    state = RobotGovernorState(robot_pos=(1.0, 0.5), robot_vel=(0.0, 20.0), gov_pos=(1.0, 0.5))
    log = run(corridor.replace(initial=state, allow_unsafe=True))
    assert log.status == RunStatus.COLLISION
    assert log.final_state.robot_pos[1] >= 1.0 or corridor.env.blocks_segment(
        log.rows[-1].robot_pos, log.final_state.robot_pos
    )


def test_unreachable_path_reports_no_feasible_alpha():
    env = Environment(Circle((1.5, 0.0), 1.0), bounds=Workspace(xmin=-1.0, ymin=-1.0, xmax=6.0, ymax=4.0))
    scenario = Scenario(
        env=env,
        initial=RobotGovernorState.at_rest((0.0, 0.0)),
        path=PathSpec(waypoints=[(3.0, 3.0), (5.0, 3.0)]),
    )
    with pytest.raises(ScenarioError, match="does not reach the path"):
        run(scenario)
    log = run(scenario.replace(allow_unsafe=True))
    assert log.status == RunStatus.NO_FEASIBLE_ALPHA
    assert log.rows[-1].projection_failed


def test_unsafe_start_rejected():
    corridor = scenario_io.bundled("corridor")
    state = RobotGovernorState(robot_pos=(1.0, 0.0), robot_vel=(0.0, 5.0), gov_pos=(1.0, 0.0))
    with pytest.raises(ScenarioError, match="not safe"):
        run(corridor.replace(initial=state))


def test_runs_are_deterministic():
    loaded = scenario_io.bundled("sparse_circles").replace(t_max=5.0)
    first, second = run(loaded), run(loaded)
    assert first.status == second.status
    assert len(first.rows) == len(second.rows)
    for a, b in zip(first.rows, second.rows, strict=True):
        assert np.array_equal(a.robot_pos, b.robot_pos)
        assert np.array_equal(a.gov_pos, b.gov_pos)
        assert a.eta == b.eta and a.delta_e == b.delta_e


def test_row_callback_sees_every_row():
    seen = []
    log = run(scenario_io.bundled("empty"), row_callback=seen.append)
    assert seen == log.rows


@pytest.mark.parametrize(
    "kwargs",
    [
        {"dt": 0.1},
        {"dt": 0.0},
        {"t_max": float("inf")},
        {"path": None},
        {"mapping": object(), "goal": None},
    ],
)
def test_invalid_scenarios(kwargs):
    base = {
        "env": OPEN,
        "initial": RobotGovernorState.at_rest((0.0, 0.0)),
        "path": PathSpec(waypoints=[(0.0, 0.0), (1.0, 0.0)]),
    }
    with pytest.raises(InvalidParametersError):
        Scenario(**(base | kwargs))


def test_log_time_must_increase():
    log = TrajectoryLog(scenario="x", controller=Controller.SDDM, dt=0.01)
    row = LogRow(
        t=0.0,
        robot_pos=np.zeros(2),
        robot_vel=np.zeros(2),
        gov_pos=np.zeros(2),
        alpha_star=0.0,
        eta=0.0,
        delta=0.0,
        delta_e=1.0,
        dist_q=1.0,
        dist_euclid=1.0,
        gov_input=np.zeros(2),
        q=np.eye(2),
    )
    log.append(row)
    with pytest.raises(GovernorError):
        log.append(row)
    state = RobotGovernorState.at_rest((0.0, 0.0))
    log.finish(RunStatus.TIMEOUT, 0.01, state)
    with pytest.raises(GovernorError):
        log.finish(RunStatus.GOAL_REACHED, 0.02, state)


def _static_with_circles(seed: int) -> Scenario:
    rng = np.random.default_rng(seed)
    bounds = Workspace(xmin=-8.0, ymin=-8.0, xmax=8.0, ymax=8.0)
    while True:
        circles = [Circle(rng.uniform(-6.0, 6.0, size=2), float(rng.uniform(0.3, 1.2))) for _ in range(5)]
        env = Environment(*circles, bounds=bounds)
        gov = rng.uniform(-3.0, 3.0, size=2)
        state = RobotGovernorState(
            robot_pos=gov + rng.uniform(-1.0, 1.0, size=2),
            robot_vel=rng.uniform(-1.0, 1.0, size=2),
            gov_pos=gov,
        )
        if not (env.free_space_contains(state.robot_pos) and env.free_space_contains(gov)):
            continue
        scenario = Scenario(env=env, initial=state, static_governor=True, dt=0.02, t_max=20.0, seed=seed)
        if assess(state, env, scenario.params).delta_e > 0.0:
            return scenario


@pytest.mark.parametrize("seed", range(100))
def test_static_governor_among_circles(seed):
    scenario = _static_with_circles(seed)
    log = run(scenario)
    assert log.status == RunStatus.TIMEOUT
    assert log.containment_findings == 0
    for r in log.rows:
        assert scenario.env.free_space_contains(r.robot_pos)
        assert quad_norm_sq(r.q, r.robot_pos - r.gov_pos) <= r.delta + 1e-6
    assert np.linalg.norm(log.final_state.robot_pos - scenario.initial.gov_pos) <= 1e-3


@pytest.mark.parametrize("seed", range(20))
def test_scattered_circles_reach_the_goal(seed):
    base = scenario_io.bundled("sparse_circles")
    rng = np.random.default_rng(seed)
    keep_out = [base.path.start, base.path.end]
    circles = scenario_io.scatter_circles(rng, base.env.bounds, base.path, 12, 0.4, 1.2, 0.75, keep_out)
    scenario = base.replace(env=Environment(*circles, bounds=base.env.bounds), dt=0.02, seed=seed)
    log = run(scenario)
    assert log.status == RunStatus.GOAL_REACHED
    for r in log.rows:
        assert scenario.env.free_space_contains(r.robot_pos)
        if r.delta_e <= 0.0:
            assert not np.any(r.gov_input)
