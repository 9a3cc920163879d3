import numpy as np
import pytest

from milp_safeguard.nn_model import build_identity_sum_network
from milp_safeguard.plants import RobotPlant, VehiclePlant
from milp_safeguard.runtime import (
    GOAL_REACHED,
    INFEASIBLE,
    STEP_LIMIT,
    PlannerParams,
    Scenario,
    StepRecord,
    TrajectoryLog,
    plan_waypoints,
    run_episode,
)
from milp_safeguard.sets import Hypercube, UnsafeRegion

X = Hypercube(np.array([-1.0, -1.0]), np.array([10.0, 10.0]))
U = Hypercube(np.array([-0.25, -0.25]), np.array([0.25, 0.25]))
EPS = np.array([0.05, 0.05])
NET = build_identity_sum_network(X, U)


def scenario(**kw):
    base = dict(plant=RobotPlant(), net=NET, X=X, U=U,
                unsafe=UnsafeRegion(()), eps_x=EPS, eps_y=EPS, eps_u=EPS,
                x0=np.array([0.0, 0.0]), xg=np.array([1.5, 1.5]), seed=0)
    base.update(kw)
    return Scenario(**base)


def test_scenario_requires_goal_or_reference():
    with pytest.raises(ValueError):
        scenario(xg=None)


def test_scenario_rejects_endpoints_in_obstacle():
    block = UnsafeRegion((Hypercube(np.array([1.2, 1.2]),
                                    np.array([2.0, 2.0])),))
    with pytest.raises(ValueError):
        scenario(unsafe=block)
    with pytest.raises(ValueError):
        scenario(x0=np.array([20.0, 0.0]))


def test_scenario_rejects_negative_noise_bound():
    with pytest.raises(ValueError):
        scenario(eps_u=np.array([-0.01, 0.01]))


def test_fixed_reference_skips_planning():
    s = scenario(xg=None, x_ref=np.array([0.4, 0.4]))
    wps = plan_waypoints(s)
    assert len(wps) == 1
    assert np.allclose(wps[0], [0.4, 0.4])


def test_free_space_episode_reaches_goal():
    s = scenario(max_steps=60)
    log = run_episode(s)
    assert log.status == GOAL_REACHED
    assert log.safety_violations(s.unsafe) == []
    # Every commanded control respects the control set.
    for rec in log.steps:
        assert s.U.contains(rec.u_cmd, tol=1e-9)
        assert s.U.contains(rec.u_act, tol=1e-9)


def test_episode_replay_is_deterministic():
    s = scenario(max_steps=60)
    l1 = run_episode(s)
    l2 = run_episode(s)
    assert l1.status == l2.status
    assert len(l1.steps) == len(l2.steps)
    for a, b in zip(l1.steps, l2.steps):
        assert np.array_equal(a.x, b.x)
        assert np.array_equal(a.u_cmd, b.u_cmd)
        assert a.cost == b.cost


def test_obstacle_episode_stays_clear():
    wall = UnsafeRegion((Hypercube(np.array([0.6, -1.0]),
                                   np.array([0.9, 1.2])),))
    s = scenario(unsafe=wall, max_steps=120,
                 planner=PlannerParams(clearance=0.25))
    log = run_episode(s)
    assert log.status == GOAL_REACHED
    assert log.safety_violations(wall) == []
    for rec in log.steps:
        assert not wall.contains_interior(rec.x)


def test_sealed_reference_halts_infeasible():
    """Obstacle sealing the reachable set: halt, log intact, no control."""
    seal = Hypercube(np.array([-0.9, -0.9]), np.array([0.9, 0.9]))
    s = scenario(xg=None, x_ref=np.array([0.95, 0.95]),
                 unsafe=UnsafeRegion((seal,)), x0=np.array([-0.95, -0.95]),
                 max_steps=20)
    log = run_episode(s)
    assert log.status == INFEASIBLE
    assert len(log.steps) == 1
    rec = log.steps[0]
    assert rec.u_cmd is None and rec.box_lo is None
    assert rec.status != "Optimal"


def test_step_limit_status():
    s = scenario(xg=None, x_ref=np.array([9.0, 9.0]), max_steps=3)
    log = run_episode(s)
    assert log.status == STEP_LIMIT
    assert len(log.steps) == 3


def test_waypoints_are_consumed_in_order():
    s = scenario(max_steps=60)
    wps = [np.array([0.4, 0.0]), np.array([0.8, 0.4]), np.array([1.0, 0.6])]
    log = run_episode(s, waypoints=wps)
    assert log.status == GOAL_REACHED
    refs = np.array([r.x_ref for r in log.steps])
    # References never move backwards through the waypoint list.
    order = {tuple(w): i for i, w in enumerate(map(tuple, wps))}
    idx = [order[tuple(r)] for r in refs]
    assert idx == sorted(idx)


def test_vehicle_heading_seam_guard():
    s = Scenario(plant=VehiclePlant(), net=NET, X=X, U=U,
                 unsafe=UnsafeRegion(()), eps_x=EPS, eps_y=EPS, eps_u=EPS,
                 x0=np.array([0.0, 0.0]), xg=None, x_ref=np.array([1.0, 1.0]))
    # Robot-shaped sets but a vehicle plant: the 3-state seam check trips
    # before any solve, because x has no third component.
    with pytest.raises(IndexError):
        run_episode(s, waypoints=[np.array([1.0, 1.0])])


def test_safety_violation_audit_flags_bad_record():
    log = TrajectoryLog()
    log.steps.append(StepRecord(
        k=0, x=np.zeros(2), y=np.zeros(2), x_ref=np.zeros(2),
        u_cmd=np.zeros(2), u_act=np.zeros(2),
        box_lo=np.array([0.0, 0.0]), box_hi=np.array([0.1, 0.1]),
        cost=0.0, status="Optimal", solve_ms=1.0,
        x_next=np.array([0.5, 0.5])))
    bad = log.safety_violations(UnsafeRegion(()))
    assert bad == [(0, "containment")]
    inside = UnsafeRegion((Hypercube(np.array([-1.0, -1.0]),
                                     np.array([1.0, 1.0])),))
    kinds = {kind for _, kind in log.safety_violations(inside)}
    assert kinds == {"containment", "obstacle"}


def test_trajectory_csv_round_trip(tmp_path):
    s = scenario(max_steps=60)
    log = run_episode(s)
    path = tmp_path / "traj.csv"
    log.to_csv(path)
    lines = path.read_text().strip().split("\n")
    assert len(lines) == len(log.steps) + 1
    header = lines[0].split(",")
    assert header[0] == "k" and header[-1] == "solve_ms"
    first = lines[1].split(",")
    assert first[0] == "0"
    assert float(first[1]) == log.steps[0].x[0]


def test_empty_log_csv_raises(tmp_path):
    with pytest.raises(ValueError):
        TrajectoryLog().to_csv(tmp_path / "empty.csv")
