import math

import numpy as np
import numpy.testing as npt
import pytest

from rovsim.control import (
    JointTrajectory,
    PidGains,
    PosePid,
    UnreachableError,
    plan_joint_trajectory,
    solve_reach,
)
from rovsim.geometry import Pose, random_pose
from rovsim.vehicle import (
    ActionVector,
    VehicleParams,
    VehicleState,
    allocate_thrust,
    arm_tip,
    step_dynamics,
)


def run_closed_loop(setpoint: Pose, state: VehicleState, seconds: float,
                    gains: PidGains | None = None, params: VehicleParams | None = None):
    """Simulate PID + allocation + dynamics at 100 Hz; returns state history."""
    params = params or VehicleParams()
    pid = PosePid(gains)
    states = [state]
    for _ in range(int(seconds * 100)):
        wrench = pid.step(setpoint, state, 0.01)
        cmd, _ = allocate_thrust(wrench, params)
        state = step_dynamics(state, ActionVector(thrusters=cmd), params, 0.01)
        states.append(state)
    return states


def test_zero_error_zero_wrench():
    pid = PosePid()
    state = VehicleState(pose=Pose(t=[1, 2, 3]))
    wrench = pid.step(Pose(t=[1, 2, 3]), state, 0.1)
    npt.assert_allclose(wrench, np.zeros(6), atol=1e-12)


def test_pure_p_surge():
    gains = PidGains(kp=np.array([10.0] * 6), ki=np.zeros(6), kd=np.zeros(6))
    pid = PosePid(gains)
    wrench = pid.step(Pose(t=[2, 0, 0]), VehicleState(), 0.1)
    npt.assert_allclose(wrench, [20, 0, 0, 0, 0, 0], atol=1e-12)


def test_zero_gains_zero_output():
    gains = PidGains(kp=np.zeros(6), ki=np.zeros(6), kd=np.zeros(6))
    pid = PosePid(gains)
    rng = np.random.default_rng(0)
    for _ in range(20):
        wrench = pid.step(random_pose(rng, 5.0), VehicleState(), 0.1)
        npt.assert_allclose(wrench, np.zeros(6), atol=1e-12)


def test_integral_respects_clamp():
    pid = PosePid()
    state = VehicleState()
    # persistent in-zone error, dwelling far longer than clamp/err seconds
    setpoint = Pose(t=[0.9, -0.9, 0.9])
    for _ in range(5000):
        pid.step(setpoint, state, 0.01)
        assert np.all(np.abs(pid.integral) <= pid.gains.integral_clamp + 1e-12)
    # the clamp actually binds in this scenario
    npt.assert_allclose(np.abs(pid.integral[:3]), pid.gains.integral_clamp[:3], atol=1e-9)


def test_surge_step_settles():
    setpoint = Pose(t=[5.0, 0, 0])
    states = run_closed_loop(setpoint, VehicleState(), 30.0)
    # settled within 0.1 m and stays there
    tail = states[-200:]
    for s in tail:
        assert abs(s.pose.t[0] - 5.0) < 0.1


def test_surge_step_settles_ten_seeds():
    rng = np.random.default_rng(99)
    for _ in range(10):
        start = VehicleState(pose=Pose(t=[rng.uniform(-0.2, 0.2),
                                          rng.uniform(-0.2, 0.2),
                                          5.0 + rng.uniform(-0.2, 0.2)]))
        goal = Pose(t=start.pose.t + np.array([5.0, 0.0, 0.0]))
        final = run_closed_loop(goal, start, 30.0)[-1]
        assert np.linalg.norm(final.pose.t - goal.t) < 0.1


def test_closed_loop_velocities_bounded():
    rng = np.random.default_rng(5)
    for _ in range(5):
        goal = Pose.from_axis_angle([0, 0, 1], rng.uniform(-math.pi, math.pi),
                                    rng.uniform(-10, 10, size=3) + [0, 0, 12])
        states = run_closed_loop(goal, VehicleState(pose=Pose(t=[0, 0, 8.0])), 60.0)
        for s in states:
            assert np.linalg.norm(s.lin_vel) < 5.0
            assert np.linalg.norm(s.ang_vel) < 5.0


def test_plan_trivial():
    q = np.array([0.1, 0.2, 0.3, 0.4])
    traj = plan_joint_trajectory(q, q)
    assert traj.times.shape == (1,)
    assert traj.times[0] == 0.0
    npt.assert_allclose(traj.joints[0], q)


def test_plan_triangular_duration():
    q0 = np.zeros(4)
    q1 = np.array([1.0, 0, 0, 0])
    traj = plan_joint_trajectory(q0, q1, vmax=1.0, amax=1.0)
    assert traj.duration == pytest.approx(2.0, abs=1e-9)
    npt.assert_allclose(traj.joints[-1], q1, atol=1e-12)


def test_plan_velocity_never_exceeds_vmax():
    rng = np.random.default_rng(12)
    for _ in range(20):
        q0 = rng.uniform(-1, 1, 4)
        q1 = rng.uniform(-1, 1, 4)
        vmax = rng.uniform(0.3, 2.0)
        amax = rng.uniform(0.5, 4.0)
        traj = plan_joint_trajectory(q0, q1, vmax, amax)
        if traj.duration == 0.0:
            continue
        ts = np.linspace(0, traj.duration, 400)
        qs = np.stack([traj.sample(t)[0] for t in ts])
        vel = np.abs(np.diff(qs, axis=0)) / np.diff(ts)[:, None]
        assert np.max(vel) <= vmax + 1e-9
        npt.assert_allclose(qs[-1], q1, atol=1e-12)
        npt.assert_allclose(qs[0], q0, atol=1e-12)


def test_plan_synchronized_endpoint():
    q0 = np.zeros(4)
    q1 = np.array([0.2, 1.5, -0.8, 0.1])
    traj = plan_joint_trajectory(q0, q1, vmax=1.0, amax=2.0)
    npt.assert_allclose(traj.joints[-1], q1, atol=1e-12)
    # monotone approach per joint (no overshoot in a trapezoid)
    for k in range(4):
        d = np.diff(traj.joints[:, k]) * np.sign(q1[k] - q0[k]) if q1[k] != q0[k] else None
        if d is not None:
            assert np.all(d >= -1e-12)


def test_ik_full_extension_is_zero():
    params = VehicleParams()
    target = params.arm_base + np.array([params.arm_links.sum(), 0.0, 0.0])
    joints = solve_reach(target, params)
    npt.assert_allclose(joints, np.zeros(4), atol=1e-9)


def test_ik_unreachable_raises():
    params = VehicleParams()
    far = params.arm_base + np.array([10.0, 0.0, 0.0])
    with pytest.raises(UnreachableError):
        solve_reach(far, params)


def test_ik_round_trip_random_points():
    params = VehicleParams()
    l1, l2, l3 = params.arm_links
    rng = np.random.default_rng(77)
    solved = 0
    while solved < 100:
        # sample within a forward cone likely to be reachable
        az = rng.uniform(-1.2, 1.2)
        rr = rng.uniform(0.15, l1 + l2 - 0.02)
        el = rng.uniform(-0.9, 0.9)
        wrist = np.array([rr * math.cos(el) * math.cos(az),
                          rr * math.cos(el) * math.sin(az),
                          -rr * math.sin(el)])
        target = params.arm_base + wrist + np.array([l3 * math.cos(az), l3 * math.sin(az), 0.0])
        try:
            joints = solve_reach(target, params)
        except UnreachableError:
            continue
        npt.assert_allclose(arm_tip(joints, params), target, atol=1e-6)
        solved += 1


def test_ik_elbow_down_branch():
    params = VehicleParams()
    target = params.arm_base + np.array([0.4, 0.0, 0.0])
    joints = solve_reach(target, params)
    # elbow below the straight chord to the wrist -> negative elbow angle,
    # positive shoulder elevation
    assert joints[2] < 0.0
    assert joints[1] > 0.0


def test_trajectory_type_validation():
    with pytest.raises(ValueError):
        JointTrajectory(np.array([0.0, 0.0]), np.zeros((2, 4)), np.zeros(2))
