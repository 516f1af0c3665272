"""Pose-tracking PID and manipulator planning.

The pose controller forms its error in the body frame: position error is the
setpoint translation expressed robot-centrically, attitude error is the
axis-angle vector of the relative rotation (no Euler singularities). The
derivative term damps measured body rates rather than differentiating the
error, which avoids setpoint kick.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose, quat_to_rotvec, target_in_robot_frame
from .vehicle import VehicleParams, VehicleState, arm_tip


class UnreachableError(ValueError):
    """Raised when an arm target lies outside the reachable workspace."""


@dataclass
class PidGains:
    kp: np.ndarray = field(default_factory=lambda: np.array([30.0, 30.0, 35.0, 5.0, 5.0, 8.0]))
    ki: np.ndarray = field(default_factory=lambda: np.array([2.0, 2.0, 3.0, 0.2, 0.2, 0.5]))
    kd: np.ndarray = field(default_factory=lambda: np.array([45.0, 45.0, 50.0, 2.0, 2.0, 6.0]))
    integral_clamp: np.ndarray = field(default_factory=lambda: np.array(
        [4.0, 4.0, 6.0, 2.0, 2.0, 2.0]))
    # Conditional integration: the integrator only runs once the error is
    # inside this band, so long transits cannot wind it up.
    integral_zone: np.ndarray = field(default_factory=lambda: np.array(
        [1.0, 1.0, 1.0, 0.5, 0.5, 0.5]))
    output_clamp: np.ndarray = field(default_factory=lambda: np.array(
        [30.0, 30.0, 60.0, 10.0, 10.0, 10.0]))

    def __post_init__(self):
        for name in ("kp", "ki", "kd", "integral_clamp", "integral_zone", "output_clamp"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        if np.any(self.kp < 0) or np.any(self.ki < 0) or np.any(self.kd < 0):
            raise ValueError("gains must be >= 0")
        if np.any(self.integral_clamp <= 0) or np.any(self.output_clamp <= 0):
            raise ValueError("clamps must be > 0")

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist()
                for k in ("kp", "ki", "kd", "integral_clamp", "integral_zone",
                          "output_clamp")}

    @classmethod
    def from_dict(cls, d: dict) -> "PidGains":
        return cls(**d)


class PosePid:
    """Six-axis body-frame PID; one instance per episode (holds integrator state)."""

    def __init__(self, gains: PidGains | None = None):
        self.gains = gains or PidGains()
        self.integral = np.zeros(6)

    def reset(self):
        self.integral = np.zeros(6)

    def step(self, setpoint: Pose, state: VehicleState, dt: float) -> np.ndarray:
        if dt <= 0:
            raise ValueError("dt must be > 0")
        rel = target_in_robot_frame(setpoint, state.pose)
        err = np.concatenate((rel.t, quat_to_rotvec(rel.q)))
        g = self.gains
        in_zone = np.abs(err) <= g.integral_zone
        self.integral = np.clip(self.integral + np.where(in_zone, err, 0.0) * dt,
                                -g.integral_clamp, g.integral_clamp)
        rates = np.concatenate((state.lin_vel, state.ang_vel))
        wrench = g.kp * err + g.ki * self.integral - g.kd * rates
        return np.clip(wrench, -g.output_clamp, g.output_clamp)


def pid_step(gains: PidGains, setpoint: Pose, state: VehicleState, dt: float,
             integral: np.ndarray | None = None):
    """Stateless single PID step; returns (wrench, updated integral)."""
    pid = PosePid(gains)
    pid.integral = np.zeros(6) if integral is None else np.asarray(integral, dtype=float)
    wrench = pid.step(setpoint, state, dt)
    return wrench, pid.integral


@dataclass
class JointTrajectory:
    """Sampled joint-space path: times strictly increasing, linear interp between knots."""

    times: np.ndarray
    joints: np.ndarray   # (N, 4) rad
    gripper: np.ndarray  # (N,) opening m

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.joints = np.asarray(self.joints, dtype=float)
        self.gripper = np.asarray(self.gripper, dtype=float)
        if len(self.times) == 0 or np.any(np.diff(self.times) <= 0):
            raise ValueError("knot times must be strictly increasing and non-empty")

    @property
    def duration(self) -> float:
        return float(self.times[-1])

    def sample(self, t: float):
        """Joint angles and gripper opening at time t (clamped to the ends)."""
        t = min(max(t, self.times[0]), self.times[-1])
        j = np.array([np.interp(t, self.times, self.joints[:, k]) for k in range(4)])
        g = float(np.interp(t, self.times, self.gripper))
        return j, g


def _profile_duration(delta: float, vmax: float, amax: float) -> float:
    if delta <= 0:
        return 0.0
    v_peak = math.sqrt(delta * amax)
    if v_peak <= vmax:
        return 2.0 * math.sqrt(delta / amax)  # triangular
    return delta / vmax + vmax / amax         # trapezoidal


def _profile_position(t: float, delta: float, vmax: float, amax: float, T: float) -> float:
    """Distance traveled at time t along the minimal profile of duration T."""
    if delta <= 0 or T <= 0:
        return 0.0
    t = min(max(t, 0.0), T)
    v_peak = math.sqrt(delta * amax)
    if v_peak <= vmax:  # triangular
        th = T / 2.0
        if t <= th:
            return 0.5 * amax * t * t
        return delta - 0.5 * amax * (T - t) ** 2
    ta = vmax / amax
    if t <= ta:
        return 0.5 * amax * t * t
    if t <= T - ta:
        return 0.5 * amax * ta * ta + vmax * (t - ta)
    return delta - 0.5 * amax * (T - t) ** 2


def plan_joint_trajectory(current: np.ndarray, target: np.ndarray,
                          vmax: float = 1.0, amax: float = 2.0,
                          gripper_start: float = 0.0, gripper_end: float | None = None,
                          sample_dt: float = 0.02) -> JointTrajectory:
    """Per-joint trapezoidal profiles, time-synchronized to the slowest joint.

    Faster joints are slowed by uniform time-scaling, which keeps them inside
    their velocity and acceleration budgets. Endpoints are exact.
    """
    if vmax <= 0 or amax <= 0:
        raise ValueError("vmax and amax must be > 0")
    current = np.asarray(current, dtype=float)
    target = np.asarray(target, dtype=float)
    if gripper_end is None:
        gripper_end = gripper_start

    deltas = np.abs(target - current)
    signs = np.sign(target - current)
    durations = [_profile_duration(d, vmax, amax) for d in deltas]
    T = max(durations)
    if T <= 0.0:
        return JointTrajectory(np.array([0.0]), current[None, :], np.array([gripper_end]))

    n = max(2, int(math.ceil(T / sample_dt)) + 1)
    times = np.linspace(0.0, T, n)
    joints = np.empty((n, 4))
    for k in range(4):
        scale = durations[k] / T if durations[k] > 0 else 0.0
        for i, t in enumerate(times):
            s = _profile_position(t * scale, deltas[k], vmax, amax, durations[k])
            joints[i, k] = current[k] + signs[k] * s
    joints[-1] = target  # exact endpoint
    gripper = np.linspace(gripper_start, gripper_end, n)
    return JointTrajectory(times, joints, gripper)


def solve_reach(target: np.ndarray, params: VehicleParams) -> np.ndarray:
    """Closed-form IK for a body-frame point: yaw + planar 2-link + level wrist.

    The yaw joint aligns the arm plane with the target azimuth; shoulder and
    elbow solve the planar 2-link problem to the wrist point (the gripper
    segment is kept horizontal); elbow-down branch throughout.
    """
    target = np.asarray(target, dtype=float)
    if not np.isfinite(target).all():
        raise ValueError("target must be finite")
    l1, l2, l3 = params.arm_links
    d = target - params.arm_base
    r_t = math.hypot(d[0], d[1])
    u_t = -d[2]  # up is -z
    q0 = math.atan2(d[1], d[0]) if r_t > 1e-12 else 0.0

    # Level gripper: the wrist sits l3 radially short of the target.
    r_w, u_w = r_t - l3, u_t
    rr = math.hypot(r_w, u_w)
    if rr > l1 + l2 + 1e-12 or rr < abs(l1 - l2) - 1e-12:
        raise UnreachableError(
            f"target at planar reach {rr:.3f} m outside [{abs(l1 - l2):.3f}, {l1 + l2:.3f}]")

    cos_e = (rr * rr - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)
    cos_e = min(1.0, max(-1.0, cos_e))
    elbow = math.acos(cos_e)
    # Elbow-down: the elbow sits below the shoulder-to-wrist chord.
    q2 = -elbow
    q1 = math.atan2(u_w, r_w) + math.atan2(l2 * math.sin(elbow), l1 + l2 * cos_e)
    q3 = -(q1 + q2)  # gripper segment horizontal

    joints = np.array([q0, q1, q2, q3])
    lo, hi = params.joint_limits[:, 0], params.joint_limits[:, 1]
    if np.any(joints < lo - 1e-9) or np.any(joints > hi + 1e-9):
        raise UnreachableError(f"IK solution {np.round(joints, 3)} violates joint limits")

    fk = arm_tip(joints, params)
    if np.linalg.norm(fk - target) > 1e-6:
        raise UnreachableError("IK verification failed (forward kinematics mismatch)")
    return joints
