"""6-DOF rigid-body hydrodynamics of an 8-thruster ROV with a 4-joint arm.

Model summary (diagonal coefficients throughout):

    M nu_dot = tau_thr + g(R) - D_l nu - D_q nu .* |nu|

    M      diagonal rigid-body mass/inertia plus diagonal added mass
    tau_thr = T f(u), T the 6x8 thruster configuration matrix, f the
             quadratic thruster curve with a symmetric deadband
    g(R)   weight/buoyancy restoring wrench (weight at the body origin,
           buoyancy at the center-of-buoyancy offset)
    D_l, D_q  linear / quadratic damping

Frames: world is NED (z down, depth = +z below the surface); body is FRD
(x forward, y right, z down). Velocities are body-frame. Integration is
semi-implicit Euler: velocities first, then pose with the new velocities.

Coriolis/centripetal coupling is intentionally omitted; coefficients are
declared defaults for a BlueROV2-class frame, not a calibration.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose, pose_compose, quat_from_rotvec, quat_mul

GRAVITY = 9.81
WATER_DENSITY = 1025.0

ACTION_DIM = 13  # 8 thrusters + 4 joint rates + 1 gripper
N_THRUSTERS = 8
N_JOINTS = 4

# Gripper opening rate at full command, m/s.
GRIPPER_SPEED = 0.08
# Gripper commands beyond these thresholds count as deliberate close/open.
GRIPPER_CLOSE_CMD = -0.5
GRIPPER_OPEN_CMD = 0.5


def default_thruster_matrix() -> np.ndarray:
    """6x8 unit-wrench map for a vectored-quad + vertical-quad layout.

    Thrusters 0-3 sit in the horizontal plane at 45 deg (vectored X drive),
    thrusters 4-7 point up (-z). Columns are the body wrench produced by one
    newton of thrust on that thruster.
    """
    c = math.sqrt(0.5)
    lx, ly = 0.14, 0.10   # horizontal thruster moment arms, m
    vx, vy = 0.12, 0.22   # vertical thruster moment arms, m
    placements = [
        ((lx, ly, 0.0), (c, c, 0.0)),
        ((lx, -ly, 0.0), (c, -c, 0.0)),
        ((-lx, ly, 0.0), (c, -c, 0.0)),
        ((-lx, -ly, 0.0), (c, c, 0.0)),
        ((vx, vy, 0.0), (0.0, 0.0, -1.0)),
        ((vx, -vy, 0.0), (0.0, 0.0, -1.0)),
        ((-vx, vy, 0.0), (0.0, 0.0, -1.0)),
        ((-vx, -vy, 0.0), (0.0, 0.0, -1.0)),
    ]
    T = np.zeros((6, N_THRUSTERS))
    for i, (pos, direction) in enumerate(placements):
        d = np.array(direction)
        T[:3, i] = d
        T[3:, i] = np.cross(np.array(pos), d)
    return T


@dataclass
class VehicleParams:
    """Declared default coefficients for a BlueROV2-class frame."""

    mass: float = 11.5                                     # kg
    inertia: np.ndarray = field(default_factory=lambda: np.array([0.16, 0.16, 0.16]))
    added_mass: np.ndarray = field(default_factory=lambda: np.array(
        [5.5, 12.7, 14.57, 0.12, 0.12, 0.12]))
    lin_damping: np.ndarray = field(default_factory=lambda: np.array(
        [4.03, 6.22, 5.18, 0.07, 0.07, 0.07]))             # N s/m, N m s
    quad_damping: np.ndarray = field(default_factory=lambda: np.array(
        [18.18, 21.66, 36.99, 1.55, 1.55, 1.55]))          # N s^2/m^2
    weight: float = 11.5 * GRAVITY                         # N
    buoyancy: float = 11.5 * GRAVITY                       # N (neutral by default)
    cob_offset: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -0.02]))
    thruster_matrix: np.ndarray = field(default_factory=default_thruster_matrix)
    thruster_max_force: float = 40.0                       # N
    thruster_deadband: float = 0.05                        # normalized command
    pwm_min: float = 1100.0
    pwm_center: float = 1500.0
    pwm_max: float = 1900.0
    # Arm: yaw, shoulder, elbow, wrist. Base in body frame; link lengths m.
    arm_base: np.ndarray = field(default_factory=lambda: np.array([0.23, 0.0, 0.12]))
    arm_links: np.ndarray = field(default_factory=lambda: np.array([0.25, 0.25, 0.12]))
    joint_limits: np.ndarray = field(default_factory=lambda: np.array(
        [[-math.pi, math.pi], [-1.4, 1.4], [-2.6, 2.6], [-1.8, 1.8]]))
    joint_vmax: float = 1.0                                # rad/s
    gripper_max_opening: float = 0.08                      # m
    grasp_radius: float = 0.15                             # m

    def __post_init__(self):
        for name in ("inertia", "added_mass", "lin_damping", "quad_damping",
                     "cob_offset", "thruster_matrix", "arm_base", "arm_links",
                     "joint_limits"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        self.validate()

    def validate(self):
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if np.any(self.inertia < 0) or np.any(self.lin_damping < 0) or np.any(self.quad_damping < 0):
            raise ValueError("inertia and damping entries must be >= 0")
        if not (self.pwm_min < self.pwm_center < self.pwm_max):
            raise ValueError("PWM range must satisfy min < center < max")
        if self.thruster_matrix.shape != (6, N_THRUSTERS):
            raise ValueError("thruster matrix must be 6x8")
        if np.linalg.matrix_rank(self.thruster_matrix) != 6:
            raise ValueError("thruster configuration must have rank 6")

    def mass_diagonal(self) -> np.ndarray:
        """Diagonal of M: rigid-body mass/inertia plus added mass, 6 entries."""
        rb = np.concatenate(([self.mass] * 3, self.inertia))
        return rb + self.added_mass

    def to_dict(self) -> dict:
        return {
            "mass": self.mass,
            "inertia": self.inertia.tolist(),
            "added_mass": self.added_mass.tolist(),
            "lin_damping": self.lin_damping.tolist(),
            "quad_damping": self.quad_damping.tolist(),
            "weight": self.weight,
            "buoyancy": self.buoyancy,
            "cob_offset": self.cob_offset.tolist(),
            "thruster_matrix": self.thruster_matrix.tolist(),
            "thruster_max_force": self.thruster_max_force,
            "thruster_deadband": self.thruster_deadband,
            "pwm_min": self.pwm_min,
            "pwm_center": self.pwm_center,
            "pwm_max": self.pwm_max,
            "arm_base": self.arm_base.tolist(),
            "arm_links": self.arm_links.tolist(),
            "joint_limits": self.joint_limits.tolist(),
            "joint_vmax": self.joint_vmax,
            "gripper_max_opening": self.gripper_max_opening,
            "grasp_radius": self.grasp_radius,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VehicleParams":
        return cls(**d)


@dataclass
class VehicleState:
    pose: Pose = field(default_factory=Pose.identity)
    lin_vel: np.ndarray = field(default_factory=lambda: np.zeros(3))   # body, m/s
    ang_vel: np.ndarray = field(default_factory=lambda: np.zeros(3))   # body, rad/s
    joints: np.ndarray = field(default_factory=lambda: np.zeros(4))    # rad
    gripper: float = 0.04                                              # opening, m
    attached: str | None = None                                        # grasped object id

    def copy(self) -> "VehicleState":
        return VehicleState(Pose(self.pose.q, self.pose.t), self.lin_vel.copy(),
                            self.ang_vel.copy(), self.joints.copy(),
                            self.gripper, self.attached)

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.pose.to_array()).all()
                    and np.isfinite(self.lin_vel).all()
                    and np.isfinite(self.ang_vel).all()
                    and np.isfinite(self.joints).all()
                    and math.isfinite(self.gripper))


@dataclass
class ActionVector:
    """13-dim command: 8 normalized thrusters, 4 joint rates rad/s, 1 gripper."""

    thrusters: np.ndarray = field(default_factory=lambda: np.zeros(N_THRUSTERS))
    joint_rates: np.ndarray = field(default_factory=lambda: np.zeros(N_JOINTS))
    gripper: float = 0.0

    def __post_init__(self):
        self.thrusters = np.clip(np.asarray(self.thrusters, dtype=float), -1.0, 1.0)
        self.joint_rates = np.asarray(self.joint_rates, dtype=float)
        if self.thrusters.shape != (N_THRUSTERS,) or self.joint_rates.shape != (N_JOINTS,):
            raise ValueError("bad action component shapes")

    def as_array(self) -> np.ndarray:
        return np.concatenate((self.thrusters, self.joint_rates, [self.gripper]))

    @classmethod
    def from_array(cls, a: np.ndarray) -> "ActionVector":
        a = np.asarray(a, dtype=float)
        if a.shape != (ACTION_DIM,):
            raise ValueError(f"action must have {ACTION_DIM} entries")
        return cls(a[:8], a[8:12], float(a[12]))

    @classmethod
    def zero(cls) -> "ActionVector":
        return cls()

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.as_array()).all())


def pwm_to_normalized(pwm: float, params: VehicleParams | None = None) -> float:
    """Map a PWM pulse width (us) to a normalized command in [-1, 1]."""
    if not math.isfinite(pwm):
        raise ValueError("PWM must be finite")
    p = params or _DEFAULT_PARAMS
    half = (p.pwm_max - p.pwm_min) / 2.0
    return float(np.clip((pwm - p.pwm_center) / half, -1.0, 1.0))


def normalized_to_pwm(u: float, params: VehicleParams | None = None) -> float:
    p = params or _DEFAULT_PARAMS
    half = (p.pwm_max - p.pwm_min) / 2.0
    return p.pwm_center + float(np.clip(u, -1.0, 1.0)) * half


def thruster_force(u, params: VehicleParams | None = None):
    """Quadratic thruster curve F = Fmax * u * |u| with a symmetric deadband."""
    p = params or _DEFAULT_PARAMS
    u = np.clip(np.asarray(u, dtype=float), -1.0, 1.0)
    f = p.thruster_max_force * u * np.abs(u)
    return np.where(np.abs(u) < p.thruster_deadband, 0.0, f)


def thruster_force_inverse(force, params: VehicleParams | None = None):
    """Command producing a given thrust; forces inside the dead zone map to 0."""
    p = params or _DEFAULT_PARAMS
    f = np.asarray(force, dtype=float)
    u = np.sign(f) * np.sqrt(np.abs(f) / p.thruster_max_force)
    u = np.where(np.abs(u) < p.thruster_deadband, 0.0, u)
    return np.clip(u, -1.0, 1.0)


def thruster_wrench(commands: np.ndarray, params: VehicleParams) -> np.ndarray:
    return params.thruster_matrix @ thruster_force(commands, params)


def restoring_wrench(pose: Pose, params: VehicleParams) -> np.ndarray:
    """Weight + buoyancy wrench in the body frame (NED: +z down)."""
    Rt = pose.rotation_matrix().T
    f_g = Rt @ np.array([0.0, 0.0, params.weight])
    f_b = Rt @ np.array([0.0, 0.0, -params.buoyancy])
    torque = np.cross(params.cob_offset, f_b)  # weight acts at the body origin
    return np.concatenate((f_g + f_b, torque))


def allocate_thrust(wrench: np.ndarray, params: VehicleParams):
    """Least-squares thrust allocation through the configuration pseudo-inverse.

    Returns (commands, residual): 8 normalized commands saturated to [-1, 1]
    and the norm of the wrench error after the deadband/saturation mapping.
    """
    wrench = np.asarray(wrench, dtype=float)
    if not np.isfinite(wrench).all():
        raise ValueError("wrench must be finite")
    forces = np.linalg.pinv(params.thruster_matrix) @ wrench
    commands = thruster_force_inverse(forces, params)
    realized = thruster_force(commands, params)
    residual = float(np.linalg.norm(params.thruster_matrix @ realized - wrench))
    return commands, residual


def arm_points(joints: np.ndarray, params: VehicleParams) -> np.ndarray:
    """Body-frame positions of (base, elbow, wrist, tip), shape (4, 3).

    Joint 0 yaws the arm plane about body z; joints 1-3 are elevation angles
    (positive raises the link, i.e. toward -z). At all-zero joints the arm
    extends straight along +x.
    """
    l1, l2, l3 = params.arm_links
    q0, q1, q2, q3 = joints
    e1 = q1
    e2 = q1 + q2
    e3 = q1 + q2 + q3
    # Planar chain in (radial, up) coordinates.
    pts_r = np.array([0.0, l1 * math.cos(e1),
                      l1 * math.cos(e1) + l2 * math.cos(e2),
                      l1 * math.cos(e1) + l2 * math.cos(e2) + l3 * math.cos(e3)])
    pts_u = np.array([0.0, l1 * math.sin(e1),
                      l1 * math.sin(e1) + l2 * math.sin(e2),
                      l1 * math.sin(e1) + l2 * math.sin(e2) + l3 * math.sin(e3)])
    cy, sy = math.cos(q0), math.sin(q0)
    pts = np.empty((4, 3))
    pts[:, 0] = cy * pts_r
    pts[:, 1] = sy * pts_r
    pts[:, 2] = -pts_u  # up is -z in FRD
    return pts + params.arm_base


def arm_tip(joints: np.ndarray, params: VehicleParams) -> np.ndarray:
    return arm_points(joints, params)[3]


def gripper_tip_world(state: VehicleState, params: VehicleParams) -> np.ndarray:
    return state.pose.apply(arm_tip(state.joints, params))


def attached_object_pose(state: VehicleState, params: VehicleParams) -> Pose:
    """World pose tracked by a grasped object: the gripper tip frame."""
    tip_body = Pose(t=arm_tip(state.joints, params))
    return pose_compose(state.pose, tip_body)


def step_dynamics(state: VehicleState, action: ActionVector, params: VehicleParams,
                  dt: float, terrain_depth: float | None = None,
                  graspables: dict[str, np.ndarray] | None = None) -> VehicleState:
    """Advance the vehicle one step of dt seconds (dt in (0, 0.05]).

    graspables maps object id -> world position; the gripper attaches to the
    nearest one within grasp_radius while a closing command is held, and
    releases on an opening command.
    """
    if not (0.0 < dt <= 0.05):
        raise ValueError(f"dt must be in (0, 0.05], got {dt}")
    if not state.is_finite():
        raise ValueError("non-finite vehicle state (simulation diverged)")
    if not action.is_finite():
        raise ValueError("non-finite action")

    nu = np.concatenate((state.lin_vel, state.ang_vel))
    tau = (thruster_wrench(action.thrusters, params)
           + restoring_wrench(state.pose, params)
           - params.lin_damping * nu
           - params.quad_damping * nu * np.abs(nu))
    nu_next = nu + dt * tau / params.mass_diagonal()

    # Pose integrates with the updated velocities (semi-implicit Euler).
    R = state.pose.rotation_matrix()
    t_next = state.pose.t + dt * (R @ nu_next[:3])
    q_next = quat_mul(state.pose.q, quat_from_rotvec(nu_next[3:] * dt))

    if terrain_depth is not None and t_next[2] > terrain_depth:
        t_next = t_next.copy()
        t_next[2] = terrain_depth
        nu_world = R @ nu_next[:3]
        nu_world[2] = min(nu_world[2], 0.0)  # kill downward velocity only
        nu_next[:3] = R.T @ nu_world

    rates = np.clip(action.joint_rates, -params.joint_vmax, params.joint_vmax)
    joints_next = np.clip(state.joints + dt * rates,
                          params.joint_limits[:, 0], params.joint_limits[:, 1])
    gripper_next = float(np.clip(state.gripper + dt * action.gripper * GRIPPER_SPEED,
                                 0.0, params.gripper_max_opening))

    attached = state.attached
    if attached is not None and action.gripper > GRIPPER_OPEN_CMD:
        attached = None
    elif attached is None and action.gripper < GRIPPER_CLOSE_CMD and graspables:
        tip = Pose(q_next, t_next).apply(arm_tip(joints_next, params))
        best, best_d = None, params.grasp_radius
        for name in sorted(graspables):
            d = float(np.linalg.norm(graspables[name] - tip))
            if d <= best_d:
                best, best_d = name, d
        if best is not None:
            attached = best

    return VehicleState(Pose(q_next, t_next), nu_next[:3], nu_next[3:],
                        joints_next, gripper_next, attached)


_DEFAULT_PARAMS = VehicleParams()


def default_params() -> VehicleParams:
    return VehicleParams()


def kinetic_energy(state: VehicleState, params: VehicleParams) -> float:
    nu = np.concatenate((state.lin_vel, state.ang_vel))
    return float(0.5 * nu @ (params.mass_diagonal() * nu))
