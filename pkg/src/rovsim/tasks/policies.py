"""Scripted expert policies, one phase machine per task family.

Every policy is deterministic given the scene: motion goes through the pose
PID + thrust allocation, arm motion through IK + trapezoidal trajectories.
Policies flag unrecoverable situations (IK failure, grasp timeout) by setting
`failed`; the episode is still recorded.
"""

import math
from dataclasses import dataclass

import numpy as np

from ..control import PosePid, UnreachableError, plan_joint_trajectory, solve_reach
from ..geometry import Pose, quat_to_rotvec, target_in_robot_frame
from ..vehicle import ActionVector, VehicleParams, VehicleState, allocate_thrust, arm_tip

# Staging geometry for grasping: hover so the object sits at this body-frame
# offset, squarely inside the arm's comfortable workspace.
GRASP_OFFSET = np.array([0.65, 0.0, 0.32])
ALIGN_TOL = 0.07       # m
ALIGN_YAW_TOL = 0.12   # rad
ALIGN_HOLD_FRAMES = 5
GRASP_TIMEOUT = 8.0    # s
LIFT_HEIGHT = 0.5      # m commanded ascent
LIFT_SUCCESS = 0.35    # m object rise ending the lift phase


@dataclass
class SimView:
    """What a policy is allowed to see each tick."""
    t: float
    state: VehicleState
    objects: dict            # label -> world position (3,), kept current
    anchors: dict
    boat_pose: Pose | None = None
    images: np.ndarray | None = None        # (2, H, W, 5) when rendered
    target_semantic_id: int = 0


def _yaw_to(src: np.ndarray, dst: np.ndarray) -> float:
    d = dst - src
    return math.atan2(d[1], d[0])


def _hold_pose(position, yaw) -> Pose:
    return Pose.from_axis_angle([0, 0, 1], yaw, position)


class BasePolicy:
    initial_phase = "transit"

    def __init__(self, task, scene, params: VehicleParams, gains=None):
        self.task = task
        self.scene = scene
        self.params = params
        self.pid = PosePid(gains)
        self.phase = self.initial_phase
        self.failed = False
        self.done = False

    def hover_action(self, view: SimView, setpoint: Pose,
                     joint_rates=None, gripper=0.0) -> ActionVector:
        wrench = self.pid.step(setpoint, view.state, 0.1)
        commands, _ = allocate_thrust(wrench, self.params)
        rates = np.zeros(4) if joint_rates is None else joint_rates
        return ActionVector(commands, rates, gripper)

    def step(self, view: SimView) -> ActionVector:
        raise NotImplementedError


class GotoPolicy(BasePolicy):
    """transit -> done: PID to the goal anchor, zero-hold inside the radius."""

    def __init__(self, task, scene, params, gains=None):
        super().__init__(task, scene, params, gains)
        self.goal = scene.anchors[task.target_label].copy()

    def step(self, view: SimView) -> ActionVector:
        pos = view.state.pose.t
        if np.linalg.norm(pos - self.goal) < self.task.goal_radius:
            self.phase = "done"
        if self.phase == "done":
            self.done = True
            return ActionVector.zero()
        setpoint = _hold_pose(self.goal, _yaw_to(pos, self.goal))
        return self.hover_action(view, setpoint)


class FollowPolicy(BasePolicy):
    """Single pursue phase: track the boat at a fixed standoff until time out."""

    initial_phase = "pursue"

    def __init__(self, task, scene, params, gains=None):
        super().__init__(task, scene, params, gains)
        self.depth = 1.0  # hold just under the surface

    def step(self, view: SimView) -> ActionVector:
        boat = view.boat_pose.t
        pos = view.state.pose.t
        to_boat = boat[:2] - pos[:2]
        dist = np.linalg.norm(to_boat)
        bearing = to_boat / dist if dist > 1e-9 else np.array([1.0, 0.0])
        # aim slightly inside the standoff so steady pursuit lag lands on it
        aim_range = self.task.standoff - 0.5
        aim = np.array([boat[0] - aim_range * bearing[0],
                        boat[1] - aim_range * bearing[1],
                        self.depth])
        setpoint = _hold_pose(aim, math.atan2(bearing[1], bearing[0]))
        if view.t >= self.task.nominal_duration:
            self.done = True
        return self.hover_action(view, setpoint)


class SweepPolicy(BasePolicy):
    """transit -> sweep -> done over the scene's ordered waypoint anchors."""

    ADVANCE_RADIUS = 1.1

    def __init__(self, task, scene, params, gains=None, face_center=False):
        super().__init__(task, scene, params, gains)
        names = sorted(k for k in scene.anchors if k.startswith("waypoint_"))
        if not names:
            raise ValueError(f"scene {scene.scenario_id} has no waypoints")
        self.waypoints = np.stack([scene.anchors[k] for k in names])
        self.center = scene.anchors.get("target:wreck") if face_center else None
        self.idx = 0
        self.visited = np.zeros(len(self.waypoints), dtype=bool)

    def coverage(self) -> float:
        return float(self.visited.mean())

    def step(self, view: SimView) -> ActionVector:
        pos = view.state.pose.t
        dists = np.linalg.norm(self.waypoints - pos, axis=1)
        self.visited |= dists < self.task.visit_radius

        if self.phase == "done":
            self.done = True
            return ActionVector.zero()
        wp = self.waypoints[self.idx]
        if np.linalg.norm(pos - wp) < self.ADVANCE_RADIUS:
            if self.idx + 1 < len(self.waypoints):
                self.idx += 1
                self.phase = "sweep"
                wp = self.waypoints[self.idx]
            else:
                self.phase = "done"
                self.done = True
                return ActionVector.zero()
        face = self.center if self.center is not None else wp
        yaw = _yaw_to(pos, face) if np.linalg.norm((face - pos)[:2]) > 0.3 else \
            _yaw_to(pos, wp)
        return self.hover_action(view, _hold_pose(wp, yaw))


class PickPolicy(BasePolicy):
    """approach -> align -> reach -> grasp -> lift -> done."""

    initial_phase = "approach"

    def __init__(self, task, scene, params, gains=None):
        super().__init__(task, scene, params, gains)
        self.obj_label = task.target_label
        start = scene.anchors["start"]
        obj = scene.anchors[f"target:{self.obj_label}"]
        approach_dir = obj[:2] - start[:2]
        approach_dir /= max(np.linalg.norm(approach_dir), 1e-9)
        self.approach_yaw = math.atan2(approach_dir[1], approach_dir[0])
        self.align_count = 0
        self.traj = None
        self.traj_t0 = 0.0
        self.grasp_t0 = None
        self.lift_obj_z0 = None

    def staging_pose(self, obj: np.ndarray) -> Pose:
        c, s = math.cos(self.approach_yaw), math.sin(self.approach_yaw)
        offset_world = np.array([c * GRASP_OFFSET[0] - s * GRASP_OFFSET[1],
                                 s * GRASP_OFFSET[0] + c * GRASP_OFFSET[1],
                                 GRASP_OFFSET[2]])
        return _hold_pose(obj - offset_world, self.approach_yaw)

    def _staging_error(self, view, staging: Pose):
        pos_err = np.linalg.norm(view.state.pose.t - staging.t)
        rel = target_in_robot_frame(staging, view.state.pose)
        yaw_err = abs(quat_to_rotvec(rel.q)[2])
        return pos_err, yaw_err

    def _object_in_body(self, view) -> np.ndarray:
        obj = view.objects[self.obj_label]
        return target_in_robot_frame(Pose(t=obj), view.state.pose).t

    def step(self, view: SimView) -> ActionVector:
        obj = view.objects[self.obj_label]
        staging = self.staging_pose(obj)

        if self.phase == "approach":
            pos_err, yaw_err = self._staging_error(view, staging)
            if pos_err < ALIGN_TOL * 2 and yaw_err < ALIGN_YAW_TOL * 2:
                self.phase = "align"
                self.align_count = 0
            return self.hover_action(view, staging, gripper=1.0)

        if self.phase == "align":
            pos_err, yaw_err = self._staging_error(view, staging)
            if pos_err > ALIGN_TOL * 3 or yaw_err > ALIGN_YAW_TOL * 3:
                self.phase = "approach"  # lost alignment, re-approach
                return self.hover_action(view, staging, gripper=1.0)
            if pos_err < ALIGN_TOL and yaw_err < ALIGN_YAW_TOL:
                self.align_count += 1
            else:
                self.align_count = 0
            if self.align_count >= ALIGN_HOLD_FRAMES:
                try:
                    goal_joints = solve_reach(self._object_in_body(view), self.params)
                except UnreachableError:
                    self.failed = True
                    self.phase = "done"
                    self.done = True
                    return ActionVector.zero()
                self.traj = plan_joint_trajectory(view.state.joints, goal_joints,
                                                  vmax=self.params.joint_vmax, amax=2.0)
                self.traj_t0 = view.t
                self.phase = "reach"
            return self.hover_action(view, staging, gripper=1.0)

        if self.phase == "reach":
            t_rel = view.t - self.traj_t0
            q_ref, _ = self.traj.sample(t_rel + 0.1)
            rates = np.clip((q_ref - view.state.joints) / 0.1,
                            -self.params.joint_vmax, self.params.joint_vmax)
            if t_rel >= self.traj.duration + 0.2:
                self.phase = "grasp"
                self.grasp_t0 = view.t
            return self.hover_action(view, staging, joint_rates=rates, gripper=1.0)

        if self.phase == "grasp":
            if view.state.attached == self.obj_label:
                self.phase = "lift"
                self.lift_obj_z0 = obj[2]
                return self.hover_action(view, staging, gripper=-1.0)
            if view.t - self.grasp_t0 > GRASP_TIMEOUT:
                self.failed = True
                self.phase = "done"
                self.done = True
                return ActionVector.zero()
            # servo the tip onto the (possibly drifted) object, then close
            try:
                q_des = solve_reach(self._object_in_body(view), self.params)
            except UnreachableError:
                q_des = view.state.joints
            rates = np.clip((q_des - view.state.joints) / 0.3,
                            -self.params.joint_vmax, self.params.joint_vmax)
            tip = view.state.pose.apply(arm_tip(view.state.joints, self.params))
            close = np.linalg.norm(tip - obj) < 0.8 * self.params.grasp_radius
            return self.hover_action(view, staging, joint_rates=rates,
                                     gripper=-1.0 if close else 1.0)

        if self.phase == "lift":
            up = staging.t + np.array([0.0, 0.0, -LIFT_HEIGHT])
            if self.lift_obj_z0 - obj[2] >= LIFT_SUCCESS:
                self.phase = self.after_lift_phase()
                if self.phase == "done":
                    self.done = True
                    return ActionVector.zero()
            return self.hover_action(view, _hold_pose(up, self.approach_yaw),
                                     gripper=-1.0)

        return self.handle_extra_phases(view, obj)

    def after_lift_phase(self) -> str:
        return "done"

    def handle_extra_phases(self, view, obj) -> ActionVector:
        self.done = True
        return ActionVector.zero()


class TransferPolicy(PickPolicy):
    """Pick phases, then carry -> release -> done over the drop box."""

    def __init__(self, task, scene, params, gains=None):
        super().__init__(task, scene, params, gains)
        self.box = scene.anchors["drop_box"].copy()
        self.release_t0 = None

    def after_lift_phase(self) -> str:
        return "carry"

    def handle_extra_phases(self, view, obj) -> ActionVector:
        # park so the forward-mounted gripper tip, not the hull, sits over the box
        c, s = math.cos(self.approach_yaw), math.sin(self.approach_yaw)
        tip_forward = GRASP_OFFSET[0]
        carry_pose = _hold_pose(self.box + np.array([-tip_forward * c,
                                                     -tip_forward * s, -0.9]),
                                self.approach_yaw)
        if self.phase == "carry":
            horiz = np.linalg.norm((view.state.pose.t - carry_pose.t)[:2])
            if horiz < 0.3:
                self.phase = "release"
                self.release_t0 = view.t
            return self.hover_action(view, carry_pose, gripper=-1.0)
        if self.phase == "release":
            if view.state.attached is None and view.t - self.release_t0 > 0.5:
                self.phase = "done"
                self.done = True
                return ActionVector.zero()
            return self.hover_action(view, carry_pose, gripper=1.0)
        self.done = True
        return ActionVector.zero()


def make_policy(task, scene, params: VehicleParams, gains=None) -> BasePolicy:
    family = task.family
    if family == "goto":
        return GotoPolicy(task, scene, params, gains)
    if family == "follow":
        return FollowPolicy(task, scene, params, gains)
    if family == "scan":
        return SweepPolicy(task, scene, params, gains, face_center=True)
    if family == "inspect":
        return SweepPolicy(task, scene, params, gains, face_center=False)
    if family == "pick":
        return PickPolicy(task, scene, params, gains)
    if family == "transfer":
        return TransferPolicy(task, scene, params, gains)
    raise ValueError(f"unknown task family {family!r}")
