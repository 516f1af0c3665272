"""Episode rollout engine: scripted policy + physics + sensors at 10 Hz.

Physics runs at 100 Hz (10 substeps per recorded frame); the action chosen
at frame k is held for the whole 0.1 s tick. All randomness derives from the
episode seed through named SeedSequence children, so a rollout is
bit-reproducible regardless of scheduling.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ..geometry import Pose, target_in_robot_frame
from ..vehicle import (
    ActionVector,
    VehicleState,
    arm_tip,
    attached_object_pose,
    step_dynamics,
)
from ..world import (
    build_scenario,
    camera_rig_pose,
    dvl_read,
    imu_read,
    pressure_read,
    render_stereo,
)
from .catalog import GRASPING_FAMILIES, TaskSpec
from .policies import SimView, make_policy

PHYSICS_DT = 0.01
SUBSTEPS = 10
FRAME_DT = PHYSICS_DT * SUBSTEPS
BOAT_SPEED = 0.5  # m/s


@dataclass
class EpisodeTrace:
    task_id: str
    seed: int
    numeric: np.ndarray            # (frames, 66) float64, dataset layout
    images: np.ndarray | None      # (frames, 2, H, W, 5) float32
    phases: list
    success: bool
    final_distance: float
    failed_policy: bool
    aux: dict = field(default_factory=dict)

    @property
    def frames(self) -> int:
        return self.numeric.shape[0]


def _goal_anchor(scene, task) -> np.ndarray:
    if task.family == "follow":
        return scene.anchors["boat_start"]
    if task.target_label in scene.anchors:
        return scene.anchors[task.target_label]
    return scene.anchors[f"target:{task.target_label}"]


def _spawn_state(scene, task, rng) -> VehicleState:
    start = scene.anchors["start"] + np.concatenate([rng.uniform(-0.3, 0.3, 2), [0.0]])
    goal = _goal_anchor(scene, task)
    yaw = math.atan2(goal[1] - start[1], goal[0] - start[0])
    return VehicleState(pose=Pose.from_axis_angle([0, 0, 1], yaw, start))


def _boat_pose(scene, t: float) -> Pose:
    start = scene.anchors["boat_start"]
    course = scene.anchors["boat_course"]
    heading = math.atan2(course[1], course[0])
    return Pose.from_axis_angle([0, 0, 1], heading, start + course * BOAT_SPEED * t)


def _nearest_polyline_point(points: np.ndarray, p: np.ndarray) -> np.ndarray:
    best, best_d = points[0], float("inf")
    for a, b in zip(points[:-1], points[1:]):
        seg = b - a
        denom = float(seg @ seg)
        s = 0.0 if denom == 0 else float(np.clip((p - a) @ seg / denom, 0.0, 1.0))
        candidate = a + s * seg
        d = float(np.linalg.norm(candidate - p))
        if d < best_d:
            best, best_d = candidate, d
    return best.copy()


class _World:
    """Mutable episode-world bookkeeping around the immutable scene."""

    def __init__(self, scene, task, params):
        self.scene = scene
        self.task = task
        self.params = params
        self.object_poses = {}
        for label in ("red_cylinder", "blue_cylinder", "pipe_piece0", "pipe_piece1"):
            try:
                idx = scene.find(label)
            except KeyError:
                continue
            p = scene.primitives[idx].pose
            self.object_poses[label] = Pose(p.q, p.t)
        self.has_boat = "boat_start" in scene.anchors
        self.pipe_points = None
        if task.family == "inspect":
            prim = scene.primitives[scene.find(task.target_prim_label)]
            self.pipe_points = prim.points

    def object_positions(self) -> dict:
        return {k: v.t for k, v in self.object_poses.items()}

    def sync_attached(self, state: VehicleState):
        if state.attached and state.attached in self.object_poses:
            self.object_poses[state.attached] = attached_object_pose(state, self.params)

    def render_overrides(self, t: float) -> dict:
        overrides = {}
        for label, pose in self.object_poses.items():
            idx = self.scene.find(label)
            if not np.array_equal(pose.to_array(), self.scene.primitives[idx].pose.to_array()):
                overrides[idx] = pose
        if self.has_boat:
            overrides[self.scene.find("boat")] = _boat_pose(self.scene, t)
        return overrides

    def target_pose(self, t: float, state: VehicleState) -> Pose:
        task = self.task
        if task.family in GRASPING_FAMILIES:
            return self.object_poses[task.target_label]
        if task.family == "follow":
            return _boat_pose(self.scene, t)
        if task.family == "inspect":
            # target = the pipe section under inspection (nearest point)
            return Pose(t=_nearest_polyline_point(self.pipe_points, state.pose.t))
        return Pose(t=self.scene.anchors[task.target_label])


def run_episode(task: TaskSpec, seed: int, config: dict,
                record_images: bool = True, policy=None) -> EpisodeTrace:
    """Roll out one episode; `policy` defaults to the task's scripted expert.

    Alternative policies only need .step(view) -> ActionVector plus .done,
    .failed, and .phase attributes; set .needs_images for visual policies.
    """
    from ..config import (camera_from_config, gains_from_config,
                          sensor_noise_from_config, vehicle_params_from_config)

    params = vehicle_params_from_config(config)
    gains = gains_from_config(config)
    noise = sensor_noise_from_config(config)
    camera = camera_from_config(config)

    ss = np.random.SeedSequence(seed)
    scene_seed, spawn_seed, sensor_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(3))
    scene = build_scenario(task.scenario_spec(), scene_seed)
    state = _spawn_state(scene, task, np.random.default_rng(spawn_seed))
    sensor_rng = np.random.default_rng(sensor_seed)

    world = _World(scene, task, params)
    if policy is None:
        policy = make_policy(task, scene, params, gains)
    render_frames = record_images or getattr(policy, "needs_images", False)
    max_frames = int(round(task.timeout * 10))
    try:
        target_sem = scene.semantic_id(scene.find(task.target_prim_label))
    except KeyError:
        target_sem = 0

    # policy-independent success bookkeeping
    wp_names = sorted(k for k in scene.anchors if k.startswith("waypoint_"))
    waypoints = (np.stack([scene.anchors[k] for k in wp_names])
                 if wp_names else None)
    visited = np.zeros(0 if waypoints is None else len(waypoints), dtype=bool)

    rows, images, phases = [], [], []
    standoffs = []
    prev_action = np.zeros(13)
    prev_v_world = state.pose.rotation_matrix() @ state.lin_vel
    obj_z0 = (world.object_poses[task.target_label].t[2]
              if task.family in GRASPING_FAMILIES else 0.0)
    policy_crashed = False

    for k in range(max_frames):
        t = k * 0.1
        boat = _boat_pose(scene, t) if world.has_boat else None

        frame_pair = None
        if render_frames:
            frame = render_stereo(scene, camera_rig_pose(state.pose), camera,
                                  overrides=world.render_overrides(t))
            frame_pair = np.stack([frame.left, frame.right])

        view = SimView(t=t, state=state, objects=world.object_positions(),
                       anchors=scene.anchors, boat_pose=boat,
                       images=frame_pair, target_semantic_id=target_sem)
        try:
            action = policy.step(view)
        except Exception:
            policy_crashed = True
            action = ActionVector.zero()
        phases.append(policy.phase)

        # observations at t
        v_world = state.pose.rotation_matrix() @ state.lin_vel
        accel_world = (v_world - prev_v_world) / FRAME_DT if k > 0 else np.zeros(3)
        prev_v_world = v_world
        gyro, accel = imu_read(state, accel_world, noise, sensor_rng)
        dvl_v, altitude, _ = dvl_read(state, scene, noise, sensor_rng)
        depth = max(state.pose.t[2], 0.0)
        pressure, depth_est = pressure_read(depth, noise, sensor_rng)

        target_world = world.target_pose(t, state)
        label = target_in_robot_frame(target_world, state.pose)

        row = np.empty(66)
        row[0] = t
        row[1:4] = gyro
        row[4:7] = accel
        row[7:10] = dvl_v
        row[10] = altitude
        row[11] = pressure
        row[12] = depth_est
        row[13:26] = prev_action
        row[26:33] = state.pose.to_array()
        row[33:36] = state.lin_vel
        row[36:39] = state.ang_vel
        row[39:52] = action.as_array()
        row[52:59] = label.to_array()
        row[59:66] = target_world.to_array()
        rows.append(row)
        if record_images:
            images.append(frame_pair)

        if task.family == "follow":
            standoffs.append(float(np.linalg.norm(boat.t - state.pose.t)))
        if waypoints is not None:
            dists = np.linalg.norm(waypoints - state.pose.t, axis=1)
            visited |= dists < task.visit_radius

        prev_action = action.as_array()
        if policy.done or policy_crashed:
            break
        graspables = (world.object_positions()
                      if task.family in GRASPING_FAMILIES else None)
        for _ in range(SUBSTEPS):
            state = step_dynamics(state, action, params, PHYSICS_DT,
                                  terrain_depth=scene.terrain_depth - 0.1,
                                  graspables=graspables)
            world.sync_attached(state)

    numeric = np.stack(rows)
    numeric[:, 0] = np.arange(len(rows), dtype=np.float64) * 0.1  # exact rule
    image_block = np.stack(images).astype(np.float32) if record_images else None

    aux = {
        "final_state": state,
        "target_semantic_id": target_sem,
        "coverage": float(visited.mean()) if len(visited) else 0.0,
        "standoffs": np.asarray(standoffs),
        "object_z0": obj_z0,
        "object_poses": {k: v.to_array() for k, v in world.object_poses.items()},
        "attached": state.attached,
        "gripper_tip": state.pose.apply(arm_tip(state.joints, params)),
        "box_anchor": scene.anchors.get("drop_box"),
        "target_final": world.target_pose(len(rows) * 0.1, state).t,
    }
    trace = EpisodeTrace(task.task_id, seed, numeric, image_block, phases,
                         success=False, final_distance=math.nan,
                         failed_policy=policy.failed or policy_crashed, aux=aux)
    trace.success, trace.final_distance = success_check(task, trace)
    return trace


def success_check(task: TaskSpec, trace: EpisodeTrace):
    """Family-specific success predicate plus the final-distance metric.

    Distance is gripper-to-object for the grasping family, robot-to-target
    otherwise.
    """
    aux = trace.aux
    robot_final = trace.numeric[-1, 26:33][4:]
    target_final = np.asarray(aux["target_final"])
    if task.family in GRASPING_FAMILIES:
        obj = np.asarray(aux["object_poses"][task.target_label][4:])
        distance = float(np.linalg.norm(np.asarray(aux["gripper_tip"]) - obj))
    else:
        distance = float(np.linalg.norm(robot_final - target_final))

    if trace.failed_policy:
        return False, distance
    if task.family == "goto":
        goal = target_final
        return bool(np.linalg.norm(robot_final - goal) <= task.goal_radius), distance
    if task.family == "follow":
        s = aux["standoffs"]
        lo, hi = task.standoff_band
        ok = np.mean((s >= lo) & (s <= hi)) if len(s) else 0.0
        return bool(ok >= 0.8), distance
    if task.family in ("scan", "inspect"):
        return bool(aux["coverage"] >= task.coverage_fraction), distance
    if task.family == "pick":
        obj_z = aux["object_poses"][task.target_label][6]
        lifted = aux["object_z0"] - obj_z >= 0.3
        return bool(aux["attached"] == task.target_label and lifted), distance
    if task.family == "transfer":
        if aux["attached"] is not None or aux["box_anchor"] is None:
            return False, distance
        obj = np.asarray(aux["object_poses"][task.target_label][4:])
        box = np.asarray(aux["box_anchor"])
        horiz_ok = np.all(np.abs(obj[:2] - box[:2]) <= 0.5)
        vert_ok = box[2] - 1.4 <= obj[2] <= box[2] + 0.1
        return bool(horiz_ok and vert_ok), distance
    raise ValueError(f"unknown family {task.family!r}")
