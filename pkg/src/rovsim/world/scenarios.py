"""Parametric randomized scene construction for the nine scenarios.

Each builder is a deterministic function of (scenario spec, seed): object
centers sample uniformly inside the ScenarioSpec placement bounds, optics
inside its ranges, everything in a fixed draw order so a seed pins the
scene field-for-field.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ..geometry import Pose
from .scene import Primitive, SceneGraph, WaterOptics

SCENARIO_IDS = (
    "seabed", "pipeline", "industrial_pool", "charge_station", "lake",
    "open_sea", "factory", "wreck_modern", "wreck_ancient",
)

RED = np.array([0.75, 0.08, 0.08])
BLUE = np.array([0.10, 0.15, 0.75])
PIPE_YELLOW = np.array([0.70, 0.60, 0.15])
SAND = np.array([0.55, 0.50, 0.35])
STEEL = np.array([0.45, 0.45, 0.50])
WOOD = np.array([0.40, 0.28, 0.15])
HULL = np.array([0.30, 0.32, 0.35])


@dataclass
class ScenarioSpec:
    scenario_id: str
    terrain_depth: float
    placements: dict = field(default_factory=dict)  # label -> (lo(3,), hi(3,))
    attenuation_lo: np.ndarray = field(default_factory=lambda: np.array([0.08, 0.04, 0.02]))
    attenuation_hi: np.ndarray = field(default_factory=lambda: np.array([0.35, 0.12, 0.08]))
    ambient_range: tuple = (0.55, 1.0)
    object_jitter: float = 0.0  # extra half-width added to graspable bounds

    def __post_init__(self):
        if self.scenario_id not in SCENARIO_IDS:
            raise ValueError(f"unknown scenario id {self.scenario_id!r}")
        self.attenuation_lo = np.asarray(self.attenuation_lo, dtype=float)
        self.attenuation_hi = np.asarray(self.attenuation_hi, dtype=float)
        widened = {}
        for label, (lo, hi) in self.placements.items():
            lo = np.asarray(lo, dtype=float).copy()
            hi = np.asarray(hi, dtype=float).copy()
            if self.object_jitter and label in GRASPABLE_LABELS:
                lo[:2] -= self.object_jitter
                hi[:2] += self.object_jitter
            widened[label] = (lo, hi)
        self.placements = widened


GRASPABLE_LABELS = ("red_cylinder", "blue_cylinder", "pipe_piece0", "pipe_piece1")


def _sample_optics(spec: ScenarioSpec, rng: np.random.Generator) -> WaterOptics:
    att = rng.uniform(spec.attenuation_lo, spec.attenuation_hi)
    ambient = float(rng.uniform(*spec.ambient_range))
    az = rng.uniform(0.0, 2.0 * math.pi)
    tilt = rng.uniform(0.05, 0.45)
    sun = np.array([math.sin(tilt) * math.cos(az),
                    math.sin(tilt) * math.sin(az),
                    math.cos(tilt)])
    return WaterOptics(attenuation=att, ambient=ambient, sun_dir=sun)


def _place(spec: ScenarioSpec, label: str, rng: np.random.Generator) -> np.ndarray:
    lo, hi = spec.placements[label]
    return rng.uniform(lo, hi)


def _ground(depth: float) -> Primitive:
    return Primitive("plane", Pose(t=[0, 0, depth]), np.zeros(3), "seafloor", SAND)


def _upright_cylinder(label, center, color, radius=0.04, half_h=0.12):
    return Primitive("cylinder", Pose(t=center), np.array([radius, half_h, 0]),
                     label, color)


def _lying_capsule(label, center, color, rng, radius=0.04, half_l=0.15):
    yaw = rng.uniform(0, 2 * math.pi)
    # local z (the capsule axis) laid into the horizontal plane
    q_tilt = Pose.from_axis_angle([0, 1, 0], math.pi / 2).q
    pose = Pose(np.array(_quat_mul_yaw(yaw, q_tilt)), center)
    return Primitive("capsule", pose, np.array([radius, half_l, 0]), label, color)


def _quat_mul_yaw(yaw, q):
    from ..geometry import quat_from_axis_angle, quat_mul
    return quat_mul(quat_from_axis_angle([0, 0, 1], yaw), q)


def _graspables_on_floor(spec, rng, depth, prims, anchors):
    """Standard set of four pickable objects plus the drop box."""
    for label in GRASPABLE_LABELS:
        center = _place(spec, label, rng)
        if label.endswith("cylinder"):
            center[2] = depth - 0.12
            color = RED if label.startswith("red") else BLUE
            prims.append(_upright_cylinder(label, center, color))
        else:
            center[2] = depth - 0.04
            prims.append(_lying_capsule(label, center, PIPE_YELLOW, rng))
        anchors[f"target:{label}"] = center.copy()
    box_center = _place(spec, "drop_box", rng)
    box_center[2] = depth - 0.15
    prims.append(Primitive("box", Pose(t=box_center), np.array([0.4, 0.4, 0.15]),
                           "drop_box", STEEL))
    anchors["drop_box"] = box_center.copy()


def _rocks(rng, n, half_range, depth, prims):
    for i in range(n):
        r = rng.uniform(0.25, 0.8)
        c = np.array([rng.uniform(-half_range, half_range),
                      rng.uniform(-half_range, half_range),
                      depth - r * 0.4])
        prims.append(Primitive("sphere", Pose(t=c), np.array([r, 0, 0]),
                               f"rock_{i}", SAND * rng.uniform(0.7, 1.0)))


def _ring_waypoints(center, radius, n, z, anchors, rng, phase=0.0):
    for i in range(n):
        a = phase + 2 * math.pi * i / n
        anchors[f"waypoint_{i:02d}"] = np.array([center[0] + radius * math.cos(a),
                                                 center[1] + radius * math.sin(a), z])


def _polyline_waypoints(points, height_above, anchors, every=2.5):
    """Waypoints along a polyline, height_above meters over the pipe axis."""
    idx = 0
    for a, b in zip(points[:-1], points[1:]):
        seg = b - a
        length = float(np.linalg.norm(seg))
        steps = max(1, int(length // every))
        for s in range(steps):
            p = a + seg * (s / steps)
            anchors[f"waypoint_{idx:02d}"] = p + np.array([0, 0, -height_above])
            idx += 1
    anchors[f"waypoint_{idx:02d}"] = points[-1] + np.array([0, 0, -height_above])


# ---------------------------------------------------------------------------
# scenario builders

def _build_seabed(spec, rng):
    depth = spec.terrain_depth
    prims, anchors = [_ground(depth)], {}
    _graspables_on_floor(spec, rng, depth, prims, anchors)
    _rocks(rng, 5, 8.0, depth, prims)
    anchors["start"] = np.array([-5.0 + rng.uniform(-0.5, 0.5),
                                 rng.uniform(-0.5, 0.5), depth - 1.2])
    return prims, anchors


def _build_factory(spec, rng):
    depth = spec.terrain_depth
    prims, anchors = [_ground(depth)], {}
    _graspables_on_floor(spec, rng, depth, prims, anchors)
    # machinery: a row of steel boxes and a tank
    for i in range(3):
        c = np.array([rng.uniform(2.0, 6.0), -4.0 + 3.0 * i, depth - 0.8])
        prims.append(Primitive("box", Pose(t=c), np.array([0.7, 0.6, 0.8]),
                               f"machine_{i}", STEEL))
    prims.append(Primitive("cylinder", Pose(t=[6.5, 4.0, depth - 1.5]),
                           np.array([0.9, 1.5, 0]), "tank", STEEL * 0.8))
    anchors["start"] = np.array([-5.0 + rng.uniform(-0.5, 0.5),
                                 rng.uniform(-0.5, 0.5), depth - 1.2])
    return prims, anchors


def _build_pipeline(spec, rng):
    depth = spec.terrain_depth
    prims, anchors = [_ground(depth)], {}
    xs = np.linspace(0.0, 52.0, 9)
    ys = np.cumsum(rng.uniform(-2.0, 2.0, size=9))
    pts = np.stack([xs, ys, np.full(9, depth - 0.25)], axis=1)
    prims.append(Primitive("pipe", Pose(), np.array([0.25, 0, 0]), "pipeline",
                           PIPE_YELLOW, points=pts))
    _polyline_waypoints(pts, 1.5, anchors, every=2.6)
    _rocks(rng, 4, 10.0, depth, prims)
    anchors["start"] = pts[0] + np.array([-3.0, rng.uniform(-1, 1), -2.0])
    anchors["target:pipeline"] = pts[len(pts) // 2].copy()
    return prims, anchors


def _build_industrial_pool(spec, rng):
    depth = spec.terrain_depth
    prims, anchors = [_ground(depth)], {}
    # pool walls: four boxes enclosing a 24 x 16 m basin
    wall_h = depth / 2.0
    for cx, cy, hx, hy in ((0, 8.5, 12.5, 0.5), (0, -8.5, 12.5, 0.5),
                           (12.5, 0, 0.5, 8.0), (-12.5, 0, 0.5, 8.0)):
        prims.append(Primitive("box", Pose(t=[cx, cy, depth - wall_h]),
                               np.array([hx, hy, wall_h]), "pool_wall", STEEL * 0.9))
    # serpentine pipe across the basin floor
    pts = []
    y = -6.0
    for lane in range(5):
        x0, x1 = (-10.0, 10.0) if lane % 2 == 0 else (10.0, -10.0)
        pts.append([x0, y, depth - 0.25])
        pts.append([x1, y, depth - 0.25])
        y += 3.0
    pts = np.asarray(pts) + np.concatenate(
        [rng.uniform(-0.3, 0.3, size=(len(pts), 2)), np.zeros((len(pts), 1))], axis=1)
    prims.append(Primitive("pipe", Pose(), np.array([0.2, 0, 0]), "pool_pipe",
                           PIPE_YELLOW, points=pts))
    _polyline_waypoints(pts, 1.5, anchors, every=2.6)
    anchors["start"] = np.array([-11.0, -7.0 + rng.uniform(-0.5, 0.5), depth - 2.5])
    anchors["target:pool_pipe"] = pts[len(pts) // 2].copy()
    return prims, anchors


def _build_charge_station(spec, rng):
    depth = spec.terrain_depth
    prims, anchors = [_ground(depth)], {}
    c = _place(spec, "charge_station", rng)
    c[2] = depth - 1.0
    prims.append(Primitive("box", Pose(t=c), np.array([1.0, 1.0, 1.0]),
                           "charge_station", STEEL))
    prims.append(Primitive("cylinder", Pose(t=c + [0, 0, -1.6]),
                           np.array([0.15, 0.6, 0]), "charge_mast", PIPE_YELLOW))
    anchors["charge_station"] = c + np.array([-1.8, 0.0, -0.5])  # dock point
    _rocks(rng, 3, 6.0, depth, prims)
    anchors["start"] = c + np.array([-18.3 + rng.uniform(-0.6, 0.6),
                                     rng.uniform(-1.0, 1.0), -0.5])
    return prims, anchors


def _build_lake(spec, rng):
    depth = spec.terrain_depth
    prims, anchors = [_ground(depth)], {}
    c = _place(spec, "water_tower", rng)
    c[2] = depth - 2.5
    prims.append(Primitive("cylinder", Pose(t=c), np.array([1.5, 2.5, 0]),
                           "water_tower", STEEL))
    for i in range(4):
        a = math.pi / 4 + i * math.pi / 2
        leg = c + np.array([2.2 * math.cos(a), 2.2 * math.sin(a), 1.5])
        prims.append(Primitive("cylinder", Pose(t=leg), np.array([0.12, 1.0, 0]),
                               f"tower_leg_{i}", STEEL * 0.8))
    anchors["water_tower"] = c + np.array([-3.0, 0.0, 1.0])
    _rocks(rng, 4, 10.0, depth, prims)
    anchors["start"] = c + np.array([-33.5 + rng.uniform(-0.8, 0.8),
                                     rng.uniform(-1.5, 1.5), 1.0])
    return prims, anchors


def _build_open_sea(spec, rng):
    depth = spec.terrain_depth
    prims, anchors = [_ground(depth)], {}
    b = _place(spec, "boat", rng)
    b[2] = 0.0  # waterline
    prims.append(Primitive("box", Pose(t=b), np.array([1.2, 0.5, 0.3]), "boat", HULL))
    heading = rng.uniform(0.0, 2 * math.pi)
    anchors["boat_start"] = b.copy()
    anchors["boat_course"] = np.array([math.cos(heading), math.sin(heading), 0.0])
    # spawn already inside the standoff band so pursuit starts in range
    anchors["start"] = b + np.array([-2.8 * math.cos(heading),
                                     -2.8 * math.sin(heading), 1.0])
    return prims, anchors


def _wreck_common(spec, rng, hull_prims, radius, n_wp):
    depth = spec.terrain_depth
    prims, anchors = [_ground(depth)], {}
    c = _place(spec, "wreck", rng)
    c[2] = depth - 1.2
    prims.extend(hull_prims(c, rng))
    anchors["target:wreck"] = c.copy()
    phase = rng.uniform(0, 2 * math.pi)
    _ring_waypoints(c, radius, n_wp, depth - 3.5, anchors, rng, phase)
    first = anchors["waypoint_00"]
    anchors["start"] = first + np.array([rng.uniform(-1, 1), rng.uniform(-1, 1), -1.0])
    return prims, anchors


def _build_wreck_modern(spec, rng):
    def hull(c, rng):
        yaw = rng.uniform(0, 2 * math.pi)
        pose = Pose.from_axis_angle([0, 0, 1], yaw, c)
        deck = Pose.from_axis_angle([0, 0, 1], yaw, c + [0, 0, -1.6])
        return [Primitive("box", pose, np.array([4.5, 1.3, 1.2]), "wreck_hull", HULL),
                Primitive("box", deck, np.array([1.5, 0.9, 0.6]), "wreck_bridge", STEEL)]
    return _wreck_common(spec, rng, hull, radius=10.5, n_wp=9)


def _build_wreck_ancient(spec, rng):
    def hull(c, rng):
        yaw = rng.uniform(0, 2 * math.pi)
        q = _quat_mul_yaw(yaw, Pose.from_axis_angle([0, 1, 0], math.pi / 2).q)
        mast = Pose.from_axis_angle([0, 0, 1], yaw, c + [0, 0, -2.2])
        return [Primitive("capsule", Pose(np.array(q), c), np.array([1.4, 3.5, 0]),
                          "wreck_hull", WOOD),
                Primitive("cylinder", mast, np.array([0.15, 1.8, 0]), "wreck_mast", WOOD)]
    return _wreck_common(spec, rng, hull, radius=11.5, n_wp=10)


_BUILDERS = {
    "seabed": _build_seabed,
    "pipeline": _build_pipeline,
    "industrial_pool": _build_industrial_pool,
    "charge_station": _build_charge_station,
    "lake": _build_lake,
    "open_sea": _build_open_sea,
    "factory": _build_factory,
    "wreck_modern": _build_wreck_modern,
    "wreck_ancient": _build_wreck_ancient,
}


def default_spec(scenario_id: str, object_jitter: float = 0.0) -> ScenarioSpec:
    """Declared placement bounds and depth per scenario."""
    graspable_bounds = {
        "red_cylinder": ([1.5, -2.5, 0], [3.5, -0.5, 0]),
        "blue_cylinder": ([1.5, 0.5, 0], [3.5, 2.5, 0]),
        "pipe_piece0": ([4.0, -2.0, 0], [5.5, -0.5, 0]),
        "pipe_piece1": ([4.0, 0.5, 0], [5.5, 2.0, 0]),
        "drop_box": ([-1.0, 3.5, 0], [1.0, 5.0, 0]),
    }
    table = {
        "seabed": (6.0, dict(graspable_bounds)),
        "factory": (5.0, dict(graspable_bounds)),
        "pipeline": (12.0, {}),
        "industrial_pool": (4.5, {}),
        "charge_station": (8.0, {"charge_station": ([4.0, -2.0, 0], [7.0, 2.0, 0])}),
        "lake": (7.0, {"water_tower": ([8.0, -4.0, 0], [12.0, 4.0, 0])}),
        "open_sea": (30.0, {"boat": ([-3.0, -3.0, 0], [3.0, 3.0, 0])}),
        "wreck_modern": (15.0, {"wreck": ([-2.0, -2.0, 0], [2.0, 2.0, 0])}),
        "wreck_ancient": (18.0, {"wreck": ([-2.0, -2.0, 0], [2.0, 2.0, 0])}),
    }
    depth, placements = table[scenario_id]
    return ScenarioSpec(scenario_id, depth, placements, object_jitter=object_jitter)


def build_scenario(spec: ScenarioSpec, seed: int) -> SceneGraph:
    rng = np.random.default_rng(seed)
    optics = _sample_optics(spec, rng)
    prims, anchors = _BUILDERS[spec.scenario_id](spec, rng)
    return SceneGraph(spec.scenario_id, prims, optics, spec.terrain_depth, anchors)
