"""Stereo raycast renderer over scene primitives.

Rays are cast in float64 against every primitive (closest hit wins); shading
is per-channel exponential water attenuation on the primitive base color:

    channel = base * ambient * exp(-attenuation * hit_distance)

Misses get the water background color and a +inf depth sentinel. Output
images are float32 with channels (R, G, B, depth_m, semantic_id).

Camera frame: x right, y down, z forward (pinhole); the stereo baseline is
along camera x, left eye at -baseline/2.
"""

from dataclasses import dataclass

import numpy as np

from ..geometry import Pose
from .scene import BACKGROUND_ID, SceneGraph

_EPS = 1e-9

# Optical axes expressed in the vehicle body frame (FRD): camera right = body
# right, camera down = body down, camera forward = body forward.
CAMERA_IN_BODY = Pose(
    q=np.array([0.5, 0.5, 0.5, 0.5]),  # columns: y, z, x
    t=np.array([0.25, 0.0, 0.05]),
)

IMAGE_CHANNELS = 5


@dataclass
class CameraParams:
    width: int = 64
    height: int = 64
    focal_px: float = 32.0
    cx: float | None = None
    cy: float | None = None
    baseline: float = 0.1  # m

    def __post_init__(self):
        if self.cx is None:
            self.cx = self.width / 2.0
        if self.cy is None:
            self.cy = self.height / 2.0


@dataclass
class StereoFrame:
    left: np.ndarray   # (H, W, 5) float32
    right: np.ndarray
    camera: CameraParams


def pixel_rays(cam: CameraParams) -> np.ndarray:
    """Unit ray directions through all pixel centers, camera frame, (H*W, 3)."""
    u = (np.arange(cam.width) + 0.5 - cam.cx) / cam.focal_px
    v = (np.arange(cam.height) + 0.5 - cam.cy) / cam.focal_px
    uu, vv = np.meshgrid(u, v)
    dirs = np.stack([uu.ravel(), vv.ravel(), np.ones(uu.size)], axis=1)
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def project_point(cam: CameraParams, p_cam: np.ndarray):
    """Continuous image coordinates (u, v) of a camera-frame point (z > 0)."""
    if p_cam[2] <= 0:
        raise ValueError("point is behind the camera")
    u = cam.cx + cam.focal_px * p_cam[0] / p_cam[2]
    v = cam.cy + cam.focal_px * p_cam[1] / p_cam[2]
    return u, v


def _safe_div(num, den):
    den = np.where(np.abs(den) < 1e-300, np.where(den < 0, -1e-300, 1e-300), den)
    return num / den


def _ray_sphere(o, d, center, radius):
    oc = o - center
    b = np.einsum("ij,ij->i", oc, d)
    c = np.einsum("ij,ij->i", oc, oc) - radius * radius
    disc = b * b - c
    hit = disc >= 0.0
    sq = np.sqrt(np.where(hit, disc, 0.0))
    t0 = -b - sq
    t1 = -b + sq
    t = np.where(t0 > _EPS, t0, t1)
    return np.where(hit & (t > _EPS), t, np.inf)


def _ray_box(o, d, pose: Pose, half):
    R = pose.rotation_matrix()
    ol = (o - pose.t) @ R
    dl = d @ R
    inv = _safe_div(1.0, dl)
    t1 = (-half - ol) * inv
    t2 = (half - ol) * inv
    tmin = np.max(np.minimum(t1, t2), axis=1)
    tmax = np.min(np.maximum(t1, t2), axis=1)
    hit = (tmax >= np.maximum(tmin, 0.0)) & (tmax > _EPS)
    t = np.where(tmin > _EPS, tmin, tmax)
    return np.where(hit, t, np.inf)


def _ray_cylinder(o, d, pose: Pose, radius, half_h):
    R = pose.rotation_matrix()
    ol = (o - pose.t) @ R
    dl = d @ R
    a = dl[:, 0] ** 2 + dl[:, 1] ** 2
    b = ol[:, 0] * dl[:, 0] + ol[:, 1] * dl[:, 1]
    c = ol[:, 0] ** 2 + ol[:, 1] ** 2 - radius * radius
    disc = b * b - a * c
    ok = (disc >= 0.0) & (a > 1e-14)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    best = np.full(len(o), np.inf)
    for sign in (-1.0, 1.0):
        t = _safe_div(-b + sign * sq, a)
        z = ol[:, 2] + t * dl[:, 2]
        good = ok & (t > _EPS) & (np.abs(z) <= half_h)
        best = np.where(good & (t < best), t, best)
    # end caps; rays parallel to the cap plane get a huge t and are discarded
    for zcap in (-half_h, half_h):
        t = _safe_div(zcap - ol[:, 2], dl[:, 2])
        t = np.where((t > _EPS) & (t < 1e12), t, np.inf)
        with np.errstate(invalid="ignore"):
            x = ol[:, 0] + t * dl[:, 0]
            y = ol[:, 1] + t * dl[:, 1]
            good = np.isfinite(t) & (x * x + y * y <= radius * radius)
        best = np.where(good & (t < best), t, best)
    return best


def _ray_segment_capsule(o, d, pa, pb, radius):
    """Closest hit against a sphere-swept segment (Quilez's formulation)."""
    ba = pb - pa
    oa = o - pa
    baba = float(ba @ ba)
    bard = d @ ba
    baoa = oa @ ba
    rdoa = np.einsum("ij,ij->i", d, oa)
    oaoa = np.einsum("ij,ij->i", oa, oa)
    a = baba - bard * bard
    b = baba * rdoa - baoa * bard
    c = baba * oaoa - baoa * baoa - radius * radius * baba
    h = b * b - a * c
    side_ok = (h >= 0.0) & (a > 1e-14)
    t_side = _safe_div(-b - np.sqrt(np.where(side_ok, h, 0.0)), a)
    y = baoa + t_side * bard
    best = np.where(side_ok & (t_side > _EPS) & (y > 0.0) & (y < baba), t_side, np.inf)
    for cap in (pa, pb):
        t_cap = _ray_sphere(o, d, cap, radius)
        best = np.minimum(best, t_cap)
    return best


def _ray_plane(o, d, depth):
    t = _safe_div(depth - o[:, 2], d[:, 2])
    return np.where(t > _EPS, t, np.inf)


def _intersect_primitive(prim, pose: Pose, o, d, terrain_depth):
    if prim.kind == "sphere":
        return _ray_sphere(o, d, pose.t, prim.size[0])
    if prim.kind == "box":
        return _ray_box(o, d, pose, prim.size)
    if prim.kind == "cylinder":
        return _ray_cylinder(o, d, pose, prim.size[0], prim.size[1])
    if prim.kind == "capsule":
        R = pose.rotation_matrix()
        axis = R[:, 2] * prim.size[1]
        return _ray_segment_capsule(o, d, pose.t - axis, pose.t + axis, prim.size[0])
    if prim.kind == "plane":
        return _ray_plane(o, d, terrain_depth)
    if prim.kind == "pipe":
        best = np.full(len(o), np.inf)
        for i in range(len(prim.points) - 1):
            best = np.minimum(best, _ray_segment_capsule(
                o, d, prim.points[i], prim.points[i + 1], prim.size[0]))
        return best
    raise ValueError(f"unknown primitive kind {prim.kind!r}")


def raycast_scene(scene: SceneGraph, origins: np.ndarray, dirs: np.ndarray,
                  overrides: dict | None = None):
    """Closest hit over all primitives. Returns (t, semantic_id) arrays.

    overrides maps primitive index -> Pose, replacing that primitive's pose
    for this cast only (dynamic actors).
    """
    origins = np.atleast_2d(np.asarray(origins, dtype=float))
    dirs = np.atleast_2d(np.asarray(dirs, dtype=float))
    best_t = np.full(len(origins), np.inf)
    best_id = np.full(len(origins), BACKGROUND_ID, dtype=np.int64)
    for idx, prim in enumerate(scene.primitives):
        pose = overrides.get(idx, prim.pose) if overrides else prim.pose
        t = _intersect_primitive(prim, pose, origins, dirs, scene.terrain_depth)
        closer = t < best_t
        best_t = np.where(closer, t, best_t)
        best_id = np.where(closer, scene.semantic_id(idx), best_id)
    return best_t, best_id


def _shade(scene: SceneGraph, t: np.ndarray, sem: np.ndarray) -> np.ndarray:
    optics = scene.optics
    colors = np.array([p.color for p in scene.primitives])  # (P, 3)
    rgb = np.empty((len(t), 3))
    miss = sem == BACKGROUND_ID
    hit = ~miss
    rgb[miss] = optics.background()
    if np.any(hit):
        base = colors[sem[hit] - 1]
        fade = np.exp(-np.outer(t[hit], optics.attenuation))
        rgb[hit] = base * optics.ambient * fade
    return np.clip(rgb, 0.0, 1.0)


def _render_eye(scene, rig_pose: Pose, cam: CameraParams, eye_x: float,
                dirs_cam: np.ndarray, overrides) -> np.ndarray:
    R = rig_pose.rotation_matrix()
    origin = rig_pose.apply(np.array([eye_x, 0.0, 0.0]))
    origins = np.broadcast_to(origin, dirs_cam.shape).copy()
    dirs = dirs_cam @ R.T
    t, sem = raycast_scene(scene, origins, dirs, overrides)
    rgb = _shade(scene, t, sem)
    img = np.empty((cam.height, cam.width, IMAGE_CHANNELS), dtype=np.float32)
    img[..., 0:3] = rgb.reshape(cam.height, cam.width, 3).astype(np.float32)
    img[..., 3] = t.reshape(cam.height, cam.width).astype(np.float32)
    img[..., 4] = sem.reshape(cam.height, cam.width).astype(np.float32)
    return img


def render_stereo(scene: SceneGraph, camera_pose: Pose,
                  cam: CameraParams | None = None,
                  overrides: dict | None = None) -> StereoFrame:
    """Render both eyes; camera_pose is the world pose of the rig center."""
    cam = cam or CameraParams()
    dirs_cam = pixel_rays(cam)
    left = _render_eye(scene, camera_pose, cam, -cam.baseline / 2.0, dirs_cam, overrides)
    right = _render_eye(scene, camera_pose, cam, cam.baseline / 2.0, dirs_cam, overrides)
    return StereoFrame(left, right, cam)


def camera_rig_pose(vehicle_pose: Pose) -> Pose:
    """World pose of the stereo rig for a given vehicle pose."""
    from ..geometry import pose_compose
    return pose_compose(vehicle_pose, CAMERA_IN_BODY)
