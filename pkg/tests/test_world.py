import math

import numpy as np
import numpy.testing as npt
import pytest

from rovsim.geometry import Pose
from rovsim.vehicle import VehicleState
from rovsim.world import (
    ATMOSPHERIC_PRESSURE,
    BACKGROUND_ID,
    DVL_INVALID_ALTITUDE,
    SCENARIO_IDS,
    CameraParams,
    Primitive,
    SceneGraph,
    SensorNoise,
    WaterOptics,
    build_scenario,
    default_spec,
    dvl_read,
    imu_read,
    pixel_rays,
    pressure_read,
    project_point,
    raycast_scene,
    render_stereo,
)


def simple_scene(extra=None, attenuation=(0.2, 0.1, 0.05), ambient=0.8):
    prims = [Primitive("plane", Pose(t=[0, 0, 50.0]), np.zeros(3), "seafloor",
                       np.array([0.5, 0.5, 0.4]))]
    if extra:
        prims.extend(extra)
    optics = WaterOptics(attenuation=np.array(attenuation), ambient=ambient)
    return SceneGraph("seabed", prims, optics, 50.0, {})


def look_along_x(t=(0, 0, 0)):
    """Rig pose whose camera z (view axis) points along world +x."""
    from rovsim.world import camera_rig_pose
    vehicle = Pose(t=np.asarray(t, dtype=float) - np.array([0.25, 0.0, 0.05]))
    return camera_rig_pose(vehicle)


# --------------------------------------------------------------------------
# build_scenario

def test_all_scenarios_build_with_anchors():
    for sid in SCENARIO_IDS:
        scene = build_scenario(default_spec(sid), seed=3)
        assert scene.scenario_id == sid
        assert "start" in scene.anchors
        assert len(scene.anchors) >= 2  # start plus at least one task anchor
        assert sum(p.kind == "plane" for p in scene.primitives) == 1


def test_build_deterministic_field_for_field():
    for sid in SCENARIO_IDS:
        spec = default_spec(sid)
        a = build_scenario(spec, seed=11)
        b = build_scenario(spec, seed=11)
        assert a.equal_fields(b)
        c = build_scenario(spec, seed=12)
        assert not a.equal_fields(c)


def test_placements_within_bounds_100_seeds():
    for sid in ("seabed", "factory", "charge_station", "lake", "open_sea"):
        spec = default_spec(sid)
        for seed in range(100):
            scene = build_scenario(spec, seed)
            for label, (lo, hi) in spec.placements.items():
                idx = scene.find(label)
                center = scene.primitives[idx].pose.t
                assert np.all(center[:2] >= lo[:2] - 1e-12), (sid, label, seed)
                assert np.all(center[:2] <= hi[:2] + 1e-12), (sid, label, seed)


def test_optics_within_ranges():
    spec = default_spec("seabed")
    for seed in range(50):
        o = build_scenario(spec, seed).optics
        assert np.all(o.attenuation >= spec.attenuation_lo)
        assert np.all(o.attenuation <= spec.attenuation_hi)
        assert spec.ambient_range[0] <= o.ambient <= spec.ambient_range[1]


# --------------------------------------------------------------------------
# renderer

def test_empty_scene_renders_background():
    scene = simple_scene()
    # camera looking along +x, plane is 50 m below: center rays never hit
    frame = render_stereo(scene, look_along_x((0, 0, 0)), CameraParams(width=16, height=16))
    top = frame.left[:4]  # rays pointing above the horizon
    expected = np.broadcast_to(scene.optics.background(), top[..., 0:3].shape)
    npt.assert_allclose(top[..., 0:3], expected, atol=1e-6)
    assert np.all(np.isinf(top[..., 3]))
    assert np.all(top[..., 4] == BACKGROUND_ID)


def test_unit_sphere_center_depth():
    sphere = Primitive("sphere", Pose(t=[3.0, 0, 0]), np.array([1.0, 0, 0]),
                       "ball", np.array([0.9, 0.2, 0.2]))
    scene = simple_scene([sphere])
    rig = look_along_x()
    # exact on-axis ray: distance to surface = 3 - 1 = 2
    o = rig.t[None, :]
    d = rig.rotation_matrix()[:, 2][None, :]  # camera z in world
    t, sem = raycast_scene(scene, o, d)
    assert t[0] == pytest.approx(2.0, abs=1e-12)
    assert sem[0] == scene.semantic_id(scene.find("ball"))
    # rendered center pixels agree within the off-axis quantization error
    frame = render_stereo(scene, rig, CameraParams())
    center = frame.left[31:33, 31:33, 3]
    npt.assert_allclose(center, 2.0, atol=0.01)


def test_stereo_disparity_formula():
    cam = CameraParams(width=64, height=64, focal_px=32.0, baseline=0.1)
    z = 2.0
    # world point straight ahead of the rig at distance z
    point_world = np.array([z, 0.0, 0.0])
    rig = look_along_x()
    R = rig.rotation_matrix()
    for eye_sign, expected_shift in ((-1, +1), (+1, -1)):
        eye = rig.apply(np.array([eye_sign * cam.baseline / 2, 0, 0]))
        p_cam = R.T @ (point_world - eye)
        u, v = project_point(cam, p_cam)
        assert u - cam.cx == pytest.approx(expected_shift * cam.focal_px * cam.baseline / (2 * z))
        assert v == pytest.approx(cam.cy)
    # disparity = u_left - u_right = f * B / Z
    u_l, _ = project_point(cam, R.T @ (point_world - rig.apply([-cam.baseline / 2, 0, 0])))
    u_r, _ = project_point(cam, R.T @ (point_world - rig.apply([+cam.baseline / 2, 0, 0])))
    assert u_l - u_r == pytest.approx(32.0 * 0.1 / 2.0, abs=1e-12)


def test_rendered_disparity_matches_formula():
    # big image and disk so the centroid estimate resolves sub-pixel shifts
    cam = CameraParams(width=256, height=256, focal_px=128.0, baseline=0.1)
    sphere = Primitive("sphere", Pose(t=[2.0, 0, 0]), np.array([0.25, 0, 0]),
                       "ball", np.array([1.0, 0, 0]))
    scene = simple_scene([sphere])
    frame = render_stereo(scene, look_along_x(), cam)
    sid = scene.semantic_id(scene.find("ball"))
    cols = np.arange(cam.width)
    cl = np.average(cols, weights=(frame.left[..., 4] == sid).sum(axis=0))
    cr = np.average(cols, weights=(frame.right[..., 4] == sid).sum(axis=0))
    assert cl - cr == pytest.approx(128.0 * 0.1 / 2.0, abs=0.25)


def test_depth_channel_consistent_with_recast():
    scene = build_scenario(default_spec("seabed"), seed=5)
    cam = CameraParams(width=32, height=32, focal_px=16.0)
    rig = look_along_x((0, 0, 4.0))
    frame = render_stereo(scene, rig, cam)
    dirs_cam = pixel_rays(cam)
    R = rig.rotation_matrix()
    origin = rig.apply(np.array([-cam.baseline / 2, 0.0, 0.0]))
    t, _ = raycast_scene(scene, np.broadcast_to(origin, dirs_cam.shape).copy(),
                         dirs_cam @ R.T)
    stored = frame.left[..., 3].ravel()
    recast = t.astype(np.float32)
    finite = np.isfinite(stored)
    assert np.array_equal(stored[finite], recast[finite])
    assert np.array_equal(np.isinf(stored), np.isinf(recast))


def test_attenuation_monotone_darkening():
    sphere = Primitive("sphere", Pose(t=[4.0, 0, 1.0]), np.array([1.5, 0, 0]),
                       "ball", np.array([0.9, 0.9, 0.9]))
    cam = CameraParams(width=24, height=24, focal_px=12.0)
    rig = look_along_x()
    frames = []
    for scale in (0.5, 1.0, 2.0):
        scene = simple_scene([Primitive("sphere", sphere.pose, sphere.size,
                                        sphere.label, sphere.color)],
                             attenuation=(0.2 * scale, 0.1 * scale, 0.05 * scale))
        frames.append(render_stereo(scene, rig, cam).left[..., 0:3])
    assert np.all(frames[1] <= frames[0] + 1e-7)
    assert np.all(frames[2] <= frames[1] + 1e-7)


def test_render_deterministic():
    scene = build_scenario(default_spec("factory"), seed=9)
    cam = CameraParams(width=32, height=32, focal_px=16.0)
    a = render_stereo(scene, look_along_x((0, 0, 3)), cam)
    b = render_stereo(scene, look_along_x((0, 0, 3)), cam)
    assert np.array_equal(a.left, b.left)
    assert np.array_equal(a.right, b.right)


def test_box_and_cylinder_and_capsule_hits():
    prims = [
        Primitive("box", Pose(t=[3, -2, 0]), np.array([0.5, 0.5, 0.5]), "crate",
                  np.array([0.5, 0.4, 0.2])),
        Primitive("cylinder", Pose(t=[3, 0, 0]), np.array([0.3, 0.6, 0]), "drum",
                  np.array([0.2, 0.5, 0.4])),
        Primitive("capsule", Pose(t=[3, 2, 0]), np.array([0.3, 0.4, 0]), "pod",
                  np.array([0.3, 0.3, 0.6])),
    ]
    scene = simple_scene(prims)
    origins = np.zeros((3, 3))
    dirs = np.array([[3, -2, 0], [3, 0, 0], [3, 2, 0]], dtype=float)
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    t, sem = raycast_scene(scene, origins, dirs)
    assert np.all(np.isfinite(t))
    labels = [scene.primitives[s - 1].label for s in sem]
    assert labels == ["crate", "drum", "pod"]
    # box face: ray hits at distance |(3,-2)| minus box extent along the ray
    assert t[0] < math.hypot(3, 2)
    # cylinder side: hit distance = 3 - 0.3 on the straight-ahead ray
    assert t[1] == pytest.approx(3.0 - 0.3, abs=1e-9)


def test_pipe_polyline_hit():
    pts = np.array([[2.0, -3.0, 0.0], [2.0, 3.0, 0.0]])
    pipe = Primitive("pipe", Pose(), np.array([0.25, 0, 0]), "pipeline",
                     np.array([0.7, 0.6, 0.1]), points=pts)
    scene = simple_scene([pipe])
    t, sem = raycast_scene(scene, np.zeros((1, 3)), np.array([[1.0, 0, 0]]))
    assert t[0] == pytest.approx(2.0 - 0.25, abs=1e-9)


# --------------------------------------------------------------------------
# sensors

def test_imu_at_rest():
    rng = np.random.default_rng(0)
    gyro, accel = imu_read(VehicleState(), np.zeros(3), SensorNoise.off(), rng)
    npt.assert_allclose(gyro, np.zeros(3), atol=1e-12)
    # NED/FRD: body-up is -z, so the rest reading is -9.81 on z
    npt.assert_allclose(accel, [0, 0, -9.81], atol=1e-12)
    assert np.linalg.norm(accel) == pytest.approx(9.81)


def test_imu_spin():
    rng = np.random.default_rng(0)
    state = VehicleState(ang_vel=np.array([0.0, 0.0, 1.0]))
    gyro, _ = imu_read(state, np.zeros(3), SensorNoise.off(), rng)
    npt.assert_allclose(gyro, [0, 0, 1.0], atol=1e-12)


def test_imu_noise_statistics():
    rng = np.random.default_rng(1)
    noise = SensorNoise(gyro_sigma=0.01, accel_sigma=0.05)
    gyros = np.array([imu_read(VehicleState(), np.zeros(3), noise, rng)[0]
                      for _ in range(10000)])
    std = gyros.std(axis=0)
    npt.assert_allclose(std, 0.01, rtol=0.1)


def test_dvl_stationary_and_altitude():
    scene = simple_scene()
    rng = np.random.default_rng(0)
    state = VehicleState(pose=Pose(t=[0, 0, 46.0]))  # 4 m above the 50 m floor
    vel, alt, valid = dvl_read(state, scene, SensorNoise.off(), rng)
    npt.assert_allclose(vel, np.zeros(3), atol=1e-12)
    assert alt == pytest.approx(4.0)
    assert valid


def test_dvl_out_of_range_flag():
    scene = simple_scene()
    rng = np.random.default_rng(0)
    deep = VehicleState(pose=Pose(t=[0, 0, 51.0]))  # below the plane
    _, alt, valid = dvl_read(deep, scene, SensorNoise.off(), rng)
    assert not valid and alt == DVL_INVALID_ALTITUDE
    far = VehicleState(pose=Pose(t=[0, 0, -10.0]))
    _, alt, valid = dvl_read(far, scene, SensorNoise.off(), rng, max_range=50.0)
    assert not valid and alt == DVL_INVALID_ALTITUDE


def test_dvl_noisy_mean_converges():
    scene = simple_scene()
    rng = np.random.default_rng(2)
    noise = SensorNoise(dvl_sigma=0.05)
    state = VehicleState(pose=Pose(t=[0, 0, 45.0]),
                         lin_vel=np.array([0.5, -0.2, 0.1]))
    n = 4000
    vels = np.array([dvl_read(state, scene, noise, rng)[0] for _ in range(n)])
    tol = 3 * 0.05 / math.sqrt(n)
    npt.assert_allclose(vels.mean(axis=0), [0.5, -0.2, 0.1], atol=tol)


def test_pressure_values():
    rng = np.random.default_rng(0)
    p0, d0 = pressure_read(0.0, SensorNoise.off(), rng)
    assert p0 == ATMOSPHERIC_PRESSURE
    assert d0 == 0.0
    p10, d10 = pressure_read(10.0, SensorNoise.off(), rng)
    assert p10 == pytest.approx(201877.5)
    assert d10 == pytest.approx(10.0, abs=1e-12)
    with pytest.raises(ValueError):
        pressure_read(-1.0, SensorNoise.off(), rng)
