import math

import numpy as np
import numpy.testing as npt

from rovsim.geometry import (
    Pose,
    orientation_error,
    pose_compose,
    pose_inverse,
    quat_mul,
    quat_normalize,
    quat_to_matrix,
    random_pose,
    rotation_angle,
    target_in_robot_frame,
)


def homogeneous(p: Pose) -> np.ndarray:
    """Independent 4x4 oracle built only from the quaternion->matrix map."""
    T = np.eye(4)
    T[:3, :3] = quat_to_matrix(p.q)
    T[:3, 3] = p.t
    return T


def assert_pose_close(a: Pose, b: Pose, tol=1e-9):
    npt.assert_allclose(a.t, b.t, atol=tol)
    assert abs(float(a.q @ b.q)) > 1.0 - tol


def test_pose_invariants_after_construction():
    rng = np.random.default_rng(0)
    for _ in range(50):
        p = Pose(rng.normal(size=4), rng.normal(size=3))
        assert abs(np.linalg.norm(p.q) - 1.0) < 1e-9
        R = p.rotation_matrix()
        npt.assert_allclose(R @ R.T, np.eye(3), atol=1e-9)
        assert abs(np.linalg.det(R) - 1.0) < 1e-9
        assert p.q[0] >= 0.0


def test_compose_identity():
    p = Pose.from_axis_angle([0, 0, 1], 0.7, [1, 2, 3])
    assert_pose_close(pose_compose(Pose.identity(), p), p)
    assert_pose_close(pose_compose(p, Pose.identity()), p)


def test_compose_yaw_symmetry():
    yaw90 = Pose.from_axis_angle([0, 0, 1], math.pi / 2)
    yaw180 = pose_compose(yaw90, yaw90)
    expected = Pose.from_axis_angle([0, 0, 1], math.pi)
    assert_pose_close(yaw180, expected)
    npt.assert_allclose(yaw180.t, np.zeros(3), atol=1e-12)


def test_compose_matches_matrix_oracle():
    rng = np.random.default_rng(42)
    for _ in range(100):
        a = random_pose(rng)
        b = random_pose(rng)
        got = homogeneous(pose_compose(a, b))
        expected = homogeneous(a) @ homogeneous(b)
        npt.assert_allclose(got, expected, atol=1e-9)


def test_inverse_identity_and_pure_translation():
    assert_pose_close(pose_inverse(Pose.identity()), Pose.identity())
    p = Pose(t=[1.0, 2.0, 3.0])
    npt.assert_allclose(pose_inverse(p).t, [-1.0, -2.0, -3.0], atol=1e-12)


def test_inverse_matches_matrix_oracle():
    rng = np.random.default_rng(7)
    for _ in range(100):
        p = random_pose(rng)
        assert_pose_close(pose_compose(p, pose_inverse(p)), Pose.identity())
        npt.assert_allclose(homogeneous(pose_inverse(p)),
                            np.linalg.inv(homogeneous(p)), atol=1e-9)


def test_target_in_robot_frame_identity_robot():
    rng = np.random.default_rng(3)
    p_t = random_pose(rng)
    rel = target_in_robot_frame(p_t, Pose.identity())
    assert_pose_close(rel, p_t)


def test_target_in_robot_frame_translation_only():
    p_r = Pose(t=[1, 0, 0])
    p_t = Pose(t=[2, 0, 0])
    rel = target_in_robot_frame(p_t, p_r)
    npt.assert_allclose(rel.t, [1, 0, 0], atol=1e-12)


def test_target_in_robot_frame_yawed_robot():
    # Robot yawed +90 deg about z at the origin; world target at (0, 1, 0)
    # sits straight ahead of the robot: body-frame translation (1, 0, 0).
    p_r = Pose.from_axis_angle([0, 0, 1], math.pi / 2)
    p_t = Pose(t=[0, 1, 0])
    rel = target_in_robot_frame(p_t, p_r)
    npt.assert_allclose(rel.t, [1, 0, 0], atol=1e-9)
    # Oracle: inv(T_r) @ T_t
    expected = np.linalg.inv(homogeneous(p_r)) @ homogeneous(p_t)
    npt.assert_allclose(homogeneous(rel), expected, atol=1e-9)


def test_round_trip_reconstructs_target():
    rng = np.random.default_rng(123)
    for _ in range(1000):
        p_t = random_pose(rng)
        p_r = random_pose(rng)
        rel = target_in_robot_frame(p_t, p_r)
        back = pose_compose(p_r, rel)
        npt.assert_allclose(back.t, p_t.t, atol=1e-9)
        assert abs(float(back.q @ p_t.q)) > 1.0 - 1e-9


def test_self_relative_is_identity():
    rng = np.random.default_rng(5)
    for _ in range(100):
        p = random_pose(rng)
        assert_pose_close(target_in_robot_frame(p, p), Pose.identity())


def test_compose_associativity():
    rng = np.random.default_rng(11)
    for _ in range(100):
        a, b, c = (random_pose(rng) for _ in range(3))
        left = pose_compose(pose_compose(a, b), c)
        right = pose_compose(a, pose_compose(b, c))
        assert_pose_close(left, right)


def test_serialization_round_trip_and_order():
    p = Pose.from_axis_angle([0, 1, 0], 0.4, [4, 5, 6])
    a = p.to_array()
    assert a.shape == (7,)
    npt.assert_allclose(a[:4], p.q)
    npt.assert_allclose(a[4:], p.t)
    assert_pose_close(Pose.from_array(a), p, tol=1e-12)


def test_quat_sign_canonicalized():
    q = quat_normalize([-1.0, 0.2, 0.1, -0.3])
    assert q[0] >= 0.0
    # double cover: -q and q are the same rotation
    npt.assert_allclose(quat_to_matrix(q), quat_to_matrix(-np.asarray(q)), atol=1e-12)


def test_rotation_angle_and_orientation_error():
    p = Pose.from_axis_angle([1, 0, 0], 0.3)
    assert abs(rotation_angle(p) - 0.3) < 1e-12
    a = Pose.from_axis_angle([0, 0, 1], 0.5)
    b = Pose.from_axis_angle([0, 0, 1], 1.2)
    assert abs(orientation_error(a, b) - 0.7) < 1e-9


def test_quat_mul_matches_matrix_product():
    rng = np.random.default_rng(9)
    for _ in range(50):
        qa = quat_normalize(rng.normal(size=4))
        qb = quat_normalize(rng.normal(size=4))
        npt.assert_allclose(quat_to_matrix(quat_mul(qa, qb)),
                            quat_to_matrix(qa) @ quat_to_matrix(qb), atol=1e-9)
