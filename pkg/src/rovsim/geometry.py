"""SE(3) pose algebra on unit quaternions.

Conventions:
    - Quaternions are (w, x, y, z), unit norm, canonicalized to w >= 0 so the
      serialized form of a rotation is unique.
    - A Pose maps body-frame vectors into the world frame:
      p_world = R @ p_body + t.
    - Serialization order is 7 doubles: (qw, qx, qy, qz, tx, ty, tz).
"""

import math

import numpy as np

POSE_DIM = 7


def quat_normalize(q: np.ndarray) -> np.ndarray:
    """Unit-normalize and canonicalize sign (w >= 0)."""
    q = np.asarray(q, dtype=float)
    n = math.sqrt(float(q @ q))
    if n < 1e-15:
        raise ValueError("cannot normalize near-zero quaternion")
    q = q / n
    if q[0] < 0.0:
        q = -q
    return q


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conj(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(R: np.ndarray) -> np.ndarray:
    """Rotation matrix to quaternion (Shepperd's method, branch on max diagonal)."""
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0.0:
        s = math.sqrt(tr + 1.0) * 2.0
        q = np.array([0.25 * s,
                      (R[2, 1] - R[1, 2]) / s,
                      (R[0, 2] - R[2, 0]) / s,
                      (R[1, 0] - R[0, 1]) / s])
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
        q = np.array([(R[2, 1] - R[1, 2]) / s,
                      0.25 * s,
                      (R[0, 1] + R[1, 0]) / s,
                      (R[0, 2] + R[2, 0]) / s])
    elif R[1, 1] > R[2, 2]:
        s = math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2.0
        q = np.array([(R[0, 2] - R[2, 0]) / s,
                      (R[0, 1] + R[1, 0]) / s,
                      0.25 * s,
                      (R[1, 2] + R[2, 1]) / s])
    else:
        s = math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2.0
        q = np.array([(R[1, 0] - R[0, 1]) / s,
                      (R[0, 2] + R[2, 0]) / s,
                      (R[1, 2] + R[2, 1]) / s,
                      0.25 * s])
    return quat_normalize(q)


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    n = math.sqrt(float(axis @ axis))
    if n < 1e-15:
        if abs(angle) > 1e-12:
            raise ValueError("zero axis with nonzero angle")
        return np.array([1.0, 0.0, 0.0, 0.0])
    half = 0.5 * angle
    return quat_normalize(np.concatenate(([math.cos(half)], math.sin(half) * axis / n)))


def quat_from_rotvec(rv: np.ndarray) -> np.ndarray:
    """Rotation vector (axis * angle, rad) to quaternion; stable near zero."""
    rv = np.asarray(rv, dtype=float)
    angle = math.sqrt(float(rv @ rv))
    if angle < 1e-12:
        # First-order expansion keeps the zero-rate integration step exact.
        return quat_normalize(np.array([1.0, 0.5 * rv[0], 0.5 * rv[1], 0.5 * rv[2]]))
    return quat_from_axis_angle(rv, angle)


def quat_to_rotvec(q: np.ndarray) -> np.ndarray:
    """Quaternion to rotation vector (axis * geodesic angle)."""
    w = min(1.0, max(-1.0, float(q[0])))
    v = np.asarray(q[1:], dtype=float)
    s = math.sqrt(float(v @ v))
    if s < 1e-12:
        return 2.0 * v  # small-angle: rv ~= 2 * vector part
    angle = 2.0 * math.atan2(s, w)
    if angle > math.pi:
        angle -= 2.0 * math.pi
    return (angle / s) * v


class Pose:
    """Rigid transform: unit quaternion rotation + translation in meters."""

    __slots__ = ("q", "t")

    def __init__(self, q=None, t=None):
        self.q = quat_normalize(q) if q is not None else np.array([1.0, 0.0, 0.0, 0.0])
        self.t = np.array(t, dtype=float) if t is not None else np.zeros(3)
        if self.t.shape != (3,):
            raise ValueError(f"translation must be a 3-vector, got {self.t.shape}")

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @classmethod
    def from_axis_angle(cls, axis, angle: float, t=None) -> "Pose":
        return cls(quat_from_axis_angle(axis, angle), t)

    @classmethod
    def from_matrix(cls, T: np.ndarray) -> "Pose":
        T = np.asarray(T, dtype=float)
        return cls(matrix_to_quat(T[:3, :3]), T[:3, 3])

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.q)

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation_matrix()
        T[:3, 3] = self.t
        return T

    def apply(self, p: np.ndarray) -> np.ndarray:
        """Transform point(s) from the local frame into the parent frame."""
        p = np.asarray(p, dtype=float)
        return p @ self.rotation_matrix().T + self.t

    def to_array(self) -> np.ndarray:
        return np.concatenate((self.q, self.t))

    @classmethod
    def from_array(cls, a: np.ndarray) -> "Pose":
        a = np.asarray(a, dtype=float)
        if a.shape != (POSE_DIM,):
            raise ValueError(f"pose array must have {POSE_DIM} entries, got {a.shape}")
        return cls(a[:4], a[4:])

    def __repr__(self):
        q = np.round(self.q, 6)
        t = np.round(self.t, 6)
        return f"Pose(q={q.tolist()}, t={t.tolist()})"


# A target pose expressed in the robot body frame; structurally identical to Pose.
RelativePose = Pose


def pose_compose(a: Pose, b: Pose) -> Pose:
    """a then b: the transform mapping b's local frame through a into the world."""
    q = quat_mul(a.q, b.q)
    t = a.apply(b.t)
    return Pose(q, t)


def pose_inverse(p: Pose) -> Pose:
    qi = quat_conj(p.q)
    ti = -(quat_to_matrix(qi) @ p.t)
    return Pose(qi, ti)


def target_in_robot_frame(p_t: Pose, p_r: Pose) -> Pose:
    """Express a world target pose in the robot body frame.

    rotation = R_r^T R_t, translation = R_r^T (t_t - t_r).
    """
    q = quat_mul(quat_conj(p_r.q), p_t.q)
    Rr = quat_to_matrix(p_r.q)
    t = Rr.T @ (p_t.t - p_r.t)
    return Pose(q, t)


def rotation_angle(p: Pose) -> float:
    """Geodesic angle of the pose's rotation, in [0, pi]."""
    w = min(1.0, abs(float(p.q[0])))
    return 2.0 * math.acos(w)


def orientation_error(a: Pose, b: Pose) -> float:
    """Geodesic angle between two orientations."""
    return rotation_angle(Pose(quat_mul(quat_conj(a.q), b.q)))


def random_pose(rng: np.random.Generator, translation_scale: float = 10.0) -> Pose:
    """Uniform random rotation (Shoemake) with Gaussian translation; test helper."""
    u1, u2, u3 = rng.random(3)
    q = np.array([
        math.sqrt(1 - u1) * math.sin(2 * math.pi * u2),
        math.sqrt(1 - u1) * math.cos(2 * math.pi * u2),
        math.sqrt(u1) * math.sin(2 * math.pi * u3),
        math.sqrt(u1) * math.cos(2 * math.pi * u3),
    ])
    return Pose(q, rng.normal(scale=translation_scale, size=3))
