"""Scene graph primitives and water optics.

Primitives are immutable after the scene is built; dynamic actors (a moving
boat, a grasped object) are handled by per-call pose overrides at render
time so scenes stay shareable across threads.
"""

from dataclasses import dataclass, field

import numpy as np

from ..geometry import Pose

PRIMITIVE_KINDS = ("box", "sphere", "cylinder", "capsule", "plane", "pipe")

# Semantic id 0 is reserved for "no hit / water background".
BACKGROUND_ID = 0


@dataclass
class WaterOptics:
    attenuation: np.ndarray = field(default_factory=lambda: np.array([0.20, 0.08, 0.05]))  # 1/m
    ambient: float = 0.8
    sun_dir: np.ndarray = field(default_factory=lambda: np.array([0.3, 0.2, 0.93]))
    water_color: np.ndarray = field(default_factory=lambda: np.array([0.16, 0.32, 0.45]))

    def __post_init__(self):
        self.attenuation = np.asarray(self.attenuation, dtype=float)
        self.sun_dir = np.asarray(self.sun_dir, dtype=float)
        self.water_color = np.asarray(self.water_color, dtype=float)
        if np.any(self.attenuation < 0):
            raise ValueError("attenuation must be >= 0")
        if not 0.0 <= self.ambient <= 1.0:
            raise ValueError("ambient must be in [0, 1]")

    def background(self) -> np.ndarray:
        return self.water_color * self.ambient


@dataclass
class Primitive:
    """One scene shape.

    size semantics: sphere (radius, -, -); box half-extents (hx, hy, hz);
    cylinder (radius, half_height, -) along local z; capsule
    (radius, half_length, -) along local z; plane ignores size (the ground
    plane lives at z = terrain_depth with +z down); pipe (radius, -, -) along
    its polyline `points`.
    """

    kind: str
    pose: Pose
    size: np.ndarray
    label: str
    color: np.ndarray
    points: np.ndarray | None = None  # (N, 3) world polyline, pipes only

    def __post_init__(self):
        if self.kind not in PRIMITIVE_KINDS:
            raise ValueError(f"unknown primitive kind {self.kind!r}")
        self.size = np.asarray(self.size, dtype=float)
        self.color = np.asarray(self.color, dtype=float)
        if self.kind != "plane" and np.any(self.size[self._used_dims()] <= 0):
            raise ValueError(f"{self.kind} sizes must be > 0")
        if self.kind == "pipe":
            self.points = np.asarray(self.points, dtype=float)
            if self.points is None or len(self.points) < 2:
                raise ValueError("pipe needs a polyline with >= 2 points")

    def _used_dims(self):
        return {"box": slice(0, 3), "sphere": slice(0, 1), "cylinder": slice(0, 2),
                "capsule": slice(0, 2), "pipe": slice(0, 1), "plane": slice(0, 0)}[self.kind]


@dataclass
class SceneGraph:
    scenario_id: str
    primitives: list
    optics: WaterOptics
    terrain_depth: float
    anchors: dict  # name -> (3,) world point

    def __post_init__(self):
        planes = [p for p in self.primitives if p.kind == "plane"]
        if len(planes) != 1:
            raise ValueError(f"scene must contain exactly one ground plane, got {len(planes)}")
        self.anchors = {k: np.asarray(v, dtype=float) for k, v in self.anchors.items()}

    def semantic_id(self, index: int) -> int:
        """Stable per-primitive semantic code (background stays 0)."""
        return index + 1

    def find(self, label: str) -> int:
        for i, p in enumerate(self.primitives):
            if p.label == label:
                return i
        raise KeyError(f"no primitive labeled {label!r}")

    def equal_fields(self, other: "SceneGraph") -> bool:
        """Field-for-field equality; used by determinism checks."""
        if (self.scenario_id != other.scenario_id
                or self.terrain_depth != other.terrain_depth
                or len(self.primitives) != len(other.primitives)
                or set(self.anchors) != set(other.anchors)):
            return False
        for k in self.anchors:
            if not np.array_equal(self.anchors[k], other.anchors[k]):
                return False
        o1, o2 = self.optics, other.optics
        if not (np.array_equal(o1.attenuation, o2.attenuation)
                and o1.ambient == o2.ambient
                and np.array_equal(o1.sun_dir, o2.sun_dir)
                and np.array_equal(o1.water_color, o2.water_color)):
            return False
        for a, b in zip(self.primitives, other.primitives):
            if (a.kind != b.kind or a.label != b.label
                    or not np.array_equal(a.size, b.size)
                    or not np.array_equal(a.color, b.color)
                    or not np.array_equal(a.pose.to_array(), b.pose.to_array())):
                return False
            if (a.points is None) != (b.points is None):
                return False
            if a.points is not None and not np.array_equal(a.points, b.points):
                return False
        return True
