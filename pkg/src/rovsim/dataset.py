"""Episodic dataset format: chunked binary episodes plus a JSON manifest.

The byte-exact layout is documented in docs/FORMAT.md; that document is the
only contract external readers rely on. Summary (all little-endian):

    magic "UEP1" | u32 version | u32 meta_len | meta JSON (UTF-8)
    | frames x 66 float64 numeric block
    | frames x 2 x H x W x 5 float32 image block
    | u64 checksum (first 8 bytes of SHA-256 over everything before it)

Numeric row: timestamp(1) imu(6) dvl(4) pressure(2) state(26) action(13)
target(7) target_world(7). The state vector is previous-action echo(13) +
pose(7) + body velocities(6). Poses serialize as (qw qx qy qz tx ty tz).
Image depth channels replace +inf with float32 max in the file.
"""

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .geometry import Pose, target_in_robot_frame

MAGIC = b"UEP1"
FORMAT_VERSION = 1
SIM_VERSION = f"rovsim-{__version__}/fmt{FORMAT_VERSION}"

FRAME_STRIDE = 66
IMAGE_CHANNELS = 5
DEPTH_SENTINEL = np.float32(np.finfo(np.float32).max)

# (name, start, stop) column spans in the numeric block.
FIELDS = (
    ("timestamp", 0, 1),
    ("imu", 1, 7),
    ("dvl", 7, 11),
    ("pressure", 11, 13),
    ("state", 13, 39),
    ("action", 39, 52),
    ("target", 52, 59),
    ("target_world", 59, 66),
)
FIELD_SLICES = {name: slice(a, b) for name, a, b in FIELDS}

MANIFEST_NAME = "manifest.json"


class DatasetError(Exception):
    pass


class FormatError(DatasetError):
    pass


class VersionError(DatasetError):
    pass


class ChecksumError(DatasetError):
    pass


class TruncationError(DatasetError):
    pass


def checksum64(data: bytes) -> int:
    """64-bit integrity checksum: first 8 bytes of SHA-256, little-endian."""
    return int.from_bytes(hashlib.sha256(data).digest()[:8], "little")


@dataclass
class EpisodeMeta:
    episode_id: int
    task_id: str
    instruction_id: int
    instruction: str
    scenario_id: str
    seed: int
    frames: int
    image_height: int
    image_width: int
    success: bool
    final_distance: float
    target_semantic_id: int = 0
    sim_version: str = SIM_VERSION

    @property
    def duration(self) -> float:
        return self.frames * 0.1

    def to_dict(self) -> dict:
        return {
            "episode_id": self.episode_id,
            "task_id": self.task_id,
            "instruction_id": self.instruction_id,
            "instruction": self.instruction,
            "scenario_id": self.scenario_id,
            "seed": self.seed,
            "frames": self.frames,
            "image_height": self.image_height,
            "image_width": self.image_width,
            "image_channels": IMAGE_CHANNELS,
            "success": self.success,
            "final_distance": self.final_distance,
            "target_semantic_id": self.target_semantic_id,
            "sim_version": self.sim_version,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeMeta":
        return cls(episode_id=d["episode_id"], task_id=d["task_id"],
                   instruction_id=d["instruction_id"], instruction=d["instruction"],
                   scenario_id=d["scenario_id"], seed=d["seed"], frames=d["frames"],
                   image_height=d["image_height"], image_width=d["image_width"],
                   success=d["success"], final_distance=d["final_distance"],
                   target_semantic_id=d["target_semantic_id"],
                   sim_version=d["sim_version"])


@dataclass
class EpisodeData:
    meta: EpisodeMeta
    numeric: np.ndarray                # (frames, 66) float64
    images: np.ndarray | None = None   # (frames, 2, H, W, 5) float32

    def column(self, name: str) -> np.ndarray:
        return self.numeric[:, FIELD_SLICES[name]]

    @property
    def timestamps(self):
        return self.numeric[:, 0]


def expected_timestamps(frames: int) -> np.ndarray:
    return np.arange(frames, dtype=np.float64) * 0.1


def validate_episode(ep: EpisodeData) -> list:
    """FrameRecord invariants; returns a list of violation descriptions."""
    problems = []
    n = ep.meta.frames
    if ep.numeric.shape != (n, FRAME_STRIDE):
        problems.append(f"numeric block shape {ep.numeric.shape} != ({n}, {FRAME_STRIDE})")
        return problems
    if n < 1:
        problems.append("episode must contain at least one frame")
        return problems
    if not np.array_equal(ep.timestamps, expected_timestamps(n)):
        bad = int(np.argmax(ep.timestamps != expected_timestamps(n)))
        problems.append(f"frame {bad}: timestamp violates the 10 Hz rule "
                        f"(expected {bad * 0.1!r}, got {ep.timestamps[bad]!r})")
    if not np.isfinite(ep.numeric).all():
        rows = np.unique(np.where(~np.isfinite(ep.numeric))[0])[:3]
        problems.append(f"non-finite numeric values at frames {rows.tolist()}")
        return problems
    quat_norm = np.linalg.norm(ep.column("target")[:, :4], axis=1)
    if np.any(np.abs(quat_norm - 1.0) > 1e-9):
        bad = int(np.argmax(np.abs(quat_norm - 1.0) > 1e-9))
        problems.append(f"frame {bad}: target label quaternion norm {quat_norm[bad]}")
    # robot-centric label must equal the Eq.-style transform of stored poses
    state = ep.column("state")
    labels = ep.column("target")
    worlds = ep.column("target_world")
    for k in range(n):
        robot = Pose.from_array(state[k, 13:20])
        rel = target_in_robot_frame(Pose.from_array(worlds[k]), robot)
        stored = labels[k]
        if (np.max(np.abs(rel.t - stored[4:])) > 1e-9
                or abs(float(rel.q @ stored[:4])) < 1.0 - 1e-9):
            problems.append(f"frame {k}: target label does not match the "
                            "robot-centric transform of the stored poses")
            break
    if ep.images is not None:
        expect = (n, 2, ep.meta.image_height, ep.meta.image_width, IMAGE_CHANNELS)
        if ep.images.shape != expect:
            problems.append(f"image block shape {ep.images.shape} != {expect}")
        elif ep.images.dtype != np.float32:
            problems.append(f"image dtype {ep.images.dtype} != float32")
    return problems


def write_episode(path, ep: EpisodeData) -> None:
    problems = validate_episode(ep)
    if problems:
        raise DatasetError(f"refusing to write invalid episode: {problems[0]}")
    meta_json = json.dumps(ep.meta.to_dict(), sort_keys=True).encode("utf-8")
    numeric = np.ascontiguousarray(ep.numeric, dtype="<f8")
    parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(meta_json)), meta_json,
             numeric.tobytes()]
    if ep.images is None:
        raise DatasetError("episode images are required for writing")
    images = np.ascontiguousarray(ep.images, dtype="<f4")
    images = np.where(np.isinf(images), DEPTH_SENTINEL, images)
    parts.append(images.tobytes())
    payload = b"".join(parts)
    blob = payload + struct.pack("<Q", checksum64(payload))
    Path(path).write_bytes(blob)


def read_episode(path, load_images: bool = True) -> EpisodeData:
    blob = Path(path).read_bytes()
    if len(blob) < 12:
        raise TruncationError(f"{path}: file shorter than the fixed header")
    if blob[:4] != MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}, expected {MAGIC!r}")
    version, meta_len = struct.unpack_from("<II", blob, 4)
    if version != FORMAT_VERSION:
        raise VersionError(f"{path}: format version {version} unsupported "
                           f"(reader supports {FORMAT_VERSION})")
    header_end = 12 + meta_len
    if len(blob) < header_end + 8:
        raise TruncationError(f"{path}: truncated inside the meta block")

    def parse_meta():
        return EpisodeMeta.from_dict(json.loads(blob[12:header_end]))

    def expected_length(meta):
        numeric_bytes = meta.frames * FRAME_STRIDE * 8
        image_bytes = (meta.frames * 2 * meta.image_height * meta.image_width
                       * IMAGE_CHANNELS * 4)
        return header_end + numeric_bytes + image_bytes + 8

    stored, = struct.unpack_from("<Q", blob, len(blob) - 8)
    if checksum64(blob[:-8]) != stored:
        # Distinguish a short file from in-place corruption when the meta
        # still parses; otherwise report the checksum failure.
        try:
            meta = parse_meta()
        except (json.JSONDecodeError, KeyError, TypeError):
            raise ChecksumError(f"{path}: checksum mismatch (payload corrupted)")
        if expected_length(meta) > len(blob):
            raise TruncationError(f"{path}: file is {len(blob)} bytes, "
                                  f"expected {expected_length(meta)}")
        raise ChecksumError(f"{path}: checksum mismatch (payload corrupted)")

    try:
        meta = parse_meta()
    except (json.JSONDecodeError, KeyError, TypeError) as e:
        raise FormatError(f"{path}: malformed meta JSON ({e})") from e
    n = meta.frames
    numeric_bytes = n * FRAME_STRIDE * 8
    if len(blob) != expected_length(meta):
        raise TruncationError(f"{path}: file is {len(blob)} bytes, "
                              f"expected {expected_length(meta)}")

    numeric = np.frombuffer(blob, dtype="<f8", count=n * FRAME_STRIDE,
                            offset=header_end).reshape(n, FRAME_STRIDE).copy()
    images = None
    if load_images:
        images = np.frombuffer(blob, dtype="<f4",
                               count=n * 2 * meta.image_height * meta.image_width * IMAGE_CHANNELS,
                               offset=header_end + numeric_bytes)
        images = images.reshape(n, 2, meta.image_height, meta.image_width,
                                IMAGE_CHANNELS).copy()
        depth = images[..., 3]
        depth[depth >= DEPTH_SENTINEL] = np.inf
    return EpisodeData(meta, numeric, images)


# ---------------------------------------------------------------------------
# stats / splits / manifest

STATS_FIELDS = ("state", "action", "target")
STD_FLOOR = 1e-6


def compute_stats(episodes) -> dict:
    """Per-dimension mean/std/min/max over the given episodes' frames."""
    if not episodes:
        raise DatasetError("cannot compute stats over an empty train split")
    out = {}
    for name in STATS_FIELDS:
        data = np.concatenate([ep.column(name) for ep in episodes], axis=0)
        std = np.maximum(data.std(axis=0), STD_FLOOR)
        out[name] = {
            "mean": data.mean(axis=0).tolist(),
            "std": std.tolist(),
            "min": data.min(axis=0).tolist(),
            "max": data.max(axis=0).tolist(),
        }
    return out


def normalize(data: np.ndarray, stats: dict) -> np.ndarray:
    return (data - np.asarray(stats["mean"])) / np.asarray(stats["std"])


def denormalize(data: np.ndarray, stats: dict) -> np.ndarray:
    return data * np.asarray(stats["std"]) + np.asarray(stats["mean"])


def split_episodes(manifest: dict, test_fraction: float, seed: int) -> dict:
    """Deterministic per-task stratified split; returns {"train": [...], "test": [...]}.

    Tasks with >= 2 episodes contribute at least one episode to each side.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test fraction must be in (0, 1)")
    by_task = {}
    for ep in manifest["episodes"]:
        by_task.setdefault(ep["task_id"], []).append(ep["episode_id"])
    train, test = [], []
    rng = np.random.default_rng(seed)
    for task_id in sorted(by_task):
        ids = sorted(by_task[task_id])
        if len(ids) < 2:
            train.extend(ids)
            continue
        order = rng.permutation(len(ids))
        n_test = int(round(test_fraction * len(ids)))
        n_test = min(max(1, n_test), len(ids) - 1)
        picked = [ids[i] for i in order]
        test.extend(sorted(picked[:n_test]))
        train.extend(sorted(picked[n_test:]))
    return {"train": sorted(train), "test": sorted(test)}


def write_manifest(directory, manifest: dict) -> None:
    text = json.dumps(manifest, sort_keys=True, indent=1)
    (Path(directory) / MANIFEST_NAME).write_text(text + "\n", encoding="utf-8")


def load_manifest(directory) -> dict:
    path = Path(directory) / MANIFEST_NAME
    if not path.exists():
        raise DatasetError(f"no {MANIFEST_NAME} in {directory}")
    manifest = json.loads(path.read_text(encoding="utf-8"))
    if manifest.get("format_version") != FORMAT_VERSION:
        raise VersionError(f"manifest format version {manifest.get('format_version')} "
                           f"unsupported (expected {FORMAT_VERSION})")
    return manifest


def episode_filename(episode_id: int) -> str:
    return f"ep{episode_id:05d}.bin"


def validate_dataset(directory) -> list:
    """Full-dataset integrity check; returns violation strings (empty = pass)."""
    directory = Path(directory)
    problems = []
    try:
        manifest = load_manifest(directory)
    except DatasetError as e:
        return [str(e)]

    split_ids = sorted(manifest["splits"]["train"] + manifest["splits"]["test"])
    listed_ids = sorted(ep["episode_id"] for ep in manifest["episodes"])
    if split_ids != listed_ids:
        problems.append("splits do not partition the episode list")

    total_frames = 0
    train_eps = []
    for entry in manifest["episodes"]:
        path = directory / entry["file"]
        try:
            ep = read_episode(path, load_images=False)
        except DatasetError as e:
            problems.append(f"{entry['file']}: {e}")
            continue
        problems.extend(f"{entry['file']}: {p}" for p in validate_episode(ep))
        if ep.meta.frames != entry["frames"]:
            problems.append(f"{entry['file']}: manifest frame count {entry['frames']} "
                            f"!= stored {ep.meta.frames}")
        total_frames += ep.meta.frames
        if entry["episode_id"] in manifest["splits"]["train"]:
            train_eps.append(ep)
    if total_frames != manifest["totals"]["frames"]:
        problems.append(f"manifest frame total {manifest['totals']['frames']} "
                        f"!= sum over episodes {total_frames}")
    if len(manifest["episodes"]) != manifest["totals"]["episodes"]:
        problems.append("manifest episode total != episode list length")

    if train_eps and not problems:
        fresh = compute_stats(sorted(train_eps, key=lambda e: e.meta.episode_id))
        for name in STATS_FIELDS:
            for key in ("mean", "std", "min", "max"):
                a = np.asarray(fresh[name][key])
                b = np.asarray(manifest["stats"][name][key])
                if a.shape != b.shape or np.max(np.abs(a - b)) > 1e-9:
                    problems.append(f"stats[{name}][{key}] do not match a recomputation")
    return problems
