"""Parser for UEP1 episodic datasets, implemented against docs/FORMAT.md.

Deliberately shares no code with the producer: constants, checksum, pose
math, and validation are all re-derived from the format document so this
package doubles as a cross-check of it.
"""

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"UEP1"
SUPPORTED_VERSION = 1
FRAME_DOUBLES = 66
IMAGE_CHANNELS = 5
DEPTH_SENTINEL = np.float32(3.4028235e38)
STD_FLOOR = 1e-6

# column spans within a numeric row, straight from the format table
SPANS = {
    "timestamps": (0, 1),
    "imu": (1, 7),
    "dvl": (7, 11),
    "pressure": (11, 13),
    "state": (13, 39),
    "action": (39, 52),
    "target": (52, 59),
    "target_world": (59, 66),
}
STATS_FIELDS = ("state", "action", "target")


class ReaderError(Exception):
    pass


class BadMagicError(ReaderError):
    pass


class UnsupportedVersionError(ReaderError):
    pass


class ChecksumMismatchError(ReaderError):
    pass


class TruncatedFileError(ReaderError):
    pass


def file_checksum(payload: bytes) -> int:
    return int.from_bytes(hashlib.sha256(payload).digest()[:8], "little")


@dataclass
class EpisodeView:
    meta: dict
    timestamps: np.ndarray
    imu: np.ndarray
    dvl: np.ndarray
    pressure: np.ndarray
    state: np.ndarray
    action: np.ndarray
    target: np.ndarray
    target_world: np.ndarray
    images: np.ndarray | None

    @property
    def frames(self) -> int:
        return int(self.meta["frames"])


def load_manifest(dataset_dir) -> dict:
    path = Path(dataset_dir) / "manifest.json"
    if not path.exists():
        raise ReaderError(f"{dataset_dir}: no manifest.json")
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ReaderError(f"{path}: malformed manifest ({e})") from e
    version = manifest.get("format_version")
    if version != SUPPORTED_VERSION:
        raise UnsupportedVersionError(
            f"{path}: manifest is format version {version}, "
            f"this reader supports {SUPPORTED_VERSION}")
    return manifest


def load_episode(path, want_images: bool = True) -> EpisodeView:
    blob = Path(path).read_bytes()
    if len(blob) < 12:
        raise TruncatedFileError(f"{path}: shorter than the fixed header")
    if blob[:4] != MAGIC:
        raise BadMagicError(f"{path}: magic {blob[:4]!r} != {MAGIC!r}")
    version, meta_len = struct.unpack_from("<II", blob, 4)
    if version != SUPPORTED_VERSION:
        raise UnsupportedVersionError(
            f"{path}: file is format version {version}, "
            f"this reader supports {SUPPORTED_VERSION}")
    body_at = 12 + meta_len
    if len(blob) < body_at + 8:
        raise TruncatedFileError(f"{path}: truncated inside the meta block")
    stored, = struct.unpack_from("<Q", blob, len(blob) - 8)
    checksum_ok = file_checksum(blob[:-8]) == stored

    try:
        meta = json.loads(blob[12:body_at])
    except json.JSONDecodeError as e:
        if not checksum_ok:
            raise ChecksumMismatchError(f"{path}: checksum mismatch") from e
        raise ReaderError(f"{path}: malformed meta JSON ({e})") from e

    frames = int(meta["frames"])
    h, w = int(meta["image_height"]), int(meta["image_width"])
    numeric_bytes = frames * FRAME_DOUBLES * 8
    image_bytes = frames * 2 * h * w * IMAGE_CHANNELS * 4
    expected = body_at + numeric_bytes + image_bytes + 8
    if len(blob) != expected:
        if len(blob) < expected:
            raise TruncatedFileError(
                f"{path}: {len(blob)} bytes, format requires {expected}")
        raise ReaderError(f"{path}: {len(blob) - expected} trailing bytes")
    if not checksum_ok:
        raise ChecksumMismatchError(f"{path}: checksum mismatch")

    numeric = np.frombuffer(blob, dtype="<f8", count=frames * FRAME_DOUBLES,
                            offset=body_at).reshape(frames, FRAME_DOUBLES)
    fields = {name: numeric[:, a:b].copy() for name, (a, b) in SPANS.items()}
    images = None
    if want_images:
        images = np.frombuffer(
            blob, dtype="<f4", count=frames * 2 * h * w * IMAGE_CHANNELS,
            offset=body_at + numeric_bytes,
        ).reshape(frames, 2, h, w, IMAGE_CHANNELS).copy()
        depth = images[..., 3]
        depth[depth >= DEPTH_SENTINEL] = np.inf
    return EpisodeView(meta=meta, images=images,
                       timestamps=fields["timestamps"][:, 0],
                       imu=fields["imu"], dvl=fields["dvl"],
                       pressure=fields["pressure"], state=fields["state"],
                       action=fields["action"], target=fields["target"],
                       target_world=fields["target_world"])


# ---------------------------------------------------------------------------
# independent pose math (quaternion sandwich products, no matrices)

def _q_mul(a, b):
    w0, x0, y0, z0 = a
    w1, x1, y1, z1 = b
    return np.array([
        w0 * w1 - x0 * x1 - y0 * y1 - z0 * z1,
        w0 * x1 + x0 * w1 + y0 * z1 - z0 * y1,
        w0 * y1 - x0 * z1 + y0 * w1 + z0 * x1,
        w0 * z1 + x0 * y1 - y0 * x1 + z0 * w1,
    ])


def _q_conj(q):
    return np.array([q[0], -q[1], -q[2], -q[3]])


def _q_rotate(q, v):
    """Rotate v by quaternion q via the sandwich product q (0,v) q*."""
    qv = np.concatenate(([0.0], v))
    return _q_mul(_q_mul(q, qv), _q_conj(q))[1:]


def robot_centric(target_world_pose: np.ndarray, robot_pose: np.ndarray) -> np.ndarray:
    """Re-derive the robot-centric target label from two world poses."""
    q_t, t_t = target_world_pose[:4], target_world_pose[4:]
    q_r, t_r = robot_pose[:4], robot_pose[4:]
    q_rel = _q_mul(_q_conj(q_r), q_t)
    if q_rel[0] < 0:
        q_rel = -q_rel
    t_rel = _q_rotate(_q_conj(q_r), t_t - t_r)
    return np.concatenate([q_rel, t_rel])


# ---------------------------------------------------------------------------
# validation

def _check_episode(view: EpisodeView, name: str) -> list:
    problems = []
    n = view.frames
    expect_ts = np.arange(n, dtype=np.float64) * 0.1
    if not np.array_equal(view.timestamps, expect_ts):
        problems.append(f"{name}: timestamps violate the exact 10 Hz rule")
    for field in ("imu", "dvl", "pressure", "state", "action", "target",
                  "target_world"):
        if not np.isfinite(getattr(view, field)).all():
            problems.append(f"{name}: non-finite values in {field}")
    qn = np.linalg.norm(view.target[:, :4], axis=1)
    if np.any(np.abs(qn - 1.0) > 1e-9):
        problems.append(f"{name}: target quaternions not unit norm")
    robot_poses = view.state[:, 13:20]
    for k in range(n):
        rel = robot_centric(view.target_world[k], robot_poses[k])
        if (np.max(np.abs(rel[4:] - view.target[k, 4:])) > 1e-9
                or abs(float(rel[:4] @ view.target[k, :4])) < 1.0 - 1e-9):
            problems.append(f"{name}: frame {k} label fails the robot-centric "
                            "recomputation")
            break
    return problems


def validate_dataset(dataset_dir) -> list:
    """Full independent validation; empty list means the dataset passes."""
    dataset_dir = Path(dataset_dir)
    try:
        manifest = load_manifest(dataset_dir)
    except ReaderError as e:
        return [str(e)]
    problems = []
    splits = manifest["splits"]
    listed = sorted(e["episode_id"] for e in manifest["episodes"])
    if sorted(splits["train"] + splits["test"]) != listed:
        problems.append("splits do not partition the episode ids")

    frames_total = 0
    train_concat = {f: [] for f in STATS_FIELDS}
    for entry in sorted(manifest["episodes"], key=lambda e: e["episode_id"]):
        name = entry["file"]
        try:
            view = load_episode(dataset_dir / name, want_images=False)
        except ReaderError as e:
            problems.append(str(e))
            continue
        problems.extend(_check_episode(view, name))
        if view.frames != entry["frames"]:
            problems.append(f"{name}: manifest says {entry['frames']} frames, "
                            f"file holds {view.frames}")
        frames_total += view.frames
        if entry["episode_id"] in set(splits["train"]):
            for f in STATS_FIELDS:
                train_concat[f].append(getattr(view, f))

    if frames_total != manifest["totals"]["frames"]:
        problems.append(f"frame total {frames_total} != manifest "
                        f"{manifest['totals']['frames']}")
    if len(manifest["episodes"]) != manifest["totals"]["episodes"]:
        problems.append("episode total mismatch")

    if not problems and train_concat["state"]:
        for f in STATS_FIELDS:
            data = np.concatenate(train_concat[f], axis=0)
            expect = {
                "mean": data.mean(axis=0),
                "std": np.maximum(data.std(axis=0), STD_FLOOR),
                "min": data.min(axis=0),
                "max": data.max(axis=0),
            }
            for key, val in expect.items():
                have = np.asarray(manifest["stats"][f][key])
                if have.shape != val.shape or np.max(np.abs(have - val)) > 1e-9:
                    problems.append(f"stats[{f}][{key}] disagree with a "
                                    "recomputation over the train split")
    return problems
