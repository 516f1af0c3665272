"""Training: mini-batch SGD with momentum on the combined objective.

The perception branch regresses the robot-centric target (normalized
position + raw quaternion) from token grids; the action branch clones the
recorded normalized actions from a flat observation (normalized state,
instruction one-hot, masked channel means of the grid). Total objective is
L_action + alpha * L_cap, so alpha = 0 provably never touches CAP weights.
"""

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..dataset import (
    FORMAT_VERSION,
    ChecksumError,
    DatasetError,
    FormatError,
    TruncationError,
    checksum64,
    load_manifest,
    normalize,
    read_episode,
)
from .bc import BcParams, bc_forward, bc_loss_and_grads
from .cap import CapConfig, CapParams, cap_forward_batch, cap_loss_and_grads, total_loss
from .tokens import grid_from_frame

N_INSTRUCTIONS = 9


@dataclass
class LossConfig:
    alpha: float = 0.1
    learning_rate: float = 0.02
    batch_size: int = 64
    steps: int = 500
    momentum: float = 0.9
    seed: int = 0
    hidden: int = 32
    conv_channels: int = 8
    kernel: int = 3

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be > 0")

    @classmethod
    def from_config(cls, cfg: dict, seed: int) -> "LossConfig":
        t = cfg["train"]
        return cls(alpha=t["alpha"], learning_rate=t["learning_rate"],
                   batch_size=t["batch_size"], steps=t["steps"],
                   momentum=t["momentum"], seed=seed, hidden=t["hidden"],
                   conv_channels=t["conv_channels"], kernel=t["kernel"])


@dataclass
class TrainData:
    feats: np.ndarray        # (N, Hc, Wc, C) float32
    masks: np.ndarray        # (N, Hc, Wc) float32
    obs: np.ndarray          # (N, D) float64
    actions: np.ndarray      # (N, 13) normalized
    cap_labels: np.ndarray   # (N, 7) normalized position + raw quaternion
    positions_m: np.ndarray  # (N, 3) true label positions, meters
    quats: np.ndarray        # (N, 4)
    instruction_ids: np.ndarray
    episode_ids: np.ndarray
    stats: dict

    def __len__(self):
        return len(self.obs)


def build_training_set(dataset_dir, config: dict, split: str = "train") -> TrainData:
    manifest = load_manifest(dataset_dir)
    stats = manifest["stats"]
    grid = config["train"]["grid"]
    pad = config["train"]["grid_pad"]
    focal = config["image"]["focal_px"]
    stride = max(1, int(config["train"]["frame_stride"]))
    ids = set(manifest["splits"][split])
    entries = [e for e in manifest["episodes"] if e["episode_id"] in ids]
    if not entries:
        raise DatasetError(f"split {split!r} is empty")

    feats, masks, obs, actions, labels = [], [], [], [], []
    pos_m, quats, instr, ep_ids = [], [], [], []
    t_mean = np.asarray(stats["target"]["mean"])
    t_std = np.asarray(stats["target"]["std"])
    for entry in sorted(entries, key=lambda e: e["episode_id"]):
        ep = read_episode(Path(dataset_dir) / entry["file"], load_images=True)
        sem = ep.meta.target_semantic_id
        onehot = np.zeros(N_INSTRUCTIONS)
        onehot[ep.meta.instruction_id] = 1.0
        state_n = normalize(ep.column("state"), stats["state"])
        action_n = normalize(ep.column("action"), stats["action"])
        target = ep.column("target")
        for k in range(0, ep.meta.frames, stride):
            g = grid_from_frame(ep.images[k], sem, grid=grid, pad=pad,
                                focal_px=focal)
            feats.append(g.features.astype(np.float32))
            masks.append(g.mask.astype(np.float32))
            n_valid = g.mask.sum()
            chan_mean = (g.features * g.mask[..., None]).sum(axis=(0, 1)) / n_valid
            obs.append(np.concatenate([state_n[k], onehot, chan_mean]))
            actions.append(action_n[k])
            pos_norm = (target[k, 4:7] - t_mean[4:7]) / t_std[4:7]
            labels.append(np.concatenate([pos_norm, target[k, :4]]))
            pos_m.append(target[k, 4:7])
            quats.append(target[k, :4])
            instr.append(ep.meta.instruction_id)
            ep_ids.append(ep.meta.episode_id)
    return TrainData(np.stack(feats), np.stack(masks), np.stack(obs),
                     np.stack(actions), np.stack(labels), np.stack(pos_m),
                     np.stack(quats), np.asarray(instr), np.asarray(ep_ids), stats)


@dataclass
class TrainResult:
    cap: CapParams
    bc: BcParams
    cap_cfg: CapConfig
    obs_dim: int
    loss_curve: np.ndarray  # (steps, 3): total, action, cap
    stats: dict = field(default_factory=dict)


def train(data: TrainData, cfg: LossConfig) -> TrainResult:
    rng = np.random.default_rng(cfg.seed)
    cap_cfg = CapConfig(kernel=cfg.kernel, channels_in=data.feats.shape[-1],
                        channels_mid=cfg.conv_channels, hidden=cfg.hidden)
    cap = CapParams.init(cap_cfg, rng)
    bc = BcParams.init(data.obs.shape[1], cfg.hidden, rng)

    # Mean pooling over the grid leaves features orders of magnitude below
    # unit scale; rescale the first MLP layer once (deterministic probe) so
    # optimization starts in a healthy regime.
    probe = slice(0, min(512, len(data)))
    _, cache = cap_forward_batch(cap, data.feats[probe].astype(np.float64),
                                 data.masks[probe].astype(np.float64),
                                 cap_cfg, want_cache=True)
    pooled_scale = np.maximum(cache["pooled"].std(axis=0), 1e-3)
    cap.w1 = cap.w1 / pooled_scale[:, None]

    v_cap = CapParams.zeros(cap_cfg)
    v_bc = bc.scaled(0.0)
    curve = np.empty((cfg.steps, 3))

    n = len(data)
    for step in range(cfg.steps):
        idx = rng.integers(0, n, size=cfg.batch_size)
        batch_feats = data.feats[idx].astype(np.float64)
        batch_masks = data.masks[idx].astype(np.float64)
        l_bc, g_bc = bc_loss_and_grads(bc, data.obs[idx], data.actions[idx])
        l_cap, g_cap, _, _ = cap_loss_and_grads(cap, batch_feats, batch_masks,
                                                data.cap_labels[idx], cap_cfg)
        loss = total_loss(l_bc, l_cap, cfg.alpha)
        if not np.isfinite(loss):
            raise FloatingPointError(
                f"training diverged at step {step}: total={loss}, "
                f"action={l_bc}, cap={l_cap}")
        curve[step] = (loss, l_bc, l_cap)
        # d(total)/d(cap params) carries the alpha factor; alpha = 0 is a no-op
        v_cap = v_cap.scaled(cfg.momentum).axpy(cfg.alpha, g_cap)
        cap = cap.axpy(-cfg.learning_rate, v_cap)
        v_bc = v_bc.scaled(cfg.momentum).axpy(1.0, g_bc)
        bc = bc.axpy(-cfg.learning_rate, v_bc)
    return TrainResult(cap, bc, cap_cfg, data.obs.shape[1], curve, stats=data.stats)


def predict_cap(result: TrainResult, data: TrainData, batch: int = 512) -> np.ndarray:
    """CAP raw predictions (N, 7): normalized position + unit quaternion."""
    out = np.empty((len(data), 7))
    for at in range(0, len(data), batch):
        sl = slice(at, min(at + batch, len(data)))
        T, _ = cap_forward_batch(result.cap, data.feats[sl].astype(np.float64),
                                 data.masks[sl].astype(np.float64), result.cap_cfg)
        out[sl] = T
    return out


def cap_positions_m(preds: np.ndarray, stats: dict) -> np.ndarray:
    """Unnormalize the position part of CAP predictions back to meters."""
    t_mean = np.asarray(stats["target"]["mean"])[4:7]
    t_std = np.asarray(stats["target"]["std"])[4:7]
    return preds[:, :3] * t_std + t_mean


def to_pose_array(positions_m: np.ndarray, quats: np.ndarray) -> np.ndarray:
    """Stack (quat, position) into the 7-double pose layout used by e_target."""
    return np.concatenate([quats, positions_m], axis=1)


def predict_bc(result: TrainResult, data: TrainData) -> np.ndarray:
    pred, _ = bc_forward(result.bc, data.obs)
    return pred


# ---------------------------------------------------------------------------
# checkpoint container (same chunked-binary style as episodes)

CKPT_MAGIC = b"UCKP"


def save_checkpoint(path, result: TrainResult) -> None:
    arrays = ([getattr(result.cap, n) for n in CapParams._ORDER]
              + [getattr(result.bc, n) for n in BcParams._ORDER]
              + [result.loss_curve])
    meta = {
        "format_version": FORMAT_VERSION,
        "cap_config": {
            "kernel": result.cap_cfg.kernel,
            "channels_in": result.cap_cfg.channels_in,
            "channels_mid": result.cap_cfg.channels_mid,
            "hidden": result.cap_cfg.hidden,
            "activation": result.cap_cfg.activation,
            "attention": result.cap_cfg.attention,
            "normalize_quat": result.cap_cfg.normalize_quat,
        },
        "obs_dim": result.obs_dim,
        "shapes": [list(a.shape) for a in arrays],
        "stats": result.stats,
    }
    meta_json = json.dumps(meta, sort_keys=True).encode("utf-8")
    payload = (CKPT_MAGIC + struct.pack("<II", FORMAT_VERSION, len(meta_json))
               + meta_json
               + b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes()
                          for a in arrays))
    Path(path).write_bytes(payload + struct.pack("<Q", checksum64(payload)))


def load_checkpoint(path) -> TrainResult:
    blob = Path(path).read_bytes()
    if len(blob) < 20:
        raise TruncationError(f"{path}: not a checkpoint file")
    if blob[:4] != CKPT_MAGIC:
        raise FormatError(f"{path}: bad checkpoint magic {blob[:4]!r}")
    version, meta_len = struct.unpack_from("<II", blob, 4)
    if version != FORMAT_VERSION:
        raise DatasetError(f"{path}: unsupported checkpoint version {version}")
    stored, = struct.unpack_from("<Q", blob, len(blob) - 8)
    if checksum64(blob[:-8]) != stored:
        raise ChecksumError(f"{path}: checkpoint checksum mismatch")
    meta = json.loads(blob[12:12 + meta_len])
    at = 12 + meta_len
    arrays = []
    for shape in meta["shapes"]:
        size = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(blob, dtype="<f8", count=size, offset=at)
        arrays.append(arr.reshape(shape).copy())
        at += size * 8
    cap = CapParams(*arrays[:8])
    bc = BcParams(*arrays[8:12])
    curve = arrays[12]
    cc = meta["cap_config"]
    cap_cfg = CapConfig(kernel=cc["kernel"], channels_in=cc["channels_in"],
                        channels_mid=cc["channels_mid"], hidden=cc["hidden"],
                        activation=cc["activation"], attention=cc["attention"],
                        normalize_quat=cc["normalize_quat"])
    return TrainResult(cap, bc, cap_cfg, meta["obs_dim"], curve,
                       stats=meta.get("stats", {}))
