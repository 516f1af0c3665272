"""Visual token grids: the renderer-feature stand-in for VLM tokens.

Per-cell features are block averages of the rendered channels (RGB, bounded
depth, target-pixel fraction; both eyes concatenated on the channel axis)
plus two normalized cell-coordinate channels standing in for the positional
embeddings VLM tokens carry. Each eye also contributes four frame-level
summary channels broadcast to every valid cell (a CLS-token analogue): a
target-visibility flag and the camera-frame backprojection of the target's
pixel centroid through the depth channel. Without positional and summary
channels, globally pooled convolution features are translation-invariant
and provably cannot localize a target.

The grid embeds into a slightly larger canvas whose border cells carry zero
features and a zero validity mask, mirroring padded token layouts.
"""

from dataclasses import dataclass

import numpy as np

DEPTH_CAP = 50.0  # m; depths clip here and scale summary channels
EYE_CELL_CHANNELS = 5     # rgb + depth + target fraction
EYE_SUMMARY_CHANNELS = 4  # visible flag + camera-frame target estimate
POSITION_CHANNELS = 2
GRID_CHANNELS = 2 * (EYE_CELL_CHANNELS + EYE_SUMMARY_CHANNELS) + POSITION_CHANNELS


@dataclass
class TokenGrid:
    features: np.ndarray  # (H, W, C) float64
    mask: np.ndarray      # (H, W) float64 in {0, 1}

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.mask = np.asarray(self.mask, dtype=float)
        if self.features.shape[:2] != self.mask.shape:
            raise ValueError("feature and mask shapes disagree")
        if not np.isfinite(self.features).all():
            raise ValueError("token features must be finite")
        if not np.all((self.mask == 0.0) | (self.mask == 1.0)):
            raise ValueError("mask entries must be 0 or 1")
        if np.any((self.mask == 0.0) & np.any(self.features != 0.0, axis=-1)):
            raise ValueError("padded cells must carry zero features")


def _block_reduce(img: np.ndarray, grid: int) -> np.ndarray:
    h = img.shape[0]
    b = h // grid
    trailing = img.shape[2:]
    return img.reshape(grid, b, grid, b, *trailing).mean(axis=(1, 3))


def eye_features(image: np.ndarray, target_sem_id: int, grid: int) -> np.ndarray:
    """(H, W, 5) rendered image -> (grid, grid, 5) block features in [0, 1]."""
    h, w = image.shape[:2]
    if h != w or h % grid != 0:
        raise ValueError(f"image size {h}x{w} not divisible into a {grid} grid")
    rgb = _block_reduce(image[..., 0:3].astype(float), grid)
    depth = np.minimum(image[..., 3].astype(float), DEPTH_CAP) / DEPTH_CAP
    depth = _block_reduce(depth, grid)[..., None]
    hit = (image[..., 4] == float(target_sem_id)).astype(float)
    target = _block_reduce(hit, grid)[..., None]
    return np.concatenate([rgb, depth, target], axis=-1)


def eye_target_summary(image: np.ndarray, target_sem_id: int,
                       focal_px: float | None = None) -> np.ndarray:
    """Frame-level target estimate: (visible, x, y, z)/cap in the camera frame.

    Backprojects the centroid of target-labeled pixels through the stored
    ray distances; all-zero when the target is out of view.
    """
    h, w = image.shape[:2]
    if focal_px is None:
        focal_px = w / 2.0
    hit = image[..., 4] == float(target_sem_id)
    if not np.any(hit):
        return np.zeros(EYE_SUMMARY_CHANNELS)
    vv, uu = np.nonzero(hit)
    x = (uu + 0.5 - w / 2.0) / focal_px
    y = (vv + 0.5 - h / 2.0) / focal_px
    dirs = np.stack([x, y, np.ones_like(x)], axis=1)
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    t = image[..., 3][hit].astype(float)
    point = (dirs * t[:, None]).mean(axis=0)
    return np.concatenate([[1.0], point / DEPTH_CAP])


def position_channels(grid: int) -> np.ndarray:
    """(grid, grid, 2) cell-center coordinates in [-1, 1] (u across, v down)."""
    coords = (np.arange(grid) + 0.5) / grid * 2.0 - 1.0
    v, u = np.meshgrid(coords, coords, indexing="ij")
    return np.stack([u, v], axis=-1)


def grid_from_frame(images: np.ndarray, target_sem_id: int,
                    grid: int = 16, pad: int = 1,
                    focal_px: float | None = None) -> TokenGrid:
    """Stereo image pair (2, H, W, 5) -> padded TokenGrid."""
    cells = [eye_features(images[0], target_sem_id, grid),
             eye_features(images[1], target_sem_id, grid)]
    summaries = [eye_target_summary(images[0], target_sem_id, focal_px),
                 eye_target_summary(images[1], target_sem_id, focal_px)]
    ones = np.ones((grid, grid, 1))
    inner = np.concatenate(
        cells + [ones * s[None, None, :] for s in summaries]
        + [position_channels(grid)], axis=-1)
    canvas = np.zeros((grid + 2 * pad, grid + 2 * pad, GRID_CHANNELS))
    mask = np.zeros((grid + 2 * pad, grid + 2 * pad))
    if pad:
        canvas[pad:-pad, pad:-pad] = inner
        mask[pad:-pad, pad:-pad] = 1.0
    else:
        canvas[:] = inner
        mask[:] = 1.0
    return TokenGrid(canvas, mask)
