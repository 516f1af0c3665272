"""Convolution-attention perception head over masked token grids.

Forward structure:

    F      masked convolution: padded cells contribute nothing and each
           window normalizes by its valid-cell count; a cell's output is
           valid iff the cell itself is valid
    Att    sigmoid of a 1x1 convolution of F (channel-wise attention)
    pooled masked global average of F * Att over valid cells
    T      two-layer MLP of pooled; the quaternion part is renormalized

The backward pass is written out analytically (numpy only) and is verified
against central finite differences by grad_check.
"""

import math
from dataclasses import dataclass

import numpy as np

from .tokens import TokenGrid

OUT_DIM = 7  # position (3) + quaternion (4)
_QNORM_EPS = 1e-12


@dataclass
class CapConfig:
    kernel: int = 3
    channels_in: int = 10
    channels_mid: int = 8
    hidden: int = 32
    activation: str = "tanh"      # "tanh" | "identity"
    attention: str = "sigmoid"    # "sigmoid" | "identity"
    normalize_quat: bool = True

    def __post_init__(self):
        if self.kernel % 2 != 1:
            raise ValueError("kernel size must be odd")
        if self.activation not in ("tanh", "identity"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.attention not in ("sigmoid", "identity"):
            raise ValueError(f"unknown attention {self.attention!r}")

    @classmethod
    def linear(cls, **kw) -> "CapConfig":
        """All-linear variant; central differences are exact on it."""
        return cls(activation="identity", attention="identity",
                   normalize_quat=False, **kw)


@dataclass
class CapParams:
    conv_w: np.ndarray   # (k, k, C_in, C_mid)
    conv_b: np.ndarray   # (C_mid,)
    att_w: np.ndarray    # (C_mid, C_mid), the 1x1 attention conv
    att_b: np.ndarray    # (C_mid,)
    w1: np.ndarray       # (C_mid, hidden)
    b1: np.ndarray       # (hidden,)
    w2: np.ndarray       # (hidden, OUT_DIM)
    b2: np.ndarray       # (OUT_DIM,)

    _ORDER = ("conv_w", "conv_b", "att_w", "att_b", "w1", "b1", "w2", "b2")

    @classmethod
    def init(cls, cfg: CapConfig, rng: np.random.Generator) -> "CapParams":
        k, ci, cm, h = cfg.kernel, cfg.channels_in, cfg.channels_mid, cfg.hidden
        def glorot(*shape):
            fan = sum(shape[-2:]) if len(shape) > 1 else shape[0]
            return rng.normal(0.0, math.sqrt(2.0 / fan), size=shape)
        b2 = np.zeros(OUT_DIM)
        b2[3] = 1.0  # identity-quaternion prior keeps renormalization well-posed
        return cls(conv_w=glorot(k, k, ci, cm), conv_b=np.zeros(cm),
                   att_w=glorot(cm, cm), att_b=np.zeros(cm),
                   w1=glorot(cm, h), b1=np.zeros(h),
                   w2=glorot(h, OUT_DIM), b2=b2)

    @classmethod
    def zeros(cls, cfg: CapConfig) -> "CapParams":
        k, ci, cm, h = cfg.kernel, cfg.channels_in, cfg.channels_mid, cfg.hidden
        return cls(np.zeros((k, k, ci, cm)), np.zeros(cm), np.zeros((cm, cm)),
                   np.zeros(cm), np.zeros((cm, h)), np.zeros(h),
                   np.zeros((h, OUT_DIM)), np.zeros(OUT_DIM))

    def copy(self) -> "CapParams":
        return CapParams(*(getattr(self, n).copy() for n in self._ORDER))

    def flatten(self) -> np.ndarray:
        return np.concatenate([getattr(self, n).ravel() for n in self._ORDER])

    def unflatten(self, vec: np.ndarray) -> "CapParams":
        out, at = [], 0
        for n in self._ORDER:
            arr = getattr(self, n)
            out.append(vec[at:at + arr.size].reshape(arr.shape).copy())
            at += arr.size
        return CapParams(*out)

    def axpy(self, scale: float, other: "CapParams") -> "CapParams":
        return CapParams(*(getattr(self, n) + scale * getattr(other, n)
                           for n in self._ORDER))

    def scaled(self, s: float) -> "CapParams":
        return CapParams(*(s * getattr(self, n) for n in self._ORDER))


def _window_patches(padded: np.ndarray, k: int):
    """(B, Hp, Wp, C) -> (B, H, W, C, k, k) sliding windows (views)."""
    return np.lib.stride_tricks.sliding_window_view(padded, (k, k), axis=(1, 2))


def _batched(grids):
    if isinstance(grids, TokenGrid):
        return grids.features[None], grids.mask[None], True
    return grids[0], grids[1], False


def cap_forward_batch(params: CapParams, feats: np.ndarray, masks: np.ndarray,
                      cfg: CapConfig, want_cache: bool = False):
    """Batched forward; feats (B,H,W,C), masks (B,H,W). Returns (T, cache)."""
    if not np.isfinite(feats).all():
        raise ValueError("features must be finite")
    n_valid = masks.sum(axis=(1, 2))
    if np.any(n_valid == 0):
        raise ValueError("grid with no valid cells")
    k = cfg.kernel
    p = k // 2
    xm = feats * masks[..., None]
    xm_pad = np.pad(xm, ((0, 0), (p, p), (p, p), (0, 0)))
    m_pad = np.pad(masks, ((0, 0), (p, p), (p, p)))
    patches = _window_patches(xm_pad, k)            # (B,H,W,C,k,k)
    counts = _window_patches(m_pad, k).sum(axis=(-1, -2))
    counts_safe = np.maximum(counts, 1.0)
    conv = np.einsum("bijckl,klcm->bijm", patches, params.conv_w)
    f = (conv / counts_safe[..., None] + params.conv_b) * masks[..., None]

    a_pre = f @ params.att_w + params.att_b
    att = 1.0 / (1.0 + np.exp(-a_pre)) if cfg.attention == "sigmoid" else a_pre
    g = f * att
    pooled = (g * masks[..., None]).sum(axis=(1, 2)) / n_valid[:, None]

    h_pre = pooled @ params.w1 + params.b1
    h = np.tanh(h_pre) if cfg.activation == "tanh" else h_pre
    raw = h @ params.w2 + params.b2

    T = raw.copy()
    qn = None
    if cfg.normalize_quat:
        qn = np.linalg.norm(raw[:, 3:], axis=1)
        T[:, 3:] = raw[:, 3:] / np.maximum(qn, _QNORM_EPS)[:, None]
    if not want_cache:
        return T, None
    cache = dict(feats=feats, masks=masks, xm_pad=xm_pad, counts=counts_safe,
                 f=f, att=att, pooled=pooled, h_pre=h_pre, h=h, raw=raw,
                 n_valid=n_valid, qn=qn, T=T)
    return T, cache


def cap_forward(params: CapParams, grid: TokenGrid, cfg: CapConfig) -> np.ndarray:
    """Single-grid forward: predicted target (position 3 + quaternion 4)."""
    T, _ = cap_forward_batch(params, grid.features[None], grid.mask[None], cfg)
    return T[0]


def cap_loss(T: np.ndarray, T_gt: np.ndarray) -> float:
    """Mean squared error over components (and batch, if batched)."""
    T = np.asarray(T, dtype=float)
    T_gt = np.asarray(T_gt, dtype=float)
    if T.shape != T_gt.shape:
        raise ValueError(f"shape mismatch {T.shape} vs {T_gt.shape}")
    d = T - T_gt
    return float(np.mean(d * d))


def total_loss(l_action: float, l_cap: float, alpha: float) -> float:
    """Combined objective: action loss plus alpha-weighted perception loss."""
    if l_action < 0 or l_cap < 0:
        raise ValueError("losses must be >= 0")
    return l_action + alpha * l_cap


def cap_backward_batch(params: CapParams, cfg: CapConfig, cache: dict,
                       labels: np.ndarray):
    """Gradients of cap_loss(cap_forward(...), labels) wrt params and features.

    Returns (grads: CapParams, dfeats: (B,H,W,C)).
    """
    feats, masks = cache["feats"], cache["masks"]
    B = feats.shape[0]
    k = cfg.kernel
    p = k // 2
    H, W = masks.shape[1:]

    T, raw = cache["T"], cache["raw"]
    g_T = 2.0 * (T - labels) / labels.size
    g_raw = g_T.copy()
    if cfg.normalize_quat:
        qn = np.maximum(cache["qn"], _QNORM_EPS)[:, None]
        q = T[:, 3:]
        gq = g_T[:, 3:]
        g_raw[:, 3:] = (gq - (gq * q).sum(axis=1, keepdims=True) * q) / qn

    h, h_pre, pooled = cache["h"], cache["h_pre"], cache["pooled"]
    d_w2 = h.T @ g_raw
    d_b2 = g_raw.sum(axis=0)
    g_h = g_raw @ params.w2.T
    g_hpre = g_h * (1.0 - h * h) if cfg.activation == "tanh" else g_h
    d_w1 = pooled.T @ g_hpre
    d_b1 = g_hpre.sum(axis=0)
    g_pooled = g_hpre @ params.w1.T

    n_valid = cache["n_valid"][:, None, None, None]
    g_g = (g_pooled[:, None, None, :] * masks[..., None]) / n_valid

    f, att = cache["f"], cache["att"]
    g_f = g_g * att
    g_att = g_g * f
    if cfg.attention == "sigmoid":
        g_apre = g_att * att * (1.0 - att)
    else:
        g_apre = g_att
    d_att_w = np.einsum("bijc,bijm->cm", f, g_apre)
    d_att_b = g_apre.sum(axis=(0, 1, 2))
    g_f = g_f + g_apre @ params.att_w.T
    g_f = g_f * masks[..., None]  # invalid cells are hard zeros

    counts = cache["counts"]
    d_conv_b = g_f.sum(axis=(0, 1, 2))
    g_conv = g_f / counts[..., None]
    patches = _window_patches(cache["xm_pad"], k)
    d_conv_w = np.einsum("bijckl,bijm->klcm", patches, g_conv)

    g_xpad = np.zeros_like(cache["xm_pad"])
    for di in range(k):
        for dj in range(k):
            g_xpad[:, di:di + H, dj:dj + W, :] += np.einsum(
                "bijm,cm->bijc", g_conv, params.conv_w[di, dj])
    g_x = g_xpad[:, p:p + H, p:p + W, :] * masks[..., None]

    grads = CapParams(d_conv_w, d_conv_b, d_att_w, d_att_b, d_w1, d_b1, d_w2, d_b2)
    return grads, g_x


def cap_loss_and_grads(params: CapParams, feats, masks, labels, cfg: CapConfig):
    T, cache = cap_forward_batch(params, feats, masks, cfg, want_cache=True)
    loss = cap_loss(T, labels)
    grads, dfeats = cap_backward_batch(params, cfg, cache, labels)
    return loss, grads, dfeats, T


def grad_check(params: CapParams, grid: TokenGrid, label: np.ndarray,
               cfg: CapConfig, rng: np.random.Generator,
               n_samples: int = 80, h: float = 1e-4) -> float:
    """Max relative error of analytic vs central-difference gradients."""
    feats = grid.features[None]
    masks = grid.mask[None]
    labels = np.asarray(label, dtype=float)[None]
    _, grads, _, _ = cap_loss_and_grads(params, feats, masks, labels, cfg)
    flat_params = params.flatten()
    flat_grads = grads.flatten()
    idx = rng.choice(flat_params.size, size=min(n_samples, flat_params.size),
                     replace=False)
    worst = 0.0
    for i in idx:
        for sign, store in ((+1, "hi"), (-1, "lo")):
            v = flat_params.copy()
            v[i] += sign * h
            T, _ = cap_forward_batch(params.unflatten(v), feats, masks, cfg)
            if store == "hi":
                l_hi = cap_loss(T, labels)
            else:
                l_lo = cap_loss(T, labels)
        numeric = (l_hi - l_lo) / (2.0 * h)
        analytic = flat_grads[i]
        rel = abs(analytic - numeric) / max(1e-8, abs(analytic) + abs(numeric))
        worst = max(worst, rel)
    return worst
