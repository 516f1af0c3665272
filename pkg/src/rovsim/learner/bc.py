"""Behavior-cloning action head: a small affine MLP onto the 13-dim action.

Stands in for the full generative action module so the combined objective
(action loss + weighted perception loss) is exercised end to end.
"""

import math
from dataclasses import dataclass

import numpy as np

ACTION_DIM = 13


@dataclass
class BcParams:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    _ORDER = ("w1", "b1", "w2", "b2")

    @classmethod
    def init(cls, obs_dim: int, hidden: int, rng: np.random.Generator) -> "BcParams":
        def glorot(*shape):
            fan = sum(shape[-2:]) if len(shape) > 1 else shape[0]
            return rng.normal(0.0, math.sqrt(2.0 / fan), size=shape)
        return cls(glorot(obs_dim, hidden), np.zeros(hidden),
                   glorot(hidden, ACTION_DIM), np.zeros(ACTION_DIM))

    def copy(self) -> "BcParams":
        return BcParams(*(getattr(self, n).copy() for n in self._ORDER))

    def axpy(self, scale: float, other: "BcParams") -> "BcParams":
        return BcParams(*(getattr(self, n) + scale * getattr(other, n)
                          for n in self._ORDER))

    def scaled(self, s: float) -> "BcParams":
        return BcParams(*(s * getattr(self, n) for n in self._ORDER))


def bc_forward(params: BcParams, obs: np.ndarray):
    h_pre = obs @ params.w1 + params.b1
    h = np.tanh(h_pre)
    actions = h @ params.w2 + params.b2
    return actions, (obs, h)


def bc_loss_and_grads(params: BcParams, obs: np.ndarray, targets: np.ndarray):
    """MSE in normalized action space plus analytic gradients."""
    pred, (obs, h) = bc_forward(params, obs)
    d = pred - targets
    loss = float(np.mean(d * d))
    g_pred = 2.0 * d / d.size
    d_w2 = h.T @ g_pred
    d_b2 = g_pred.sum(axis=0)
    g_h = g_pred @ params.w2.T
    g_hpre = g_h * (1.0 - h * h)
    d_w1 = obs.T @ g_hpre
    d_b1 = g_hpre.sum(axis=0)
    return loss, BcParams(d_w1, d_b1, d_w2, d_b2)
