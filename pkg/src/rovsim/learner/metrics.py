"""Offline evaluation metrics.

e_action: mean absolute error over all frames and action dimensions, in the
normalized action space. e_target: mean Euclidean distance over the
position components in meters; the orientation part is excluded by default
(set part="orientation" for the geodesic-angle variant).
"""

import numpy as np


def e_action(predicted: np.ndarray, recorded: np.ndarray) -> float:
    predicted = np.asarray(predicted, dtype=float)
    recorded = np.asarray(recorded, dtype=float)
    if predicted.shape != recorded.shape:
        raise ValueError(f"shape mismatch {predicted.shape} vs {recorded.shape}")
    return float(np.mean(np.abs(predicted - recorded)))


def e_target(predicted: np.ndarray, ground_truth: np.ndarray,
             part: str = "position") -> float:
    """predicted/ground_truth are (N, 7) pose arrays (qw qx qy qz tx ty tz)."""
    predicted = np.asarray(predicted, dtype=float)
    ground_truth = np.asarray(ground_truth, dtype=float)
    if predicted.shape != ground_truth.shape:
        raise ValueError(f"shape mismatch {predicted.shape} vs {ground_truth.shape}")
    if predicted.ndim == 1:
        predicted = predicted[None]
        ground_truth = ground_truth[None]
    if part == "position":
        d = predicted[:, 4:7] - ground_truth[:, 4:7]
        return float(np.mean(np.linalg.norm(d, axis=1)))
    if part == "orientation":
        dots = np.abs(np.sum(predicted[:, :4] * ground_truth[:, :4], axis=1))
        return float(np.mean(2.0 * np.arccos(np.clip(dots, -1.0, 1.0))))
    raise ValueError(f"unknown metric part {part!r}")
