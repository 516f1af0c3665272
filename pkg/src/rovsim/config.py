"""Run configuration: embedded defaults, JSON config files, env override.

A config file only needs the keys it changes; it is deep-merged over the
defaults. The CLI looks for a path in --config first, then the
ROVSIM_CONFIG environment variable.
"""

import copy
import json
import os
from pathlib import Path

from .control import PidGains
from .vehicle import VehicleParams
from .world import CameraParams, SensorNoise

ENV_CONFIG = "ROVSIM_CONFIG"

DEFAULTS = {
    "image": {"width": 64, "height": 64, "focal_px": 32.0, "baseline": 0.1},
    "vehicle": {},   # field overrides for VehicleParams
    "gains": {},     # field overrides for PidGains
    "sensors": {},   # field overrides for SensorNoise
    "dataset": {"test_fraction": 0.25},
    "train": {
        "alpha": 0.1,
        "learning_rate": 0.02,
        "batch_size": 64,
        "steps": 500,
        "momentum": 0.9,
        "hidden": 32,
        "conv_channels": 8,
        "kernel": 3,
        "grid": 16,
        "grid_pad": 1,
        "frame_stride": 1,
    },
}


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path: str | None = None) -> dict:
    """Defaults merged with an optional JSON config file."""
    if path is None:
        path = os.environ.get(ENV_CONFIG) or None
    if path is None:
        return copy.deepcopy(DEFAULTS)
    text = Path(path).read_text(encoding="utf-8")
    return _deep_merge(DEFAULTS, json.loads(text))


def camera_from_config(cfg: dict) -> CameraParams:
    img = cfg["image"]
    return CameraParams(width=img["width"], height=img["height"],
                        focal_px=img["focal_px"], baseline=img["baseline"])


def vehicle_params_from_config(cfg: dict) -> VehicleParams:
    return VehicleParams(**cfg.get("vehicle", {}))


def gains_from_config(cfg: dict) -> PidGains:
    return PidGains(**cfg.get("gains", {}))


def sensor_noise_from_config(cfg: dict) -> SensorNoise:
    return SensorNoise(**cfg.get("sensors", {}))
