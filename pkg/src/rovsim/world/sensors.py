"""IMU, DVL, and pressure sensor models.

World frame is NED, so gravity is +9.81 on world z and an accelerometer at
rest reads 9.81 along body-up (-z in FRD). All reads are pure functions of
(state, noise params, rng draw); passing noise with zero sigmas gives exact
truth values.
"""

from dataclasses import dataclass, field

import numpy as np

from ..vehicle import GRAVITY, VehicleState
from .scene import SceneGraph

ATMOSPHERIC_PRESSURE = 101325.0  # Pa
WATER_DENSITY = 1025.0           # kg/m^3

GRAVITY_NED = np.array([0.0, 0.0, GRAVITY])

# Altitude reported when the DVL gets no bottom lock.
DVL_INVALID_ALTITUDE = -1.0


@dataclass
class SensorNoise:
    gyro_sigma: float = 0.002          # rad/s
    accel_sigma: float = 0.02          # m/s^2
    gyro_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    accel_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    dvl_sigma: float = 0.01            # m/s
    altitude_sigma: float = 0.02       # m
    pressure_sigma: float = 50.0       # Pa

    def __post_init__(self):
        self.gyro_bias = np.asarray(self.gyro_bias, dtype=float)
        self.accel_bias = np.asarray(self.accel_bias, dtype=float)

    @classmethod
    def off(cls) -> "SensorNoise":
        return cls(gyro_sigma=0.0, accel_sigma=0.0, dvl_sigma=0.0,
                   altitude_sigma=0.0, pressure_sigma=0.0)


def imu_read(state: VehicleState, true_accel_world: np.ndarray,
             noise: SensorNoise, rng: np.random.Generator):
    """Gyro (rad/s) and accelerometer specific force (m/s^2), body frame."""
    gyro = (state.ang_vel + noise.gyro_bias
            + noise.gyro_sigma * rng.standard_normal(3))
    Rt = state.pose.rotation_matrix().T
    specific = Rt @ (np.asarray(true_accel_world, dtype=float) - GRAVITY_NED)
    accel = specific + noise.accel_bias + noise.accel_sigma * rng.standard_normal(3)
    return gyro, accel


def dvl_read(state: VehicleState, scene: SceneGraph, noise: SensorNoise,
             rng: np.random.Generator, max_range: float = 50.0):
    """Body-frame velocity plus altitude above the terrain beneath the vehicle.

    Returns (velocity, altitude, valid); altitude is DVL_INVALID_ALTITUDE when
    the bottom is out of range or the vehicle sits below the terrain plane.
    """
    vel = state.lin_vel + noise.dvl_sigma * rng.standard_normal(3)
    altitude_true = scene.terrain_depth - state.pose.t[2]
    valid = 0.0 <= altitude_true <= max_range
    if valid:
        altitude = altitude_true + noise.altitude_sigma * rng.standard_normal()
    else:
        rng.standard_normal()  # keep the draw count fixed for determinism
        altitude = DVL_INVALID_ALTITUDE
    return vel, float(altitude), bool(valid)


def pressure_read(depth: float, noise: SensorNoise, rng: np.random.Generator):
    """Absolute pressure (Pa) and the depth estimate inverted from it (m)."""
    if depth < 0:
        raise ValueError("depth must be >= 0")
    pressure = (ATMOSPHERIC_PRESSURE + WATER_DENSITY * GRAVITY * depth
                + noise.pressure_sigma * rng.standard_normal())
    depth_est = (pressure - ATMOSPHERIC_PRESSURE) / (WATER_DENSITY * GRAVITY)
    return float(pressure), float(depth_est)
