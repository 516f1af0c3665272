from .render import (
    CAMERA_IN_BODY,
    CameraParams,
    StereoFrame,
    camera_rig_pose,
    pixel_rays,
    project_point,
    raycast_scene,
    render_stereo,
)
from .scene import BACKGROUND_ID, Primitive, SceneGraph, WaterOptics
from .scenarios import SCENARIO_IDS, ScenarioSpec, build_scenario, default_spec
from .sensors import (
    ATMOSPHERIC_PRESSURE,
    DVL_INVALID_ALTITUDE,
    SensorNoise,
    dvl_read,
    imu_read,
    pressure_read,
)
