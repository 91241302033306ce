"""Shared fixtures and builders for synthetic trajectories and camera rigs."""

import numpy as np
from scipy.spatial.transform import Rotation

from selftrav.geometry import (
    CameraRig,
    PoseInterpolator,
    RigidTransform,
    VehiclePose,
    forward_camera_mount,
)


def yaw_pose(t: float, x: float, y: float, yaw: float) -> VehiclePose:
    rotation = Rotation.from_euler("z", yaw).as_matrix()
    return VehiclePose(t, RigidTransform(rotation, [x, y, 0.0]))


def straight_trajectory(
    speed: float = 3.0, dt: float = 0.1, n: int = 40, y: float = 0.0
) -> PoseInterpolator:
    """Constant-velocity drive along +x starting at the origin."""
    poses = [yaw_pose(i * dt, i * dt * speed, y, 0.0) for i in range(n)]
    return PoseInterpolator(poses)


def wiggle_trajectory(seed: int, n: int = 40, dt: float = 0.1) -> PoseInterpolator:
    """Smooth forward drive with a random low-frequency heading wobble."""
    rng = np.random.default_rng(seed)
    amp = rng.uniform(0.1, 0.4)
    freq = rng.uniform(0.5, 1.5)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    speed = rng.uniform(2.0, 4.0)
    poses = []
    x, y = 0.0, 0.0
    for i in range(n):
        t = i * dt
        yaw = amp * np.sin(freq * t + phase)
        poses.append(yaw_pose(t, x, y, yaw))
        x += speed * dt * np.cos(yaw)
        y += speed * dt * np.sin(yaw)
    return PoseInterpolator(poses)


def make_rig(
    width: int = 128,
    height: int = 96,
    cam_height: float = 1.5,
    pitch_down_deg: float = 15.0,
    focal: float | None = None,
) -> CameraRig:
    if focal is None:
        focal = 0.715 * width
    return CameraRig(
        fx=focal,
        fy=focal,
        cx=width / 2.0,
        cy=height / 2.0,
        width=width,
        height=height,
        base_from_camera=forward_camera_mount(cam_height, pitch_down_deg),
    )
