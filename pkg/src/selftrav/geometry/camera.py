"""Pinhole camera model and near-plane polygon clipping.

Camera frame: x right, y down, z forward. Image coordinates are continuous
with u in [0, width), v in [0, height); the pixel at (row i, col j) covers
the unit square with center (j + 0.5, i + 0.5).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .transforms import RigidTransform

Z_NEAR = 0.1


@dataclass(frozen=True, eq=False)
class CameraRig:
    """Pinhole intrinsics plus the base-from-camera mounting transform."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    base_from_camera: RigidTransform

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got ({self.fx}, {self.fy})")
        if not (0 <= self.cx < self.width) or not (0 <= self.cy < self.height):
            raise ValueError(
                f"principal point ({self.cx}, {self.cy}) outside image "
                f"{self.width}x{self.height}"
            )


def forward_camera_mount(height: float, pitch_down_deg: float) -> RigidTransform:
    """base_from_camera for a forward-looking camera.

    Camera sits `height` meters above the base origin, optical axis pitched
    down by `pitch_down_deg` from the base x (forward) axis; camera x maps to
    base -y (right), camera y to down.
    """
    th = np.deg2rad(pitch_down_deg)
    # columns: camera x, y, z axes expressed in the base frame
    rotation = np.array(
        [
            [0.0, -np.sin(th), np.cos(th)],
            [-1.0, 0.0, 0.0],
            [0.0, -np.cos(th), -np.sin(th)],
        ]
    )
    return RigidTransform(rotation, [0.0, 0.0, height])


def project_point(
    p_world,
    world_from_camera: RigidTransform,
    rig: CameraRig,
    z_near: float = Z_NEAR,
) -> tuple[float, float, bool]:
    """Project one world point; valid=False when at or behind the near plane.

    Points in front of the near plane project even when the pixel falls
    outside image bounds; clipping against the frame happens downstream.
    """
    p = world_from_camera.inverse().apply(np.asarray(p_world, dtype=np.float64))
    x, y, z = p
    if z <= z_near:
        return 0.0, 0.0, False
    return rig.cx + rig.fx * x / z, rig.cy + rig.fy * y / z, True


def project_points_cam(points_cam: np.ndarray, rig: CameraRig) -> np.ndarray:
    """Pinhole-project camera-frame points (N, 3) with z > 0 to pixels (N, 2)."""
    p = np.asarray(points_cam, dtype=np.float64)
    z = p[:, 2]
    return np.stack(
        [rig.cx + rig.fx * p[:, 0] / z, rig.cy + rig.fy * p[:, 1] / z], axis=1
    )


def clip_polygon_near(points_cam: np.ndarray, z_near: float = Z_NEAR) -> np.ndarray:
    """Clip a camera-frame polygon against the half-space z >= z_near.

    Sutherland-Hodgman against a single plane; returns (M, 3) with M possibly
    0 (fully behind) or greater than the input count (plane crossings insert
    vertices).
    """
    pts = np.asarray(points_cam, dtype=np.float64)
    out: list[np.ndarray] = []
    n = len(pts)
    for i in range(n):
        a, b = pts[i], pts[(i + 1) % n]
        a_in, b_in = a[2] >= z_near, b[2] >= z_near
        if a_in:
            out.append(a)
        if a_in != b_in:
            s = (z_near - a[2]) / (b[2] - a[2])
            out.append(a + s * (b - a))
    if not out:
        return np.empty((0, 3))
    return np.stack(out)
