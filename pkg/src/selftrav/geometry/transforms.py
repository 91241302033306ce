"""SE(3) rigid transforms, timestamped vehicle poses, and pose interpolation.

Conventions: rotations are 3x3 proper orthonormal matrices, quaternions are
unit Hamilton quaternions stored (x, y, z, w). World z is up; the vehicle
base frame has x forward, y left, z up.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation, Slerp

ORTHONORMAL_TOL = 1e-9


def _as_rotation(matrix) -> np.ndarray:
    m = np.array(matrix, dtype=np.float64)
    if m.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got shape {m.shape}")
    err = np.abs(m.T @ m - np.eye(3)).max()
    if err >= ORTHONORMAL_TOL:
        raise ValueError(f"rotation is not orthonormal: |R^T R - I|_inf = {err:.3e}")
    if np.linalg.det(m) <= 0.0:
        raise ValueError("rotation has non-positive determinant (improper rotation)")
    m.setflags(write=False)
    return m


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Proper rigid motion x_out = rotation @ x_in + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", _as_rotation(self.rotation))
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        t.setflags(write=False)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_quat(cls, quat_xyzw, translation) -> "RigidTransform":
        """Build from a unit quaternion (x, y, z, w) and a translation."""
        q = np.asarray(quat_xyzw, dtype=np.float64).reshape(4)
        norm = np.linalg.norm(q)
        if not np.isfinite(norm) or abs(norm - 1.0) > 1e-6:
            raise ValueError(f"quaternion is not unit norm: |q| = {norm}")
        return cls(Rotation.from_quat(q / norm).as_matrix(), translation)

    def as_quat(self) -> np.ndarray:
        """Rotation as a unit quaternion (x, y, z, w), canonical w >= 0."""
        q = Rotation.from_matrix(self.rotation).as_quat()
        return -q if q[3] < 0 else q

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self o other: apply `other` first, then `self`."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return self.compose(other)

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -(rt @ self.translation))

    def apply(self, points) -> np.ndarray:
        """Transform points of shape (..., 3)."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation


@dataclass(frozen=True, eq=False)
class VehiclePose:
    """World-from-base transform at a timestamp (seconds)."""

    timestamp: float
    world_from_base: RigidTransform


def _check_trajectory(trajectory) -> np.ndarray:
    if len(trajectory) < 2:
        raise ValueError(f"trajectory needs >= 2 poses, got {len(trajectory)}")
    times = np.array([p.timestamp for p in trajectory], dtype=np.float64)
    if not np.all(np.diff(times) > 0):
        raise ValueError("trajectory timestamps must be strictly increasing")
    return times


class PoseInterpolator:
    """Linear translation + quaternion slerp interpolation over a pose log."""

    def __init__(self, trajectory: list[VehiclePose]):
        self.times = _check_trajectory(trajectory)
        self.translations = np.stack(
            [p.world_from_base.translation for p in trajectory]
        )
        self._rotations = np.stack([p.world_from_base.rotation for p in trajectory])
        self._slerp = Slerp(self.times, Rotation.from_matrix(self._rotations))

    @property
    def t_start(self) -> float:
        return float(self.times[0])

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def covers(self, t0: float, t1: float) -> bool:
        return self.t_start <= t0 and t1 <= self.t_end

    def __call__(self, t: float) -> VehiclePose:
        if not (self.t_start <= t <= self.t_end):
            raise ValueError(
                f"t = {t} outside trajectory range [{self.t_start}, {self.t_end}]"
            )
        # exact endpoint/sample reproduction: bypass arithmetic entirely
        hit = np.searchsorted(self.times, t)
        if hit < len(self.times) and self.times[hit] == t:
            return VehiclePose(
                t, RigidTransform(self._rotations[hit], self.translations[hit])
            )
        i = hit - 1
        t0, t1 = self.times[i], self.times[i + 1]
        alpha = (t - t0) / (t1 - t0)
        translation = (1.0 - alpha) * self.translations[i] + alpha * self.translations[i + 1]
        rotation = self._slerp(t).as_matrix()
        return VehiclePose(t, RigidTransform(rotation, translation))


def interpolate_pose(
    trajectory: list[VehiclePose] | PoseInterpolator, t: float
) -> VehiclePose:
    """Interpolate the vehicle pose at time t within a pose log."""
    if isinstance(trajectory, PoseInterpolator):
        return trajectory(t)
    return PoseInterpolator(trajectory)(t)
