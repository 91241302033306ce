"""Vehicle footprint rectangles and the quads connecting them along a sweep."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .transforms import VehiclePose

# corner order, base frame (x forward, y left):
# front-left, front-right, rear-right, rear-left
_CORNER_SIGNS = np.array(
    [[+1.0, +1.0], [+1.0, -1.0], [-1.0, -1.0], [-1.0, +1.0]]
)
FRONT_LEFT, FRONT_RIGHT, REAR_RIGHT, REAR_LEFT = range(4)


@dataclass(frozen=True)
class FootprintSpec:
    """Ground rectangle the vehicle occupies at one pose sample.

    width: lateral extent (track width, meters), length: longitudinal extent
    per sample, ground_offset: how far the footprint plane sits below the
    base origin.
    """

    width: float
    length: float = 0.0
    ground_offset: float = 0.0

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError(f"footprint width must be positive, got {self.width}")
        if self.length < 0:
            raise ValueError(f"footprint length must be >= 0, got {self.length}")


def footprint_corners(pose: VehiclePose, spec: FootprintSpec) -> np.ndarray:
    """World-frame corners (4, 3) ordered FL, FR, RR, RL."""
    corners = np.empty((4, 3))
    corners[:, 0] = _CORNER_SIGNS[:, 0] * (spec.length / 2.0)
    corners[:, 1] = _CORNER_SIGNS[:, 1] * (spec.width / 2.0)
    corners[:, 2] = -spec.ground_offset
    return pose.world_from_base.apply(corners)


def sweep_quads(footprints: list[np.ndarray]) -> list[np.ndarray]:
    """Quads covering the region swept by a footprint sequence.

    Emits every footprint rectangle plus, per consecutive pair, the four
    quads traced by its edges (front/rear/left/right); for a convex polygon
    under translation that union covers the swept area exactly, and the
    dense pose sampling keeps the rotation error negligible.
    """
    quads = [np.asarray(f, dtype=np.float64) for f in footprints]
    edges = (
        (FRONT_LEFT, FRONT_RIGHT),
        (REAR_LEFT, REAR_RIGHT),
        (FRONT_LEFT, REAR_LEFT),
        (FRONT_RIGHT, REAR_RIGHT),
    )
    for prev, cur in zip(footprints, footprints[1:]):
        for a, b in edges:
            quads.append(np.stack([prev[a], cur[a], cur[b], prev[b]]))
    return quads
