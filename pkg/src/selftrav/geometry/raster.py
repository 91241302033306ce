"""Polygon rasterization onto the label grid.

Label codes: 0 = unlabeled, 1 = positive, 255 = ignore. A pixel is positive
iff its center (col + 0.5, row + 0.5) lies inside or on the boundary of the
union of the polygons (even-odd rule, edge-on-boundary inclusive).
"""

from __future__ import annotations

import numpy as np

UNLABELED = 0
POSITIVE = 1
IGNORE = 255
LABEL_CODES = (UNLABELED, POSITIVE, IGNORE)


def points_in_polygon(points: np.ndarray, polygon: np.ndarray) -> np.ndarray:
    """Inclusive point-in-polygon test for points (M, 2) against (N, 2) vertices."""
    px, py = points[:, 0], points[:, 1]
    inside = np.zeros(len(points), dtype=bool)
    boundary = np.zeros(len(points), dtype=bool)
    n = len(polygon)
    for i in range(n):
        x1, y1 = polygon[i]
        x2, y2 = polygon[(i + 1) % n]
        crosses = (y1 > py) != (y2 > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_at = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (px < x_at)
        cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
        boundary |= (
            (cross == 0.0)
            & (px >= min(x1, x2))
            & (px <= max(x1, x2))
            & (py >= min(y1, y2))
            & (py <= max(y1, y2))
        )
    return inside | boundary


def rasterize_polygons(polygons, width: int, height: int) -> np.ndarray:
    """Paint the union of pixel-space polygons; returns uint8 (height, width)."""
    mask = np.zeros((height, width), dtype=np.uint8)
    for poly in polygons:
        poly = np.asarray(poly, dtype=np.float64)
        if len(poly) < 3 or not np.isfinite(poly).all():
            continue
        # pixel centers sit at integer + 0.5; restrict to the bounding box
        j0 = max(0, int(np.floor(poly[:, 0].min() - 0.5)))
        j1 = min(width - 1, int(np.ceil(poly[:, 0].max() - 0.5)))
        i0 = max(0, int(np.floor(poly[:, 1].min() - 0.5)))
        i1 = min(height - 1, int(np.ceil(poly[:, 1].max() - 0.5)))
        if j1 < j0 or i1 < i0:
            continue
        jj, ii = np.meshgrid(np.arange(j0, j1 + 1), np.arange(i0, i1 + 1))
        centers = np.stack([jj.ravel() + 0.5, ii.ravel() + 0.5], axis=1)
        hit = points_in_polygon(centers, poly).reshape(ii.shape)
        mask[i0 : i1 + 1, j0 : j1 + 1] |= hit.astype(np.uint8)
    return mask


def rasterize_quads(quads, width: int, height: int) -> np.ndarray:
    """Rasterize 4-vertex pixel polygons into a {0, 1} label grid."""
    for q in quads:
        if np.asarray(q).shape != (4, 2):
            raise ValueError(f"quads must have shape (4, 2), got {np.asarray(q).shape}")
    return rasterize_polygons(quads, width, height)
