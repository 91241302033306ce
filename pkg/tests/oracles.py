"""Independent reference implementations the tests compare against.

Everything here is deliberately written from first principles (scalar loops,
direct formulas) rather than reusing package code paths.
"""

import numpy as np


def pixel_in_polygon_brute(px: float, py: float, polygon) -> bool:
    """Scalar even-odd crossing count, boundary points inclusive."""
    inside = False
    n = len(polygon)
    for i in range(n):
        x1, y1 = polygon[i]
        x2, y2 = polygon[(i + 1) % n]
        if (y1 > py) != (y2 > py):
            if px < x1 + (py - y1) * (x2 - x1) / (y2 - y1):
                inside = not inside
        cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1)
        if (
            cross == 0.0
            and min(x1, x2) <= px <= max(x1, x2)
            and min(y1, y2) <= py <= max(y1, y2)
        ):
            return True
    return inside


def rasterize_brute(polygons, width: int, height: int) -> np.ndarray:
    """Test every pixel center of the full grid against every polygon."""
    mask = np.zeros((height, width), dtype=np.uint8)
    for poly in polygons:
        poly = np.asarray(poly, dtype=np.float64)
        if len(poly) < 3 or not np.isfinite(poly).all():
            continue
        for row in range(height):
            for col in range(width):
                if pixel_in_polygon_brute(col + 0.5, row + 0.5, poly):
                    mask[row, col] = 1
    return mask


def random_quad_scene(rng, width, height, max_quads=4):
    """Rotated rectangles scattered over (and partially off) the grid."""
    quads = []
    for _ in range(rng.integers(1, max_quads + 1)):
        center = rng.uniform([0, 0], [width, height])
        half = rng.uniform(0.5, width / 3.0, size=2)
        angle = rng.uniform(0, 2 * np.pi)
        c, s = np.cos(angle), np.sin(angle)
        rect = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], dtype=np.float64) * half
        quads.append(rect @ np.array([[c, s], [-s, c]]) + center)
    return quads


def sinkhorn_fixed_point(scores, epsilon, tol=1e-12, max_iters=100000):
    """Plain alternating normalization run to convergence (row sums 1,
    column sums B/K), no overflow guards or early exit tricks."""
    q = np.exp(np.asarray(scores, dtype=np.float64) / epsilon)
    b, k = q.shape
    for _ in range(max_iters):
        prev = q.copy()
        q = q / q.sum(axis=1, keepdims=True)
        q = q * ((b / k) / q.sum(axis=0, keepdims=True))
        if np.abs(q - prev).max() < tol:
            break
    return q / q.sum(axis=1, keepdims=True)


def finite_difference_grad(f, x, eps=1e-6):
    """Central differences of a scalar function of a numpy array."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = f(x)
        flat[i] = orig - eps
        down = f(x)
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * eps)
    return grad


def relative_grad_error(analytic, numeric) -> float:
    denom = max(
        float(np.linalg.norm(analytic)), float(np.linalg.norm(numeric)), 1e-30
    )
    return float(np.linalg.norm(analytic - numeric)) / denom


def corridor_mask_oracle(
    fx: float,
    fy: float,
    cx: float,
    cy: float,
    width: int,
    height: int,
    cam_height: float,
    pitch_down_deg: float,
    x_max: float,
    half_width: float,
    step: float = 0.004,
    z_near: float = 0.1,
) -> np.ndarray:
    """Mark every pixel hit by a dense grid of ground points from the
    rectangle x in [0, x_max], y in [-half_width, half_width], z = 0, seen by
    a camera at (0, 0, cam_height) looking along +x pitched down.
    """
    th = np.deg2rad(pitch_down_deg)
    # camera axes expressed in the world frame
    right = np.array([0.0, -1.0, 0.0])
    down = np.array([-np.sin(th), 0.0, -np.cos(th)])
    forward = np.array([np.cos(th), 0.0, -np.sin(th)])

    xs = np.arange(0.0, x_max + step / 2, step)
    ys = np.arange(-half_width, half_width + step / 2, step)
    gx, gy = np.meshgrid(xs, ys)
    d = np.stack([gx.ravel(), gy.ravel(), np.full(gx.size, -cam_height)], axis=1)
    z = d @ forward
    keep = z > z_near
    u = cx + fx * (d[keep] @ right) / z[keep]
    v = cy + fy * (d[keep] @ down) / z[keep]
    cols = np.floor(u).astype(int)
    rows = np.floor(v).astype(int)
    ok = (cols >= 0) & (cols < width) & (rows >= 0) & (rows < height)
    mask = np.zeros((height, width), dtype=np.uint8)
    mask[rows[ok], cols[ok]] = 1
    return mask


def raycast_class_oracle(
    fx: float,
    fy: float,
    cx: float,
    cy: float,
    width: int,
    height: int,
    cam_height: float,
    pitch_down_deg: float,
    base_xy: tuple[float, float],
    base_yaw: float,
    layout: np.ndarray,
    extent: float,
    cell: float,
    max_range: float,
) -> np.ndarray:
    """Per-pixel ground classification by explicit ray-plane intersection.

    Returns codes: 1 traversable hit, 0 blocked hit, 2 no usable hit
    (sky, beyond max_range, outside the world square). Camera axes and the
    yaw rotation are written out directly rather than composed from
    transform objects.
    """
    th = np.deg2rad(pitch_down_deg)
    right = np.array([0.0, -1.0, 0.0])
    down = np.array([-np.sin(th), 0.0, -np.cos(th)])
    forward = np.array([np.cos(th), 0.0, -np.sin(th)])
    cy_, sy_ = np.cos(base_yaw), np.sin(base_yaw)

    def yaw_rot(v):
        return np.array(
            [cy_ * v[0] - sy_ * v[1], sy_ * v[0] + cy_ * v[1], v[2]]
        )

    right, down, forward = yaw_rot(right), yaw_rot(down), yaw_rot(forward)
    origin = np.array([base_xy[0], base_xy[1], cam_height])

    out = np.full((height, width), 2, dtype=np.uint8)
    for r in range(height):
        for c in range(width):
            d = (
                (c + 0.5 - cx) / fx * right
                + (r + 0.5 - cy) / fy * down
                + forward
            )
            if d[2] >= -1e-12:
                continue
            t = -origin[2] / d[2]
            if t * np.linalg.norm(d) > max_range:
                continue
            px, py = origin[0] + t * d[0], origin[1] + t * d[1]
            if not (-extent <= px < extent and -extent <= py < extent):
                continue
            i = int(np.floor((px + extent) / cell))
            j = int(np.floor((py + extent) / cell))
            out[r, c] = 1 if layout[i, j] else 0
    return out
