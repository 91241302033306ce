"""Deterministic synthetic flat-world generator.

A world is a 2-D class grid (traversable / non-traversable texture blobs)
on the ground plane z=0. A steered trajectory wanders the traversable area
with a clearance margin; frames are rendered by per-pixel ray casting onto
the textured plane. Outputs use the dataset layout plus gt/ masks.

All randomness derives from SeedSequence((seed, domain, ...)) children, so
the layout, the texture noise, and each trajectory are independently
reproducible; the palette does not affect geometry, which is what lets the
"shifted" palette reuse identical ground truth.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import distance_transform_edt, gaussian_filter

from . import dataset as ds
from .errors import DataError
from .geometry.camera import CameraRig, forward_camera_mount
from .geometry.raster import IGNORE, POSITIVE, UNLABELED
from .geometry.transforms import RigidTransform, VehiclePose


@dataclass(frozen=True)
class Palette:
    traversable_mean: tuple[float, float, float]
    traversable_amp: float
    blocked_mean: tuple[float, float, float]
    blocked_amp: float
    sky: tuple[float, float, float]


PALETTES = {
    "default": Palette(
        traversable_mean=(0.52, 0.42, 0.30),
        traversable_amp=0.05,
        blocked_mean=(0.22, 0.38, 0.20),
        blocked_amp=0.16,
        sky=(0.62, 0.74, 0.92),
    ),
    "shifted": Palette(
        traversable_mean=(0.58, 0.56, 0.52),
        traversable_amp=0.06,
        blocked_mean=(0.40, 0.24, 0.16),
        blocked_amp=0.18,
        sky=(0.70, 0.72, 0.80),
    ),
}


@dataclass(frozen=True)
class WorldSpec:
    seed: int = 0
    frames: int = 215
    frame_dt: float = 0.2
    speed: float = 3.0
    extent: float = 40.0  # world spans [-extent, extent]^2 meters
    cell: float = 0.25
    rho: float = 0.55  # traversable area fraction
    blob_sigma_m: float = 3.5
    camera_height: float = 1.5
    pitch_down_deg: float = 20.0
    image_height: int = 96
    image_width: int = 128
    palette: str = "default"
    # Beyond ~22 m a pixel row spans multiple texture blobs at this focal
    # length, so labels and ground truth stop at the resolvable range.
    max_range: float = 22.0
    clearance_margin: float = 1.2

    def __post_init__(self):
        if self.frames < 1:
            raise ValueError(f"frames must be >= 1, got {self.frames}")
        if not 0.0 < self.rho <= 1.0:
            raise ValueError(f"rho must be in (0, 1], got {self.rho}")
        if self.palette not in PALETTES:
            raise ValueError(
                f"unknown palette {self.palette!r}, expected one of {sorted(PALETTES)}"
            )
        if self.frame_dt <= 0 or self.speed <= 0 or self.cell <= 0:
            raise ValueError("frame_dt, speed and cell must be positive")
        if self.extent <= self.clearance_margin:
            raise ValueError("extent must exceed the clearance margin")


def make_rig(spec: WorldSpec) -> CameraRig:
    focal = 0.715 * spec.image_width
    return CameraRig(
        fx=focal,
        fy=focal,
        cx=spec.image_width / 2.0,
        cy=spec.image_height / 2.0,
        width=spec.image_width,
        height=spec.image_height,
        base_from_camera=forward_camera_mount(spec.camera_height, spec.pitch_down_deg),
    )


def world_layout(spec: WorldSpec) -> np.ndarray:
    """Boolean (N, N) grid, True = traversable; fraction True equals rho
    up to one quantile bin. Index [i, j] covers x in [-extent + i*cell, ...),
    same for y with j."""
    n = int(round(2 * spec.extent / spec.cell))
    rng = np.random.default_rng(np.random.SeedSequence((spec.seed, 0)))
    noise = rng.standard_normal((n, n))
    smoothed = gaussian_filter(noise, sigma=spec.blob_sigma_m / spec.cell, mode="wrap")
    if spec.rho >= 1.0:
        return np.ones((n, n), dtype=bool)
    return smoothed <= np.quantile(smoothed, spec.rho)


def _texture_noise(spec: WorldSpec) -> np.ndarray:
    # world-anchored noise at half-cell resolution so appearance is a stable
    # property of the place, not of the frame
    n = int(round(2 * spec.extent / (spec.cell / 2.0)))
    rng = np.random.default_rng(np.random.SeedSequence((spec.seed, 2)))
    raw = rng.uniform(-1.0, 1.0, (n, n))
    return gaussian_filter(raw, sigma=1.0, mode="wrap")


def _grid_class(layout: np.ndarray, spec: WorldSpec, xy: np.ndarray) -> np.ndarray:
    idx = np.floor((xy + spec.extent) / spec.cell).astype(np.int64)
    idx = np.clip(idx, 0, layout.shape[0] - 1)
    return layout[idx[..., 0], idx[..., 1]]


def _arc_step(x, y, yaw, kappa, length):
    if abs(kappa) < 1e-9:
        return x + length * np.cos(yaw), y + length * np.sin(yaw), yaw
    yaw2 = yaw + kappa * length
    return (
        x + (np.sin(yaw2) - np.sin(yaw)) / kappa,
        y + (np.cos(yaw) - np.cos(yaw2)) / kappa,
        yaw2,
    )


class _Clearance:
    """Distance (meters) to the nearest blocked cell or world border."""

    def __init__(self, layout: np.ndarray, spec: WorldSpec):
        free = layout.copy()
        free[0, :] = free[-1, :] = free[:, 0] = free[:, -1] = False
        self.dist = distance_transform_edt(free) * spec.cell
        self.spec = spec

    def __call__(self, x: float, y: float) -> float:
        e = self.spec.extent
        if not (-e <= x < e and -e <= y < e):
            return -np.inf
        i = int((x + e) / self.spec.cell)
        j = int((y + e) / self.spec.cell)
        return float(self.dist[i, j])


def plan_trajectory(spec: WorldSpec, trajectory_key: int = 0) -> list[VehiclePose]:
    """Greedy arc steering keeping clearance_margin from blocked texture.

    Per step the curvature maximizing min-rollout-clearance (capped, with a
    pull toward a slowly re-sampled wander curvature) is taken; dead ends
    restart from another high-clearance cell, bounded retries.
    """
    layout = world_layout(spec)
    clearance = _Clearance(layout, spec)
    rng = np.random.default_rng(np.random.SeedSequence((spec.seed, 1, trajectory_key)))

    flat_order = np.argsort(clearance.dist, axis=None)[::-1]
    n = layout.shape[0]
    starts = []
    for flat in flat_order[: n * n // 4 : 97]:  # strided, well-spread candidates
        i, j = divmod(int(flat), n)
        starts.append(
            (-spec.extent + (i + 0.5) * spec.cell, -spec.extent + (j + 0.5) * spec.cell)
        )
    if not starts or clearance.dist[divmod(int(flat_order[0]), n)] < spec.clearance_margin:
        raise DataError(
            "no traversable area with enough clearance; increase rho or extent"
        )

    step_len = spec.speed * spec.frame_dt
    candidates = np.linspace(-0.45, 0.45, 19)
    sub_len = 0.3
    lookahead = max(2, int(round(4.5 / sub_len)))
    # Clearance above this adds nothing to the steering score, so the path
    # skims past obstacles instead of centering itself in open areas and the
    # camera keeps seeing blocked texture at close range.
    clearance_cap = spec.clearance_margin + 0.3

    for attempt in range(40):
        x, y = starts[(attempt + trajectory_key) % len(starts)]
        yaw = float(rng.uniform(0, 2 * np.pi))
        if clearance(x, y) < spec.clearance_margin:
            continue
        poses = []
        target_kappa = 0.0
        ok = True
        for k in range(spec.frames):
            poses.append(_pose(k * spec.frame_dt, x, y, yaw))
            if k % 12 == 0:
                target_kappa = float(rng.uniform(-0.45, 0.45))
            best_score, best_kappa = -np.inf, None
            for kappa in candidates:
                cx, cy, cyaw = x, y, yaw
                worst = np.inf
                for _ in range(lookahead):
                    cx, cy, cyaw = _arc_step(cx, cy, cyaw, kappa, sub_len)
                    worst = min(worst, clearance(cx, cy))
                    if worst < spec.clearance_margin:
                        break
                if worst < spec.clearance_margin:
                    continue
                score = min(worst, clearance_cap) - 0.6 * abs(kappa - target_kappa)
                if score > best_score:
                    best_score, best_kappa = score, kappa
            if best_kappa is None:
                ok = False
                break
            x, y, yaw = _arc_step(x, y, yaw, best_kappa, step_len)
        if ok:
            return poses
    raise DataError(
        f"could not place a {spec.frames}-frame trajectory with clearance "
        f"{spec.clearance_margin} m after 40 attempts; increase rho (got "
        f"{spec.rho}) or the world extent"
    )


def _pose(t: float, x: float, y: float, yaw: float) -> VehiclePose:
    c, s = np.cos(yaw), np.sin(yaw)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    return VehiclePose(t, RigidTransform(rot, [x, y, 0.0]))


def _pixel_rays(rig: CameraRig) -> np.ndarray:
    cols, rows = np.meshgrid(np.arange(rig.width), np.arange(rig.height))
    return np.stack(
        [
            (cols + 0.5 - rig.cx) / rig.fx,
            (rows + 0.5 - rig.cy) / rig.fy,
            np.ones((rig.height, rig.width)),
        ],
        axis=-1,
    )


def render_frame(
    spec: WorldSpec,
    rig: CameraRig,
    pose: VehiclePose,
    layout: np.ndarray,
    noise: np.ndarray,
    rays: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Ray-cast one frame. Returns (image HxWx3 float in [0,1], gt mask)."""
    palette = PALETTES[spec.palette]
    if rays is None:
        rays = _pixel_rays(rig)
    world_from_camera = pose.world_from_base @ rig.base_from_camera
    d = rays @ world_from_camera.rotation.T
    origin = world_from_camera.translation

    image = np.empty((rig.height, rig.width, 3))
    image[:] = palette.sky
    gt = np.full((rig.height, rig.width), IGNORE, dtype=np.uint8)

    down = d[..., 2] < -1e-12
    t = np.where(down, -origin[2] / np.where(down, d[..., 2], -1.0), np.inf)
    ray_len = t * np.linalg.norm(d, axis=-1)
    hit = down & (ray_len <= spec.max_range)
    pts = origin[:2] + t[..., None] * d[..., :2]
    inside = (np.abs(pts[..., 0]) < spec.extent) & (np.abs(pts[..., 1]) < spec.extent)
    hit &= inside

    trav = np.zeros_like(hit)
    trav[hit] = _grid_class(layout, spec, pts[hit])
    gt[hit & trav] = POSITIVE
    gt[hit & ~trav] = UNLABELED

    half = spec.cell / 2.0
    nidx = np.floor((pts[hit] + spec.extent) / half).astype(np.int64)
    nidx = np.clip(nidx, 0, noise.shape[0] - 1)
    nval = noise[nidx[:, 0], nidx[:, 1]]
    mean = np.where(
        trav[hit, None], palette.traversable_mean, palette.blocked_mean
    )
    amp = np.where(trav[hit], palette.traversable_amp, palette.blocked_amp)
    image[hit] = mean + (amp * nval)[:, None]
    return np.clip(image, 0.0, 1.0), gt


def generate_world(spec: WorldSpec, out_dir, trajectory_key: int = 0) -> dict:
    """Render a full dataset: calib.json, poses.csv, images/, gt/, world.json."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "gt").mkdir(parents=True, exist_ok=True)

    layout = world_layout(spec)
    noise = _texture_noise(spec)
    rig = make_rig(spec)
    poses = plan_trajectory(spec, trajectory_key)
    frame_ids = [f"{k:06d}" for k in range(len(poses))]

    ds.write_calib(rig, out / "calib.json")
    ds.write_poses(out / "poses.csv", frame_ids, poses)
    rays = _pixel_rays(rig)
    for fid, pose in zip(frame_ids, poses):
        image, gt = render_frame(spec, rig, pose, layout, noise, rays)
        ds.save_image(image, out / "images" / f"{fid}.png")
        ds.save_mask(gt, out / "gt" / f"{fid}.png")

    summary = {
        "spec": dataclasses.asdict(spec),
        "trajectory_key": trajectory_key,
        "frames": len(poses),
        "traversable_cell_fraction": float(layout.mean()),
    }
    (out / "world.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary
