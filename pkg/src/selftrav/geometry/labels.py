"""Self-supervised traversability labels from driven trajectories.

For each camera frame, the footprint rectangles at future pose samples are
swept into quads, projected into that frame's camera, near-plane clipped,
and rasterized: pixels the vehicle subsequently drove over become positive,
everything else stays unlabeled.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .. import dataset as ds
from ..errors import DataError
from .camera import Z_NEAR, CameraRig, clip_polygon_near, project_points_cam
from .footprint import FootprintSpec, footprint_corners, sweep_quads
from .raster import rasterize_polygons
from .transforms import PoseInterpolator, VehiclePose

DEFAULT_HORIZON = 3.0
DEFAULT_STRIDE = 0.1


@dataclass(frozen=True)
class LabelParams:
    """Parameters of one label-generation run (recorded in the manifest)."""

    horizon: float = DEFAULT_HORIZON
    stride: float = DEFAULT_STRIDE
    footprint_width: float = 1.6
    footprint_length: float = 1.0
    ground_offset: float = 0.0
    z_near: float = Z_NEAR

    def digest(self) -> str:
        return hashlib.sha1(
            json.dumps(asdict(self), sort_keys=True).encode()
        ).hexdigest()

    def footprint(self) -> FootprintSpec:
        return FootprintSpec(
            width=self.footprint_width,
            length=self.footprint_length,
            ground_offset=self.ground_offset,
        )


def _sample_times(frame_time: float, horizon: float, stride: float) -> np.ndarray:
    if horizon < 0:
        raise ValueError(f"horizon must be >= 0, got {horizon}")
    if stride <= 0:
        raise ValueError(f"stride must be positive, got {stride}")
    # epsilon keeps k*stride == horizon samples despite float division
    n = int(np.floor(horizon / stride + 1e-9))
    return frame_time + stride * np.arange(n + 1)


def swept_image_polygons(
    frame_pose: VehiclePose,
    interp: PoseInterpolator,
    rig: CameraRig,
    spec: FootprintSpec,
    sample_times: np.ndarray,
    z_near: float,
) -> list[np.ndarray]:
    """Project the footprint sweep into the frame's camera; clipped pixel polygons."""
    footprints = [
        footprint_corners(interp(t), spec) for t in sample_times
    ]
    camera_from_world = (frame_pose.world_from_base @ rig.base_from_camera).inverse()
    polygons = []
    for quad in sweep_quads(footprints):
        clipped = clip_polygon_near(camera_from_world.apply(quad), z_near)
        if len(clipped) >= 3:
            polygons.append(project_points_cam(clipped, rig))
    return polygons


def generate_frame_labels(
    frame_pose_time: float,
    trajectory: list[VehiclePose],
    rig: CameraRig,
    spec: FootprintSpec,
    horizon: float = DEFAULT_HORIZON,
    stride: float = DEFAULT_STRIDE,
    z_near: float = Z_NEAR,
) -> np.ndarray:
    """Label mask {0, 1} of shape (rig.height, rig.width) for one frame."""
    interp = (
        trajectory
        if isinstance(trajectory, PoseInterpolator)
        else PoseInterpolator(trajectory)
    )
    times = _sample_times(frame_pose_time, horizon, stride)
    if not interp.covers(times[0], times[-1]):
        raise ValueError(
            f"trajectory [{interp.t_start}, {interp.t_end}] does not cover "
            f"label window [{times[0]}, {times[-1]}]"
        )
    polygons = swept_image_polygons(
        interp(frame_pose_time), interp, rig, spec, times, z_near
    )
    return rasterize_polygons(polygons, rig.width, rig.height)


def _label_one(args):
    frame_id, frame_time, poses, rig, params = args
    mask = generate_frame_labels(
        frame_time,
        poses,
        rig,
        params.footprint(),
        horizon=params.horizon,
        stride=params.stride,
        z_near=params.z_near,
    )
    return frame_id, mask


def generate_dataset_labels(
    dataset_root,
    params: LabelParams | None = None,
    out_dir=None,
    workers: int = 1,
) -> dict:
    """Label every eligible frame of a dataset; returns the manifest dict.

    A frame is eligible when the pose log covers its full label window;
    frames near the log end are skipped and recorded. Per-frame failures are
    recorded and the run continues; missing calibration or pose files abort.
    """
    params = params or LabelParams()
    root = Path(dataset_root)
    rig = ds.read_calib(root / "calib.json")
    frame_ids, poses = ds.read_poses(root / "poses.csv")
    out = Path(out_dir) if out_dir is not None else root / "labels"
    out.mkdir(parents=True, exist_ok=True)

    t_end = poses[-1].timestamp
    jobs, records = [], {}
    for fid, pose in zip(frame_ids, poses):
        window_end = _sample_times(pose.timestamp, params.horizon, params.stride)[-1]
        if window_end > t_end:
            records[fid] = {
                "frame_id": fid,
                "status": "skipped",
                "reason": f"trajectory ends at {t_end}, label window needs {window_end}",
            }
        else:
            jobs.append((fid, pose.timestamp, poses, rig, params))

    def _store(fid: str, mask: np.ndarray) -> None:
        ds.save_mask(mask, out / f"{fid}.png")
        records[fid] = {
            "frame_id": fid,
            "status": "ok",
            "positive_pixels": int((mask == 1).sum()),
        }

    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for (fid, _, _, _, _), result in zip(jobs, pool.map(_label_one, jobs)):
                _store(*result)
    else:
        for job in jobs:
            try:
                _store(*_label_one(job))
            except Exception as e:  # per-frame failure: record, keep going
                records[job[0]] = {
                    "frame_id": job[0],
                    "status": "failed",
                    "reason": str(e),
                }

    manifest = {
        "params": asdict(params),
        "params_digest": params.digest(),
        "frames": [records[fid] for fid in frame_ids],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest


def labeled_frame_ids(manifest: dict) -> list[str]:
    return [rec["frame_id"] for rec in manifest["frames"] if rec["status"] == "ok"]


def read_manifest(labels_dir) -> dict:
    path = Path(labels_dir) / "manifest.json"
    if not path.is_file():
        raise DataError(f"label manifest not found: {path} (run `labels` first)")
    return json.loads(path.read_text())
