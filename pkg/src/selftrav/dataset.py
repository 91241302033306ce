"""Dataset layout IO.

Layout per dataset root:
    images/<frame_id>.png   8-bit RGB
    poses.csv               frame_id,timestamp,tx,ty,tz,qx,qy,qz,qw (world-from-base)
    calib.json              fx,fy,cx,cy,width,height, base_from_camera{tx..qw}
    labels/<frame_id>.png   8-bit gray: 0 unlabeled, 128 positive, 255 ignore
    labels/manifest.json    label-run parameters + per-frame status
    gt/<frame_id>.png       same gray coding, ground truth (synthetic worlds)
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError
from .geometry.camera import CameraRig
from .geometry.raster import IGNORE, POSITIVE, UNLABELED
from .geometry.transforms import RigidTransform, VehiclePose

_MASK_TO_PNG = {UNLABELED: 0, POSITIVE: 128, IGNORE: 255}
_PNG_TO_MASK = {v: k for k, v in _MASK_TO_PNG.items()}


def read_calib(path) -> CameraRig:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"calibration file not found: {path}")
    try:
        raw = json.loads(path.read_text())
        ext = raw["base_from_camera"]
        base_from_camera = RigidTransform.from_quat(
            [ext["qx"], ext["qy"], ext["qz"], ext["qw"]],
            [ext["tx"], ext["ty"], ext["tz"]],
        )
        return CameraRig(
            fx=float(raw["fx"]),
            fy=float(raw["fy"]),
            cx=float(raw["cx"]),
            cy=float(raw["cy"]),
            width=int(raw["width"]),
            height=int(raw["height"]),
            base_from_camera=base_from_camera,
        )
    except (KeyError, ValueError, TypeError, json.JSONDecodeError) as e:
        raise DataError(f"bad calibration file {path}: {e}") from e


def write_calib(rig: CameraRig, path) -> None:
    q = rig.base_from_camera.as_quat()
    t = rig.base_from_camera.translation
    payload = {
        "fx": rig.fx,
        "fy": rig.fy,
        "cx": rig.cx,
        "cy": rig.cy,
        "width": rig.width,
        "height": rig.height,
        "base_from_camera": {
            "tx": t[0], "ty": t[1], "tz": t[2],
            "qx": q[0], "qy": q[1], "qz": q[2], "qw": q[3],
        },
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


POSE_FIELDS = ["frame_id", "timestamp", "tx", "ty", "tz", "qx", "qy", "qz", "qw"]


def read_poses(path) -> tuple[list[str], list[VehiclePose]]:
    """Read the pose log; returns (frame_ids, poses) sorted as stored."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"pose file not found: {path}")
    frame_ids: list[str] = []
    poses: list[VehiclePose] = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != POSE_FIELDS:
            raise DataError(
                f"bad pose header in {path}: expected {POSE_FIELDS}, got {reader.fieldnames}"
            )
        for row in reader:
            try:
                pose = VehiclePose(
                    timestamp=float(row["timestamp"]),
                    world_from_base=RigidTransform.from_quat(
                        [float(row[k]) for k in ("qx", "qy", "qz", "qw")],
                        [float(row[k]) for k in ("tx", "ty", "tz")],
                    ),
                )
            except ValueError as e:
                raise DataError(f"bad pose row {row.get('frame_id')} in {path}: {e}") from e
            frame_ids.append(row["frame_id"])
            poses.append(pose)
    if len(poses) < 2:
        raise DataError(f"pose file {path} has {len(poses)} rows; need >= 2")
    times = [p.timestamp for p in poses]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise DataError(f"pose timestamps in {path} are not strictly increasing")
    return frame_ids, poses


def write_poses(path, frame_ids, poses) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(POSE_FIELDS)
        for fid, pose in zip(frame_ids, poses):
            t = pose.world_from_base.translation
            q = pose.world_from_base.as_quat()
            writer.writerow(
                [fid, repr(pose.timestamp)]
                + [repr(float(v)) for v in (*t, *q)]
            )


def save_mask(mask: np.ndarray, path) -> None:
    """Write a {0, 1, 255} label grid as the {0, 128, 255} gray PNG."""
    out = np.zeros(mask.shape, dtype=np.uint8)
    out[mask == POSITIVE] = 128
    out[mask == IGNORE] = 255
    Image.fromarray(out, mode="L").save(path, format="PNG")


def load_mask(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"mask file not found: {path}")
    raw = np.asarray(Image.open(path).convert("L"))
    bad = ~np.isin(raw, list(_PNG_TO_MASK))
    if bad.any():
        raise DataError(
            f"mask {path} has non-code pixel values, e.g. {raw[bad].flat[0]}"
        )
    mask = np.zeros(raw.shape, dtype=np.uint8)
    mask[raw == 128] = POSITIVE
    mask[raw == 255] = IGNORE
    return mask


def save_image(image: np.ndarray, path) -> None:
    """Write an (H, W, 3) float image in [0, 1] as 8-bit RGB PNG."""
    arr = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def load_image(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"image file not found: {path}")
    return np.asarray(Image.open(path).convert("RGB"), dtype=np.float32) / 255.0


def save_scores(scores: np.ndarray, path) -> None:
    """Write per-pixel scores in [0, 1] as 8-bit grayscale (value = score*255)."""
    arr = np.clip(np.rint(scores * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(path, format="PNG")


def load_scores(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"score file not found: {path}")
    return np.asarray(Image.open(path).convert("L"), dtype=np.float64) / 255.0


def list_frames(root) -> list[str]:
    """Frame ids present under images/, sorted."""
    img_dir = Path(root) / "images"
    if not img_dir.is_dir():
        raise DataError(f"no images/ directory under {root}")
    return sorted(p.stem for p in img_dir.glob("*.png"))


def content_digest(paths) -> str:
    """Tree-style digest: sha1 over sorted (relative name, file sha1) pairs."""
    entries = []
    for path in paths:
        path = Path(path)
        if path.is_dir():
            files = sorted(p for p in path.rglob("*") if p.is_file())
        elif path.is_file():
            files = [path]
        else:
            continue
        for f in files:
            entries.append((str(f), hashlib.sha1(f.read_bytes()).hexdigest()))
    tree = hashlib.sha1()
    for name, digest in sorted(entries):
        tree.update(name.encode())
        tree.update(digest.encode())
    return tree.hexdigest()
