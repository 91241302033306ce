"""Two-view augmentation with recorded geometry.

Each view is a random resized crop + optional horizontal flip + color
jitter. The geometric parameters are kept so that output-stride pixels of
the two views can be paired through their source-image locations; those
pairs feed the clustering and contrastive objectives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

_LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class AugmentationParams:
    """One view's sampled augmentation; crop is (top, left, height, width)."""

    crop: tuple[int, int, int, int]
    hflip: bool
    brightness: float
    contrast: float
    saturation: float
    seed: int

    def __post_init__(self):
        top, left, height, width = self.crop
        if min(top, left) < 0 or min(height, width) < 1:
            raise ValueError(f"bad crop rectangle {self.crop}")
        for name in ("brightness", "contrast", "saturation"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} factor must be positive")


def sample_augmentation(
    seed: int,
    source_size: tuple[int, int],
    scale: tuple[float, float] = (0.4, 1.0),
    ratio: tuple[float, float] = (3.0 / 4.0, 4.0 / 3.0),
    flip_p: float = 0.5,
    jitter: float = 0.4,
) -> AugmentationParams:
    """Draw crop/flip/jitter parameters; fully determined by the seed."""
    rng = np.random.default_rng(seed)
    src_h, src_w = source_size
    crop = None
    for _ in range(10):
        area = src_h * src_w * rng.uniform(*scale)
        aspect = np.exp(rng.uniform(np.log(ratio[0]), np.log(ratio[1])))
        w = int(round(np.sqrt(area * aspect)))
        h = int(round(np.sqrt(area / aspect)))
        if 0 < w <= src_w and 0 < h <= src_h:
            crop = (
                int(rng.integers(0, src_h - h + 1)),
                int(rng.integers(0, src_w - w + 1)),
                h,
                w,
            )
            break
    if crop is None:
        crop = (0, 0, src_h, src_w)
    flip = bool(rng.uniform() < flip_p)
    b, c, s = 1.0 + rng.uniform(-jitter, jitter, size=3)
    return AugmentationParams(crop, flip, float(b), float(c), float(s), seed)


def apply_augmentation(
    image: torch.Tensor,
    params: AugmentationParams,
    out_size: tuple[int, int],
) -> torch.Tensor:
    """Augment one (3, H, W) image in [0, 1] to a (3, out_h, out_w) view.

    Jitter order is fixed (brightness, contrast, saturation) so a parameter
    record replays to the identical view.
    """
    top, left, ch, cw = params.crop
    if image.ndim != 3 or image.shape[0] != 3:
        raise ValueError(f"expected image (3, H, W), got {tuple(image.shape)}")
    if top + ch > image.shape[1] or left + cw > image.shape[2]:
        raise ValueError(f"crop {params.crop} outside image {tuple(image.shape)}")
    x = image[:, top : top + ch, left : left + cw].unsqueeze(0)
    x = F.interpolate(x, size=out_size, mode="bilinear", align_corners=False)[0]
    if params.hflip:
        x = torch.flip(x, dims=[2])
    x = x * params.brightness
    luma_w = torch.as_tensor(_LUMA, dtype=x.dtype).view(3, 1, 1)
    gray = (x * luma_w).sum(dim=0, keepdim=True)
    x = (x - gray.mean()) * params.contrast + gray.mean()
    gray = (x * luma_w).sum(dim=0, keepdim=True)
    x = (x - gray) * params.saturation + gray
    return x.clamp(0.0, 1.0)


def view_to_source(
    params: AugmentationParams,
    out_size: tuple[int, int],
    x_view: np.ndarray,
    y_view: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Continuous view coords (pixel centers at k + 0.5) -> source coords."""
    out_h, out_w = out_size
    top, left, ch, cw = params.crop
    x_view = np.asarray(x_view, dtype=np.float64)
    if params.hflip:
        x_view = out_w - x_view
    return (
        left + x_view * (cw / out_w),
        top + np.asarray(y_view, dtype=np.float64) * (ch / out_h),
    )


def _source_to_view(params, out_size, x_src, y_src):
    out_h, out_w = out_size
    top, left, ch, cw = params.crop
    x = (np.asarray(x_src, dtype=np.float64) - left) * (out_w / cw)
    if params.hflip:
        x = out_w - x
    return x, (np.asarray(y_src, dtype=np.float64) - top) * (out_h / ch)


def pixel_correspondence(
    params1: AugmentationParams,
    params2: AugmentationParams,
    out_size: tuple[int, int],
    stride: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Pair output-stride cells of two views of the same source frame.

    A view-1 cell pairs with the view-2 cell containing its source location,
    accepted when the two cell centers lie within half the smaller cell
    footprint (per axis) in source coordinates. Returns flattened index
    arrays (into the H/stride x W/stride grids); both empty when the crops
    do not overlap.
    """
    out_h, out_w = out_size
    hp, wp = out_h // stride, out_w // stride
    rows, cols = np.meshgrid(np.arange(hp), np.arange(wp), indexing="ij")
    xv1 = (cols.ravel() + 0.5) * stride
    yv1 = (rows.ravel() + 0.5) * stride
    xs, ys = view_to_source(params1, out_size, xv1, yv1)
    xv2, yv2 = _source_to_view(params2, out_size, xs, ys)
    c2 = np.floor(xv2 / stride).astype(int)
    r2 = np.floor(yv2 / stride).astype(int)
    ok = (c2 >= 0) & (c2 < wp) & (r2 >= 0) & (r2 < hp)
    # distance between the paired cells' source locations, per axis
    xs2, ys2 = view_to_source(
        params2, out_size, (c2 + 0.5) * stride, (r2 + 0.5) * stride
    )
    tol_x = 0.5 * stride * min(params1.crop[3], params2.crop[3]) / out_w
    tol_y = 0.5 * stride * min(params1.crop[2], params2.crop[2]) / out_h
    ok &= (np.abs(xs - xs2) <= tol_x) & (np.abs(ys - ys2) <= tol_y)
    idx1 = (rows.ravel() * wp + cols.ravel())[ok]
    idx2 = (r2 * wp + c2)[ok]
    return idx1, idx2


def sample_mask_at_cells(
    mask: np.ndarray,
    params: AugmentationParams,
    out_size: tuple[int, int],
    stride: int,
) -> np.ndarray:
    """Label for each output-stride cell: the source pixel under its center."""
    out_h, out_w = out_size
    hp, wp = out_h // stride, out_w // stride
    rows, cols = np.meshgrid(np.arange(hp), np.arange(wp), indexing="ij")
    xs, ys = view_to_source(
        params, out_size, (cols + 0.5) * stride, (rows + 0.5) * stride
    )
    px = np.clip(np.floor(xs).astype(int), 0, mask.shape[1] - 1)
    py = np.clip(np.floor(ys).astype(int), 0, mask.shape[0] - 1)
    return mask[py, px]
