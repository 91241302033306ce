"""Per-pixel embedding network.

Small convolutional encoder-decoder: four stride-2 stages down to 1/16
resolution, decoded with skip connections back to output stride 4. Two 1x1
heads share the decoder feature: L2-normalized embeddings for the
clustering/contrastive objectives and unnormalized features for the
one-class scorer. GroupNorm + SiLU keep the function smooth, which the
finite-difference gradient checks depend on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .objectives import OCCHead, occ_score

OUTPUT_STRIDE = 4


@dataclass(frozen=True)
class EncoderConfig:
    """channels = (stem, stage1, ..., stageN): N stride-2 stages, N >= 2.

    The decoder always returns to output stride 4, so input dims must be
    divisible by 2^N.
    """

    input_size: tuple[int, int] = (96, 128)
    embed_dim: int = 16
    channels: tuple[int, ...] = (32, 48, 64, 96, 128)
    seed: int = 0
    normalize: bool = True

    def __post_init__(self):
        if self.embed_dim < 2:
            raise ValueError(f"embed_dim must be >= 2, got {self.embed_dim}")
        if len(self.channels) < 3 or any(c < 1 for c in self.channels):
            raise ValueError(
                "channels must be >= 3 positive ints (stem + >= 2 stages), "
                f"got {self.channels}"
            )
        h, w = self.input_size
        factor = self.downsample_factor
        if h % factor or w % factor:
            raise ValueError(
                f"input size {self.input_size} not divisible by {factor}"
            )

    @property
    def downsample_factor(self) -> int:
        return 2 ** (len(self.channels) - 1)


@dataclass
class PixelEmbeddingMap:
    """Per-pixel representations at output stride.

    grid: (H', W', D) clustering/contrastive embeddings; occ_grid: same shape,
    the one-class feature branch; H' = H/stride exactly.
    """

    grid: np.ndarray
    occ_grid: np.ndarray
    stride: int
    normalized: bool


def _block(cin: int, cout: int, stride: int = 1) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(cin, cout, 3, stride=stride, padding=1),
        nn.GroupNorm(1, cout),
        nn.SiLU(),
        nn.Conv2d(cout, cout, 3, padding=1),
        nn.GroupNorm(1, cout),
        nn.SiLU(),
    )


class TraversabilityNet(nn.Module):
    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.config = config
        chans = config.channels
        self.stem = nn.Sequential(
            nn.Conv2d(3, chans[0], 3, padding=1), nn.GroupNorm(1, chans[0]), nn.SiLU()
        )
        self.encoder = nn.ModuleList(
            _block(cin, cout, stride=2) for cin, cout in zip(chans, chans[1:])
        )
        # decode from the bottleneck (stride 2^N) back to stride 4 with a
        # lateral skip from the matching encoder stage
        self.laterals = nn.ModuleList()
        self.decoder = nn.ModuleList()
        for j in range(len(chans) - 2, 1, -1):
            self.laterals.append(nn.Conv2d(chans[j + 1], chans[j], 1))
            self.decoder.append(_block(chans[j], chans[j]))
        out_c = chans[2]
        self.embed_head = nn.Conv2d(out_c, config.embed_dim, 1)
        self.occ_head = nn.Conv2d(out_c, config.embed_dim, 1)

    def forward(self, images: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """images (B, 3, H, W) -> (embeddings, occ features), both (B, D, H/4, W/4)."""
        h, w = self.config.input_size
        if images.ndim != 4 or images.shape[1:] != (3, h, w):
            raise ValueError(
                f"expected images (B, 3, {h}, {w}), got {tuple(images.shape)}"
            )
        x = self.stem(images)
        stages = []
        for enc in self.encoder:
            x = enc(x)
            stages.append(x)
        u = stages[-1]
        for k, (lat, dec) in enumerate(zip(self.laterals, self.decoder)):
            u = F.interpolate(u, scale_factor=2, mode="bilinear", align_corners=False)
            u = dec(lat(u) + stages[-2 - k])
        z = self.embed_head(u)
        if self.config.normalize:
            z = F.normalize(z, dim=1)
        return z, self.occ_head(u)


def build_net(config: EncoderConfig, dtype: torch.dtype = torch.float32) -> TraversabilityNet:
    """Seeded construction: identical config -> identical initial weights."""
    torch.manual_seed(config.seed)
    return TraversabilityNet(config).to(dtype)


def forward_image(net: TraversabilityNet, image: np.ndarray) -> PixelEmbeddingMap:
    """Run one (H, W, 3) image in [0, 1] through the frozen network."""
    h, w = net.config.input_size
    if image.shape != (h, w, 3):
        raise ValueError(f"expected image ({h}, {w}, 3), got {image.shape}")
    dtype = next(net.parameters()).dtype
    with torch.no_grad():
        batch = torch.from_numpy(np.ascontiguousarray(image.transpose(2, 0, 1)))
        z, occ = net(batch.unsqueeze(0).to(dtype))
    return PixelEmbeddingMap(
        grid=z[0].permute(1, 2, 0).numpy(),
        occ_grid=occ[0].permute(1, 2, 0).numpy(),
        stride=OUTPUT_STRIDE,
        normalized=net.config.normalize,
    )


def upsample_bilinear(grid: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of a 2-D map (half-pixel centers, edges clamped)."""
    t = torch.from_numpy(np.asarray(grid, dtype=np.float64))[None, None]
    out = F.interpolate(t, size=(out_h, out_w), mode="bilinear", align_corners=False)
    return out[0, 0].numpy()


def score_map(emap: PixelEmbeddingMap, head: OCCHead) -> np.ndarray:
    """Full-resolution traversability scores in [0, 1].

    One-class scores are computed on the occ feature grid at output stride,
    then upsampled bilinearly; interpolating scores (not features) keeps the
    result inside [0, 1].
    """
    if emap.occ_grid.shape[-1] != head.center.shape[0]:
        raise ValueError(
            f"feature dim {emap.occ_grid.shape[-1]} does not match "
            f"center dim {head.center.shape[0]}"
        )
    with torch.no_grad():
        low = occ_score(torch.from_numpy(np.ascontiguousarray(emap.occ_grid)), head)
    hp, wp = low.shape
    return upsample_bilinear(low.numpy(), hp * emap.stride, wp * emap.stride)


def export_weights(net: TraversabilityNet) -> dict[str, np.ndarray]:
    """Named parameter and buffer arrays, copied out of torch."""
    return {
        name: tensor.detach().cpu().numpy().copy()
        for name, tensor in net.state_dict().items()
    }


def import_weights(net: TraversabilityNet, weights: dict[str, np.ndarray]) -> None:
    state = {name: torch.from_numpy(np.asarray(arr)) for name, arr in weights.items()}
    net.load_state_dict(state)
