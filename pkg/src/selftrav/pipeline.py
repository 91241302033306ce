"""Training orchestration.

Composes the three objectives over two augmented views per image:
L = L_occ + lambda_clu * L_clu + lambda_con * L_con, momentum SGD with
cosine lr decay. All per-batch randomness (augmentation draws, pixel
sampling) derives from SeedSequence((seed, 11, epoch, batch)), so a
resumed run replays the exact stream an uninterrupted run would have used.

The one-class center is the mean occ feature over positive cells under
the freshly initialized network, then frozen (optimizing it jointly would
collapse the objective). Prototypes stay frozen during epoch 0 so early
Sinkhorn targets stabilize before the bank starts moving.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import pickle
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import torch

from . import dataset as ds
from .augment import (
    AugmentationParams,
    apply_augmentation,
    pixel_correspondence,
    sample_augmentation,
    sample_mask_at_cells,
)
from .errors import DataError, NumericError, UsageError
from .geometry.labels import labeled_frame_ids, read_manifest
from .geometry.raster import IGNORE, POSITIVE, UNLABELED
from .model import (
    OUTPUT_STRIDE,
    EncoderConfig,
    TraversabilityNet,
    build_net,
    export_weights,
    forward_image,
    import_weights,
    score_map,
)
from .objectives import (
    OCCHead,
    PrototypeBank,
    info_nce,
    occ_loss,
    swapped_prediction_loss,
)

CHECKPOINT_FORMAT = "selftrav-checkpoint-v1"
_CHECKPOINT_KEYS = (
    "format",
    "config",
    "step",
    "counters",
    "model",
    "prototypes",
    "occ_center",
    "momentum",
    "history",
)


@dataclass(frozen=True)
class TrainConfig:
    dataset_root: str = ""
    out_dir: str = ""
    batch_size: int = 8
    epochs: int = 20
    lr: float = 0.01
    momentum: float = 0.9
    # Auxiliary weights well below 1.0: the SSL losses sit orders of magnitude
    # above the one-class term, and equal weighting drowns its gradient.
    lambda_clu: float = 0.2
    lambda_con: float = 0.2
    occ_only: bool = False
    no_clustering: bool = False
    no_contrastive: bool = False
    seed: int = 0
    precision: str = "float32"
    embed_dim: int = 16
    channels: tuple[int, ...] = (32, 48, 64, 96, 128)
    input_height: int = 96
    input_width: int = 128
    num_prototypes: int = 16
    sinkhorn_epsilon: float = 0.05
    sinkhorn_iters: int = 3
    tau_clu: float = 0.1
    tau_con: float = 0.2
    tau_occ: float = 1.0
    occ_margin: float = 1.0
    occ_unlabeled_weight: float = 0.1
    pixels_per_objective: int = 1024
    center_frames: int = 64
    checkpoint_every: int = 0  # epochs between snapshots; 0 = final only

    def __post_init__(self):
        if self.lambda_clu < 0 or self.lambda_con < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.precision not in ("float32", "float64"):
            raise ValueError(f"precision must be float32|float64, got {self.precision}")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")
        if self.pixels_per_objective < 2:
            raise ValueError("pixels_per_objective must be >= 2")
        if self.center_frames < 1:
            raise ValueError("center_frames must be >= 1")
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))

    # occ_only is the hard ablation: both auxiliary weights become zero
    @property
    def effective_lambda_clu(self) -> float:
        return 0.0 if self.occ_only or self.no_clustering else self.lambda_clu

    @property
    def effective_lambda_con(self) -> float:
        return 0.0 if self.occ_only or self.no_contrastive else self.lambda_con

    @property
    def torch_dtype(self) -> torch.dtype:
        return torch.float64 if self.precision == "float64" else torch.float32

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(
            input_size=(self.input_height, self.input_width),
            embed_dim=self.embed_dim,
            channels=self.channels,
            seed=self.seed,
        )

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        kwargs = dict(raw)
        if "channels" in kwargs:
            kwargs["channels"] = tuple(int(c) for c in kwargs["channels"])
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as e:
            raise UsageError(f"bad config: {e}") from e

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["channels"] = list(self.channels)
        return out


def _new_counters() -> dict:
    return {
        "steps": 0,
        "occ_batches": 0,
        "occ_skipped": 0,
        "clustering_batches": 0,
        "clustering_skipped": 0,
        "contrastive_batches": 0,
        "contrastive_skipped": 0,
    }


@dataclass
class TrainState:
    config: TrainConfig
    net: TraversabilityNet
    bank: PrototypeBank
    head: OCCHead
    optimizer: torch.optim.SGD
    step: int = 0
    counters: dict = field(default_factory=_new_counters)
    history: list = field(default_factory=list)


@dataclass
class _Frame:
    fid: str
    image: torch.Tensor  # (3, H, W) in model dtype
    mask: np.ndarray  # (H, W) label codes


def _named_params(net: TraversabilityNet, bank: PrototypeBank):
    return [(f"net.{n}", p) for n, p in net.named_parameters()] + [
        (f"bank.{n}", p) for n, p in bank.named_parameters()
    ]


def _load_training_frames(config: TrainConfig) -> list[_Frame]:
    root = Path(config.dataset_root)
    manifest = read_manifest(root / "labels")
    fids = labeled_frame_ids(manifest)
    if not fids:
        raise DataError(f"no labeled frames under {root / 'labels'}")
    frames = []
    for fid in fids:
        image = ds.load_image(root / "images" / f"{fid}.png")
        mask = ds.load_mask(root / "labels" / f"{fid}.png")
        tensor = torch.from_numpy(np.ascontiguousarray(image.transpose(2, 0, 1)))
        frames.append(_Frame(fid, tensor.to(config.torch_dtype), mask))
    return frames


def _identity_params(source_size: tuple[int, int]) -> AugmentationParams:
    h, w = source_size
    return AugmentationParams((0, 0, h, w), False, 1.0, 1.0, 1.0, 0)


def _estimate_center(
    net: TraversabilityNet, frames: list[_Frame], config: TrainConfig
) -> torch.Tensor:
    """Mean occ feature over positive cells, un-augmented, initial weights."""
    out_size = (config.input_height, config.input_width)
    picked = frames[:: max(1, len(frames) // config.center_frames)]
    picked = picked[: config.center_frames]
    total = None
    count = 0
    with torch.no_grad():
        for fr in picked:
            params = _identity_params(fr.mask.shape)
            view = apply_augmentation(fr.image, params, out_size)
            cells = sample_mask_at_cells(fr.mask, params, out_size, OUTPUT_STRIDE)
            _, occ = net(view.unsqueeze(0))
            flat = occ[0].permute(1, 2, 0).reshape(-1, occ.shape[1])
            pos = torch.from_numpy((cells.ravel() == POSITIVE))
            if pos.any():
                chunk = flat[pos].double().sum(dim=0)
                total = chunk if total is None else total + chunk
                count += int(pos.sum())
    if count == 0:
        raise DataError("no positive-labeled cells available to estimate the occ center")
    return (total / count).to(config.torch_dtype)


def _epoch_order(config: TrainConfig, epoch: int, n: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence((config.seed, 7, epoch)))
    return rng.permutation(n)


def _sample_rows(rng: np.random.Generator, available: int, budget: int) -> np.ndarray:
    if available <= budget:
        return np.arange(available)
    return rng.choice(available, size=budget, replace=False)


def _train_step(
    state: TrainState,
    batch_frames: list[_Frame],
    epoch: int,
    batch_idx: int,
    total_steps: int,
    out_dir: Path,
) -> dict:
    config = state.config
    ss = np.random.SeedSequence((config.seed, 11, epoch, batch_idx))
    aug_ss, pix_ss = ss.spawn(2)
    aug_seeds = aug_ss.generate_state(2 * len(batch_frames))
    rng = np.random.default_rng(pix_ss)
    out_size = (config.input_height, config.input_width)

    views, labels, pairs = [], [], []
    for i, fr in enumerate(batch_frames):
        p1 = sample_augmentation(int(aug_seeds[2 * i]), fr.mask.shape)
        p2 = sample_augmentation(int(aug_seeds[2 * i + 1]), fr.mask.shape)
        views.append(apply_augmentation(fr.image, p1, out_size))
        views.append(apply_augmentation(fr.image, p2, out_size))
        labels.append(sample_mask_at_cells(fr.mask, p1, out_size, OUTPUT_STRIDE).ravel())
        labels.append(sample_mask_at_cells(fr.mask, p2, out_size, OUTPUT_STRIDE).ravel())
        pairs.append(pixel_correspondence(p1, p2, out_size, OUTPUT_STRIDE))

    batch = torch.stack(views)
    z, occ = state.net(batch)
    n_views, d_embed = z.shape[0], z.shape[1]
    z_flat = z.permute(0, 2, 3, 1).reshape(n_views, -1, d_embed)
    occ_flat = occ.permute(0, 2, 3, 1).reshape(n_views, -1, occ.shape[1])

    budget = config.pixels_per_objective
    zero = torch.zeros((), dtype=batch.dtype)

    # one-class term: stratified sample over positive + unlabeled cells
    all_labels = np.concatenate(labels)
    pos_idx = np.flatnonzero(all_labels == POSITIVE)
    unl_idx = np.flatnonzero(all_labels == UNLABELED)
    n_pos = min(len(pos_idx), budget // 2)
    n_unl = min(len(unl_idx), budget - n_pos)
    n_pos = min(len(pos_idx), budget - n_unl)
    sel_pos = pos_idx[_sample_rows(rng, len(pos_idx), n_pos)] if n_pos else np.empty(0, int)
    sel_unl = unl_idx[_sample_rows(rng, len(unl_idx), n_unl)] if n_unl else np.empty(0, int)
    sel = np.concatenate([sel_pos, sel_unl])
    occ_term = zero
    if len(sel):
        feats = occ_flat.reshape(-1, occ_flat.shape[2])[torch.from_numpy(sel)]
        flags = torch.zeros(len(sel), dtype=torch.bool)
        flags[: len(sel_pos)] = True
        maybe = occ_loss(feats, flags, state.head)
        if maybe is None:
            state.counters["occ_skipped"] += 1
        else:
            occ_term = maybe
            state.counters["occ_batches"] += 1
    else:
        state.counters["occ_skipped"] += 1

    def paired_rows(keep_fn):
        rows1, rows2 = [], []
        for i, (idx1, idx2) in enumerate(pairs):
            keep = keep_fn(labels[2 * i][idx1], labels[2 * i + 1][idx2])
            if keep.any():
                rows1.append(z_flat[2 * i][torch.from_numpy(idx1[keep])])
                rows2.append(z_flat[2 * i + 1][torch.from_numpy(idx2[keep])])
        if not rows1:
            return None, None
        return torch.cat(rows1), torch.cat(rows2)

    clu_term = zero
    if config.effective_lambda_clu > 0:
        z1, z2 = paired_rows(lambda a, b: (a == UNLABELED) & (b == UNLABELED))
        if z1 is not None and z1.shape[0] >= 2:
            take = _sample_rows(rng, z1.shape[0], budget)
            clu_term = swapped_prediction_loss(
                z1[take],
                z2[take],
                state.bank,
                epsilon=config.sinkhorn_epsilon,
                sinkhorn_iters=config.sinkhorn_iters,
                tau=config.tau_clu,
            )
            state.counters["clustering_batches"] += 1
        else:
            state.counters["clustering_skipped"] += 1

    con_term = zero
    if config.effective_lambda_con > 0:
        c1, c2 = paired_rows(lambda a, b: (a != IGNORE) & (b != IGNORE))
        if c1 is not None and c1.shape[0] >= 2:
            take = _sample_rows(rng, c1.shape[0], budget)
            con_term = info_nce(c1[take], c2[take], tau=config.tau_con)
            state.counters["contrastive_batches"] += 1
        else:
            state.counters["contrastive_skipped"] += 1

    clu_weighted = config.effective_lambda_clu * clu_term
    con_weighted = config.effective_lambda_con * con_term
    total = occ_term + clu_weighted + con_weighted

    if not torch.isfinite(total):
        digest = hashlib.sha1(
            batch.detach().to(torch.float64).numpy().tobytes()
        ).hexdigest()[:16]
        fids = [fr.fid for fr in batch_frames]
        dump = {
            "step": state.step,
            "epoch": epoch,
            "batch": batch_idx,
            "frames": fids,
            "batch_digest": digest,
            "loss_occ": float(occ_term.detach()),
            "loss_clu": float(clu_weighted.detach()),
            "loss_con": float(con_weighted.detach()),
        }
        (out_dir / "nan_dump.json").write_text(json.dumps(dump, indent=2) + "\n")
        raise NumericError(
            f"non-finite loss at step {state.step} (epoch {epoch}, frames "
            f"{fids}, batch digest {digest}); dump in {out_dir / 'nan_dump.json'}"
        )

    lr = config.lr * 0.5 * (1.0 + math.cos(math.pi * state.step / total_steps))
    for group in state.optimizer.param_groups:
        group["lr"] = lr
    state.optimizer.zero_grad(set_to_none=True)
    total.backward()
    state.optimizer.step()
    if config.effective_lambda_clu > 0:
        state.bank.renormalize()

    state.counters["steps"] += 1
    return {
        "step": state.step + 1,
        "epoch": epoch,
        "loss": float(total.detach()),
        "loss_occ": float(occ_term.detach()),
        "loss_clu": float(clu_weighted.detach()),
        "loss_con": float(con_weighted.detach()),
        "lr": lr,
    }


def _fresh_state(config: TrainConfig, frames: list[_Frame]) -> TrainState:
    net = build_net(config.encoder_config(), config.torch_dtype)
    bank = PrototypeBank(config.num_prototypes, config.embed_dim, config.torch_dtype)
    center = _estimate_center(net, frames, config)
    head = OCCHead(
        center,
        temperature=config.tau_occ,
        unlabeled_weight=config.occ_unlabeled_weight,
        margin=config.occ_margin,
    )
    optimizer = torch.optim.SGD(
        [p for _, p in _named_params(net, bank)],
        lr=config.lr,
        momentum=config.momentum,
    )
    return TrainState(config, net, bank, head, optimizer)


def train(
    config: TrainConfig,
    resume_from=None,
    max_steps: int | None = None,
) -> TrainState:
    """Run (or continue) training; writes metrics.jsonl and checkpoints."""
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    frames = _load_training_frames(config)
    bpe = math.ceil(len(frames) / config.batch_size)
    total_steps = config.epochs * bpe

    if resume_from is not None:
        state = _restore_state(config, resume_from)
        log_mode = "a"
    else:
        state = _fresh_state(config, frames)
        log_mode = "w"

    stop = False
    with open(out / "metrics.jsonl", log_mode) as log:
        for epoch in range(state.step // bpe, config.epochs):
            order = _epoch_order(config, epoch, len(frames))
            # epoch-0 freeze stabilizes early cluster targets
            state.bank.prototypes.requires_grad_(epoch > 0)
            for bi in range(bpe):
                if epoch * bpe + bi < state.step:
                    continue
                chunk = order[bi * config.batch_size : (bi + 1) * config.batch_size]
                rec = _train_step(
                    state, [frames[j] for j in chunk], epoch, bi, total_steps, out
                )
                state.step += 1
                state.history.append(rec)
                line = dict(rec)
                line["timestamp"] = datetime.now(timezone.utc).isoformat()
                log.write(json.dumps(line) + "\n")
                log.flush()
                if max_steps is not None and state.step >= max_steps:
                    stop = True
                    break
            if stop:
                break
            if (
                config.checkpoint_every > 0
                and (epoch + 1) % config.checkpoint_every == 0
                and epoch + 1 < config.epochs
            ):
                save_checkpoint(state, out / f"checkpoint_epoch{epoch + 1:04d}.pkl")
    save_checkpoint(state, out / "checkpoint_final.pkl")
    return state


def _payload(state: TrainState) -> dict:
    momentum = {}
    for name, param in _named_params(state.net, state.bank):
        buf = state.optimizer.state.get(param, {}).get("momentum_buffer")
        if buf is not None:
            momentum[name] = buf.detach().cpu().numpy().copy()
    return {
        "format": CHECKPOINT_FORMAT,
        "config": state.config.to_dict(),
        "step": state.step,
        "counters": dict(state.counters),
        "model": export_weights(state.net),
        "prototypes": state.bank.prototypes.detach().cpu().numpy().copy(),
        "occ_center": state.head.center.detach().cpu().numpy().copy(),
        "momentum": momentum,
        "history": [dict(r) for r in state.history],
    }


def save_checkpoint(state: TrainState, path) -> None:
    with open(path, "wb") as f:
        pickle.dump(_payload(state), f, protocol=4)


def load_checkpoint(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"checkpoint not found: {path}")
    try:
        with open(path, "rb") as f:
            payload = pickle.load(f)
    except Exception as e:
        raise DataError(f"unreadable checkpoint {path}: {e}") from e
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise DataError(f"checkpoint {path}: bad or missing 'format' record")
    for key in _CHECKPOINT_KEYS:
        if key not in payload:
            raise DataError(f"checkpoint {path}: missing record {key!r}")
    return payload


def _restore_state(config: TrainConfig, path) -> TrainState:
    payload = load_checkpoint(path)
    saved, current = payload["config"], config.to_dict()
    mismatched = sorted(
        k for k in set(saved) | set(current) if saved.get(k) != current.get(k)
    )
    if mismatched:
        raise DataError(
            f"checkpoint config mismatch on fields: {', '.join(mismatched)}"
        )
    dtype = config.torch_dtype
    net = build_net(config.encoder_config(), dtype)
    import_weights(net, payload["model"])
    bank = PrototypeBank(config.num_prototypes, config.embed_dim, dtype)
    with torch.no_grad():
        bank.prototypes.copy_(torch.from_numpy(payload["prototypes"]))
    head = OCCHead(
        torch.from_numpy(payload["occ_center"]).to(dtype),
        temperature=config.tau_occ,
        unlabeled_weight=config.occ_unlabeled_weight,
        margin=config.occ_margin,
    )
    optimizer = torch.optim.SGD(
        [p for _, p in _named_params(net, bank)],
        lr=config.lr,
        momentum=config.momentum,
    )
    for name, param in _named_params(net, bank):
        if name in payload["momentum"]:
            optimizer.state[param] = {
                "momentum_buffer": torch.from_numpy(payload["momentum"][name]).clone()
            }
    # interned keys keep re-saved pickles byte-identical to fresh ones
    # (pickle memoizes strings by object identity)
    def interned(d: dict) -> dict:
        return {sys.intern(str(k)): v for k, v in d.items()}

    return TrainState(
        config,
        net,
        bank,
        head,
        optimizer,
        step=int(payload["step"]),
        counters=interned(payload["counters"]),
        history=[interned(r) for r in payload["history"]],
    )


def predict_scores(checkpoint_path, dataset_root, out_dir, frame_ids=None) -> list[str]:
    """Render per-pixel score maps for every frame of a dataset."""
    payload = load_checkpoint(checkpoint_path)
    config = TrainConfig.from_dict(payload["config"])
    net = build_net(config.encoder_config(), config.torch_dtype)
    import_weights(net, payload["model"])
    head = OCCHead(
        torch.from_numpy(payload["occ_center"]).to(config.torch_dtype),
        temperature=config.tau_occ,
        unlabeled_weight=config.occ_unlabeled_weight,
        margin=config.occ_margin,
    )
    root = Path(dataset_root)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fids = list(frame_ids) if frame_ids is not None else ds.list_frames(root)
    if not fids:
        raise DataError(f"no frames found under {root / 'images'}")
    want = (config.input_height, config.input_width, 3)
    for fid in fids:
        image = ds.load_image(root / "images" / f"{fid}.png")
        if image.shape != want:
            raise DataError(
                f"frame {fid}: image shape {image.shape} does not match "
                f"model input {want}"
            )
        emap = forward_image(net, image)
        ds.save_scores(score_map(emap, head), out / f"{fid}.png")
    return fids
