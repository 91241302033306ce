"""Ranking/classification metrics over per-pixel scores, plus report files.

Pixels carrying the ignore code are excluded everywhere. Metrics pool
pixels across frames (micro average) by default; a macro flag averages
per-frame metrics instead, skipping frames that lack one of the classes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from . import dataset as ds
from .errors import DataError, UndefinedMetricError
from .geometry.raster import IGNORE, POSITIVE


def _check_binary(truth: np.ndarray) -> None:
    if truth.size == 0:
        raise UndefinedMetricError("empty evaluation set")
    if truth.all() or not truth.any():
        raise UndefinedMetricError(
            "metric undefined: ground truth contains a single class"
        )


def auroc(scores, truth) -> float:
    """Probability a random positive outranks a random negative, ties 1/2."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    truth = np.asarray(truth).ravel().astype(bool)
    if scores.shape != truth.shape:
        raise ValueError(f"length mismatch: {scores.shape} vs {truth.shape}")
    _check_binary(truth)
    ranks = rankdata(scores, method="average")
    n_pos = int(truth.sum())
    n_neg = truth.size - n_pos
    u = ranks[truth].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass
class PRMetrics:
    best_f1: float
    precision: float
    recall: float
    threshold: float
    auprc: float
    curve: list[tuple[float, float, float]]  # (threshold, precision, recall)


def pr_metrics(scores, truth) -> PRMetrics:
    """Sweep every distinct score as a >= threshold, descending.

    Best F1 ties break toward the higher threshold; AUPRC is the step
    integral sum((R_i - R_{i-1}) * P_i) over the sweep.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    truth = np.asarray(truth).ravel().astype(bool)
    if scores.shape != truth.shape:
        raise ValueError(f"length mismatch: {scores.shape} vs {truth.shape}")
    _check_binary(truth)

    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_truth = truth[order]
    tp_cum = np.cumsum(sorted_truth)
    n_pos = int(truth.sum())

    # indices of the last occurrence of each distinct score
    last = np.nonzero(np.diff(sorted_scores, append=-np.inf) != 0.0)[0]
    thresholds = sorted_scores[last]
    tp = tp_cum[last].astype(np.float64)
    predicted = last + 1.0
    precision = tp / predicted
    recall = tp / n_pos

    f1 = np.zeros_like(precision)
    nonzero = (precision + recall) > 0
    f1[nonzero] = 2 * precision[nonzero] * recall[nonzero] / (
        precision[nonzero] + recall[nonzero]
    )
    best = int(np.argmax(f1))  # argmax takes the first (highest-threshold) tie

    prev_recall = np.concatenate([[0.0], recall[:-1]])
    auprc = float(np.sum((recall - prev_recall) * precision))

    curve = [
        (float(t), float(p), float(r))
        for t, p, r in zip(thresholds, precision, recall)
    ]
    return PRMetrics(
        best_f1=float(f1[best]),
        precision=float(precision[best]),
        recall=float(recall[best]),
        threshold=float(thresholds[best]),
        auprc=auprc,
        curve=curve,
    )


def iou_at(scores, truth, threshold: float = 0.5) -> float:
    scores = np.asarray(scores, dtype=np.float64).ravel()
    truth = np.asarray(truth).ravel().astype(bool)
    _check_binary(truth)
    pred = scores >= threshold
    inter = float(np.sum(pred & truth))
    union = float(np.sum(pred | truth))
    return inter / union if union > 0 else 0.0


@dataclass
class EvalReport:
    auroc: float
    auprc: float
    best_f1: float
    precision_at_best_f1: float
    recall_at_best_f1: float
    iou_at_0_5: float
    threshold_at_best_f1: float
    n_pixels: int
    n_positive: int
    threshold_curve: list[tuple[float, float, float]] = field(repr=False)
    roc_curve: list[tuple[float, float]] = field(repr=False)
    per_frame: dict[str, float] | None = None

    def to_dict(self) -> dict:
        out = {
            "auroc": self.auroc,
            "auprc": self.auprc,
            "best_f1": self.best_f1,
            "precision_at_best_f1": self.precision_at_best_f1,
            "recall_at_best_f1": self.recall_at_best_f1,
            "iou@0.5": self.iou_at_0_5,
            "threshold_at_best_f1": self.threshold_at_best_f1,
            "n_pixels": self.n_pixels,
            "n_positive": self.n_positive,
        }
        if self.per_frame is not None:
            out["per_frame_auroc"] = self.per_frame
        return out


def _roc_points(scores: np.ndarray, truth: np.ndarray) -> list[tuple[float, float]]:
    order = np.argsort(-scores, kind="stable")
    sorted_truth = truth[order]
    tp = np.cumsum(sorted_truth)
    fp = np.cumsum(~sorted_truth)
    last = np.nonzero(np.diff(scores[order], append=-np.inf) != 0.0)[0]
    n_pos, n_neg = tp[-1], fp[-1]
    pts = [(0.0, 0.0)]
    pts += [(float(fp[i] / n_neg), float(tp[i] / n_pos)) for i in last]
    return pts


def compute_report(scores, truth) -> EvalReport:
    """All metrics for pooled score/truth vectors (ignore pixels removed)."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    truth = np.asarray(truth).ravel().astype(bool)
    pr = pr_metrics(scores, truth)
    return EvalReport(
        auroc=auroc(scores, truth),
        auprc=pr.auprc,
        best_f1=pr.best_f1,
        precision_at_best_f1=pr.precision,
        recall_at_best_f1=pr.recall,
        iou_at_0_5=iou_at(scores, truth, 0.5),
        threshold_at_best_f1=pr.threshold,
        n_pixels=int(truth.size),
        n_positive=int(truth.sum()),
        threshold_curve=pr.curve,
        roc_curve=_roc_points(scores, truth),
    )


def load_frame_pairs(pred_dir, gt_dir) -> list[tuple[str, np.ndarray, np.ndarray]]:
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    if not gt_dir.is_dir():
        raise DataError(f"ground-truth directory not found: {gt_dir}")
    if not pred_dir.is_dir():
        raise DataError(f"prediction directory not found: {pred_dir}")
    gt_ids = {p.stem for p in gt_dir.glob("*.png")}
    pred_ids = {p.stem for p in pred_dir.glob("*.png")}
    if not gt_ids:
        raise DataError(f"no ground-truth masks under {gt_dir}")
    if gt_ids != pred_ids:
        missing = sorted(gt_ids - pred_ids)
        extra = sorted(pred_ids - gt_ids)
        raise DataError(
            f"prediction/ground-truth frame sets differ: missing {missing}, "
            f"unexpected {extra}"
        )
    pairs = []
    for fid in sorted(gt_ids):
        scores = ds.load_scores(pred_dir / f"{fid}.png")
        gt = ds.load_mask(gt_dir / f"{fid}.png")
        if scores.shape != gt.shape:
            raise DataError(
                f"frame {fid}: prediction shape {scores.shape} does not match "
                f"ground truth {gt.shape}"
            )
        pairs.append((fid, scores, gt))
    return pairs


def evaluate(pred_dir, gt_dir, macro: bool = False) -> EvalReport:
    """Score a directory of prediction maps against ground-truth masks."""
    pairs = load_frame_pairs(pred_dir, gt_dir)
    all_scores, all_truth = [], []
    per_frame = {}
    for fid, scores, gt in pairs:
        valid = gt != IGNORE
        s = scores[valid]
        t = gt[valid] == POSITIVE
        all_scores.append(s)
        all_truth.append(t)
        if macro and t.size and t.any() and not t.all():
            per_frame[fid] = auroc(s, t)
    report = compute_report(np.concatenate(all_scores), np.concatenate(all_truth))
    if macro:
        report.per_frame = per_frame
    return report


def write_report(report: EvalReport, out_dir, make_figures: bool = True) -> None:
    """report.json, an aligned text table, the threshold curve CSV, figures."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n")

    rows = [(k, v) for k, v in report.to_dict().items() if isinstance(v, (int, float))]
    width = max(len(k) for k, _ in rows)
    lines = [
        f"{k:<{width}}  {v:.6f}" if isinstance(v, float) else f"{k:<{width}}  {v}"
        for k, v in rows
    ]
    (out / "report.txt").write_text("\n".join(lines) + "\n")

    curve_lines = ["threshold,precision,recall"]
    curve_lines += [f"{t!r},{p!r},{r!r}" for t, p, r in report.threshold_curve]
    (out / "threshold_curve.csv").write_text("\n".join(curve_lines) + "\n")

    if make_figures:
        render_curve_figures(report, out)


def render_curve_figures(report: EvalReport, out_dir) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out_dir)
    fpr = [p[0] for p in report.roc_curve]
    tpr = [p[1] for p in report.roc_curve]
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.plot(fpr, tpr)
    ax.plot([0, 1], [0, 1], linestyle="--", linewidth=0.8, color="gray")
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_title(f"ROC (AUROC = {report.auroc:.4f})")
    fig.tight_layout()
    fig.savefig(out / "roc_curve.png", dpi=120)
    plt.close(fig)

    recall = [r for _, _, r in report.threshold_curve]
    precision = [p for _, p, _ in report.threshold_curve]
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.plot(recall, precision)
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_ylim(0.0, 1.05)
    ax.set_title(f"PR (AUPRC = {report.auprc:.4f})")
    fig.tight_layout()
    fig.savefig(out / "pr_curve.png", dpi=120)
    plt.close(fig)


def render_overlays(pred_dir, images_dir, out_dir, alpha: float = 0.45) -> list[str]:
    """Blend each score map onto its RGB frame (red = low, green = high)."""
    pred_dir, images_dir = Path(pred_dir), Path(images_dir)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for pred_path in sorted(pred_dir.glob("*.png")):
        fid = pred_path.stem
        image_path = images_dir / f"{fid}.png"
        if not image_path.is_file():
            raise DataError(f"overlay rendering: missing image {image_path}")
        image = ds.load_image(image_path).astype(np.float64)
        scores = ds.load_scores(pred_path)
        if scores.shape != image.shape[:2]:
            raise DataError(
                f"frame {fid}: score shape {scores.shape} does not match "
                f"image {image.shape[:2]}"
            )
        heat = np.stack([1.0 - scores, scores, np.zeros_like(scores)], axis=-1)
        blended = (1.0 - alpha) * image + alpha * heat
        ds.save_image(blended, out / f"{fid}.png")
        written.append(fid)
    return written
