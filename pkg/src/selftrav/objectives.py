"""Training objectives: one-class scoring on driven pixels, balanced
prototype clustering on unlabeled pixels, and cross-view contrastive loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn


@dataclass
class OCCHead:
    """Fixed-center one-class scorer over occ features.

    The center is estimated once (mean positive feature over the first
    epoch's batches) and frozen afterwards; optimizing it jointly would
    collapse the objective.
    """

    center: torch.Tensor
    temperature: float = 1.0
    unlabeled_weight: float = 0.1
    margin: float = 1.0

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        if not 0.0 <= self.unlabeled_weight <= 1.0:
            raise ValueError(
                f"unlabeled_weight must be in [0, 1], got {self.unlabeled_weight}"
            )
        self.center = torch.as_tensor(self.center).reshape(-1)


def occ_score(z: torch.Tensor, head: OCCHead) -> torch.Tensor:
    """exp(-||z - c||^2 / temperature) for z shaped (..., D); range (0, 1]."""
    center = head.center.to(z.dtype)
    if z.shape[-1] != center.shape[0]:
        raise ValueError(
            f"embedding dim {z.shape[-1]} does not match center dim {center.shape[0]}"
        )
    sq = (z - center).square().sum(dim=-1)
    return torch.exp(-sq / head.temperature)


def occ_loss(
    z: torch.Tensor, positive: torch.Tensor, head: OCCHead
) -> torch.Tensor | None:
    """Squared distance on positives plus a hinge pushing unlabeled pixels
    outside the margin. Returns None when the batch has no positives (the
    caller skips it; that is a data condition, not an error).
    """
    positive = positive.to(torch.bool)
    if z.ndim != 2 or positive.shape != z.shape[:1]:
        raise ValueError(f"expected z (B, D) with labels (B,), got {tuple(z.shape)}")
    if not positive.any():
        return None
    center = head.center.to(z.dtype)
    dist_sq = (z - center).square().sum(dim=1)
    loss = dist_sq[positive].mean()
    unlabeled = ~positive
    if head.unlabeled_weight > 0 and unlabeled.any():
        hinge = F.relu(head.margin - dist_sq[unlabeled].sqrt()).square().mean()
        loss = loss + head.unlabeled_weight * hinge
    return loss


def sinkhorn(scores: torch.Tensor, epsilon: float, iters: int) -> torch.Tensor:
    """Balanced soft assignments: rows sum to 1, columns approach B/K.

    Alternates row normalization (target 1) and column scaling (target B/K)
    on exp(scores/epsilon); the per-row max is subtracted first so large
    scores cannot overflow, and a final pass enforces exact row sums.
    """
    if scores.ndim != 2:
        raise ValueError(f"scores must be 2-D, got shape {tuple(scores.shape)}")
    if not torch.isfinite(scores).all():
        raise ValueError("sinkhorn scores must be finite")
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if iters < 1:
        raise ValueError(f"iters must be >= 1, got {iters}")
    b, k = scores.shape
    m = scores / epsilon
    q = torch.exp(m - m.max(dim=1, keepdim=True).values)
    for _ in range(iters):
        q = q / q.sum(dim=1, keepdim=True)
        q = q * ((b / k) / q.sum(dim=0, keepdim=True))
    return q / q.sum(dim=1, keepdim=True)


class PrototypeBank(nn.Module):
    """K learnable unit-norm prototypes the clustering branch assigns to."""

    def __init__(self, num_prototypes: int, dim: int, dtype=torch.float32):
        super().__init__()
        if num_prototypes < 2:
            raise ValueError(f"need >= 2 prototypes, got {num_prototypes}")
        weight = torch.randn(num_prototypes, dim, dtype=dtype)
        self.prototypes = nn.Parameter(F.normalize(weight, dim=1))

    @property
    def num_prototypes(self) -> int:
        return self.prototypes.shape[0]

    def similarities(self, z: torch.Tensor) -> torch.Tensor:
        return z @ self.prototypes.t()

    @torch.no_grad()
    def renormalize(self) -> None:
        """Restore unit rows after an optimizer step."""
        self.prototypes.copy_(F.normalize(self.prototypes, dim=1))


def cluster_prediction_ce(
    targets: torch.Tensor, scores: torch.Tensor, tau: float
) -> torch.Tensor:
    """Mean row-wise cross-entropy of softmax(scores/tau) against soft targets."""
    return -(targets * F.log_softmax(scores / tau, dim=1)).sum(dim=1).mean()


def swapped_prediction_loss(
    z_view1: torch.Tensor,
    z_view2: torch.Tensor,
    bank: PrototypeBank,
    epsilon: float = 0.05,
    sinkhorn_iters: int = 3,
    tau: float = 0.1,
    targets: tuple[torch.Tensor, torch.Tensor] | None = None,
) -> torch.Tensor:
    """Each view's balanced assignments supervise the other view's softmax
    predictions. Targets carry no gradient; pass `targets` explicitly to
    reuse precomputed assignments (finite-difference checks rely on this).
    """
    if z_view1.shape != z_view2.shape:
        raise ValueError(
            f"view shapes differ: {tuple(z_view1.shape)} vs {tuple(z_view2.shape)}"
        )
    if z_view1.shape[0] < 2:
        raise ValueError(f"need >= 2 paired pixels, got {z_view1.shape[0]}")
    s1 = bank.similarities(z_view1)
    s2 = bank.similarities(z_view2)
    if targets is None:
        with torch.no_grad():
            targets = (
                sinkhorn(s1, epsilon, sinkhorn_iters),
                sinkhorn(s2, epsilon, sinkhorn_iters),
            )
    q1, q2 = targets
    return 0.5 * (
        cluster_prediction_ce(q1, s2, tau) + cluster_prediction_ce(q2, s1, tau)
    )


def info_nce(z1: torch.Tensor, z2: torch.Tensor, tau: float = 0.2) -> torch.Tensor:
    """Symmetrized InfoNCE over paired rows with in-batch negatives."""
    if z1.shape != z2.shape:
        raise ValueError(f"shapes differ: {tuple(z1.shape)} vs {tuple(z2.shape)}")
    if z1.shape[0] < 2:
        raise ValueError(f"need >= 2 pairs for in-batch negatives, got {z1.shape[0]}")
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    logits = z1 @ z2.t() / tau
    labels = torch.arange(z1.shape[0], device=z1.device)
    return 0.5 * (F.cross_entropy(logits, labels) + F.cross_entropy(logits.t(), labels))
