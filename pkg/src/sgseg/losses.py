"""Training objectives.

Three supervised tasks share one total loss: multi-class segmentation
(cross-entropy), clear-boundary detection (focal loss on a binary contour
map) and blurry-boundary detection (cross-entropy against soft probability
targets). Auxiliary segmentation heads at coarser decoder scales are folded
in with per-scale weights.

The boundary losses each exist in two forms. The default form carries the
usual logarithm. ``literal_paper_form`` drops it and reduces the focal term
to ``(1 - p_t)^(gamma+1)`` and the soft term to ``p * (1 - p_hat)``; both are
kept behind a config switch for fidelity experiments.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import torch
import torch.nn.functional as F
from torch import Tensor


@dataclass
class LossWeights:
    seg: float = 1.0
    clear: float = 0.5
    blurry: float = 0.5
    aux: tuple[float, ...] = (0.5, 0.5)

    def __post_init__(self):
        self.aux = tuple(self.aux)
        if min([self.seg, self.clear, self.blurry, *self.aux], default=0.0) < 0:
            raise ValueError("loss weights must be nonnegative")


@dataclass
class LossConfig:
    gamma: float = 2.0
    literal_paper_form: bool = False
    weights: LossWeights = field(default_factory=LossWeights)
    epsilon: float = 1e-7

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError(f"focal exponent must be >= 0, got {self.gamma}")
        if not 0.0 < self.epsilon <= 1e-3:
            raise ValueError(f"epsilon must lie in (0, 1e-3], got {self.epsilon}")


def _clamped_probs(logits: Tensor, epsilon: float) -> Tensor:
    if torch.isnan(logits).any():
        raise ValueError("logits contain NaN")
    return torch.sigmoid(logits).clamp(epsilon, 1.0 - epsilon)


def focal_boundary_loss(logits: Tensor, hard_target: Tensor, cfg: LossConfig) -> Tensor:
    """Focal loss for the binary clear-boundary map.

    With p_t the probability assigned to the true class of each voxel:
    default form is ``mean(-(1 - p_t)^gamma * log(p_t))``, the literal form
    ``mean((1 - p_t)^gamma * (1 - p_t))``.
    """
    if logits.shape != hard_target.shape:
        raise ValueError(
            f"logits shape {tuple(logits.shape)} does not match target {tuple(hard_target.shape)}"
        )
    p_hat = _clamped_probs(logits, cfg.epsilon)
    target = hard_target.to(p_hat.dtype)
    p_t = target * p_hat + (1.0 - target) * (1.0 - p_hat)
    if cfg.literal_paper_form:
        return ((1.0 - p_t) ** cfg.gamma * (1.0 - p_t)).mean()
    return (-((1.0 - p_t) ** cfg.gamma) * torch.log(p_t)).mean()


def soft_boundary_loss(logits: Tensor, soft_target: Tensor, cfg: LossConfig) -> Tensor:
    """Cross-entropy against probabilistic boundary targets in [0, 1].

    Default form is soft binary cross-entropy; the literal form is
    ``mean(p * (1 - p_hat))``, linear in p_hat.
    """
    if logits.shape != soft_target.shape:
        raise ValueError(
            f"logits shape {tuple(logits.shape)} does not match target {tuple(soft_target.shape)}"
        )
    if soft_target.min() < 0 or soft_target.max() > 1:
        raise ValueError(
            f"soft targets must lie in [0, 1], got range "
            f"[{float(soft_target.min()):g}, {float(soft_target.max()):g}]"
        )
    p_hat = _clamped_probs(logits, cfg.epsilon)
    return _soft_loss_from_probs(p_hat, soft_target.to(p_hat.dtype), cfg)


def _soft_loss_from_probs(p_hat: Tensor, p: Tensor, cfg: LossConfig) -> Tensor:
    if cfg.literal_paper_form:
        return (p * (1.0 - p_hat)).mean()
    return (-(p * torch.log(p_hat) + (1.0 - p) * torch.log(1.0 - p_hat))).mean()


def segmentation_loss(seg_logits: Tensor, label: Tensor) -> Tensor:
    """Mean voxel-wise multi-class cross-entropy (log-softmax based)."""
    if seg_logits.shape[0] != label.shape[0] or seg_logits.shape[2:] != label.shape[1:]:
        raise ValueError(
            f"logits shape {tuple(seg_logits.shape)} does not match labels {tuple(label.shape)}"
        )
    num_classes = seg_logits.shape[1]
    if int(label.max()) >= num_classes:
        raise ValueError(
            f"label id {int(label.max())} out of range for {num_classes} classes"
        )
    return F.cross_entropy(seg_logits, label.long())


def downsample_label(label: Tensor, factor: int) -> Tensor:
    """Nearest-neighbor label downsampling: keep every ``factor``-th voxel."""
    if factor == 1:
        return label
    return label[:, ::factor, ::factor, ::factor]


def deep_supervision_loss(
    aux_logits: Sequence[Tensor], label: Tensor, cfg: LossConfig
) -> Tensor:
    """Weighted sum of segmentation losses at the auxiliary decoder scales."""
    weights = cfg.weights.aux
    if len(weights) < len(aux_logits):
        raise ValueError(
            f"{len(aux_logits)} auxiliary outputs but only {len(weights)} aux weights"
        )
    total = None
    for w, logits in zip(weights, aux_logits):
        if label.shape[1] % logits.shape[2] != 0:
            raise ValueError(
                f"label dims {tuple(label.shape[1:])} not divisible down to "
                f"aux resolution {tuple(logits.shape[2:])}"
            )
        factor = label.shape[1] // logits.shape[2]
        small = downsample_label(label, factor)
        if small.shape[1:] != logits.shape[2:]:
            raise ValueError(
                f"labels downsampled by {factor} give {tuple(small.shape[1:])}, "
                f"aux logits expect {tuple(logits.shape[2:])}"
            )
        term = w * segmentation_loss(logits, small)
        total = term if total is None else total + term
    if total is None:
        return torch.zeros((), dtype=torch.float32)
    return total


def total_loss(outputs, label: Tensor, targets, cfg: LossConfig):
    """Weighted sum of all objectives.

    ``outputs`` is a NetworkOutputs, ``targets`` a BoundaryTargets whose maps
    are already tensors shaped like the boundary logits. Returns the scalar
    loss tensor and a float breakdown per term for logging.
    """
    w = cfg.weights
    seg = segmentation_loss(outputs.seg_logits, label)
    clear = focal_boundary_loss(outputs.clear_boundary_logits, targets.hard, cfg)
    blurry = soft_boundary_loss(outputs.blurry_boundary_logits, targets.soft, cfg)
    aux = deep_supervision_loss(outputs.aux_seg_logits, label, cfg)
    total = w.seg * seg + w.clear * clear + w.blurry * blurry + aux
    breakdown = {
        "seg": float(seg.detach()),
        "clear": float(clear.detach()),
        "blurry": float(blurry.detach()),
        "aux": float(aux.detach()),
        "total": float(total.detach()),
    }
    return total, breakdown
