"""Soft-target BCE on interpolation factors, with deep supervision.

The per-voxel objective is the binary cross-entropy between the
network output f(x') and the per-voxel interpolation factor alpha:

    L = -alpha * log(f) - (1 - alpha) * log(1 - f)

averaged over voxels. Deep supervision sums this over every head with
halving weights (normalized so they total 1: 4 heads get 8/15, 4/15,
2/15, 1/15, finest first) against average-pooled targets, pooling by 2
once per extra head so each target matches its head's resolution.
"""

import torch
from torch.nn import functional as F

# keep log() off the float32 saturation points of sigmoid outputs
_EPS = 1e-7


def bce_alpha_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Voxel-mean soft-target BCE; pred in [0, 1] (clamped to the open
    interval internally), target in [0, 1]."""
    if pred.shape != target.shape:
        raise ValueError(f"pred shape {tuple(pred.shape)} != target {tuple(target.shape)}")
    if pred.numel() == 0:
        raise ValueError("cannot take the loss of an empty tensor")
    p_chk = pred.detach()
    if not torch.isfinite(p_chk).all():
        raise ValueError("pred must be finite")
    if float(p_chk.min()) < 0.0 or float(p_chk.max()) > 1.0:
        raise ValueError("pred must lie in [0, 1]")
    t_chk = target.detach()
    if float(t_chk.min()) < 0.0 or float(t_chk.max()) > 1.0:
        raise ValueError("target must lie in [0, 1]")
    p = pred.clamp(_EPS, 1.0 - _EPS)
    return -(target * torch.log(p) + (1.0 - target) * torch.log1p(-p)).mean()


def head_weights(n: int) -> tuple[float, ...]:
    """Halving weights over ``n`` heads, normalized to sum 1, finest first."""
    if n < 1:
        raise ValueError(f"need at least one head, got {n}")
    raw = [2.0 ** (n - 1 - i) for i in range(n)]
    total = sum(raw)
    return tuple(r / total for r in raw)


def deep_supervision_loss(preds, target: torch.Tensor) -> torch.Tensor:
    """Weighted BCE over heads; ``preds`` finest first, ``target`` at full
    resolution with shape (N, C, X, Y, Z)."""
    preds = list(preds)
    if not preds:
        raise ValueError("no predictions to supervise")
    if target.dim() != 5:
        raise ValueError(f"target must be 5D (N, C, X, Y, Z), got {target.dim()}D")
    weights = head_weights(len(preds))
    total = None
    t = target
    for i, (p, w) in enumerate(zip(preds, weights)):
        if i > 0:
            t = F.avg_pool3d(t, kernel_size=2)
        if p.shape != t.shape:
            raise ValueError(
                f"head {i} shape {tuple(p.shape)} does not match the target "
                f"downsampled to {tuple(t.shape)}")
        term = w * bce_alpha_loss(p, t)
        total = term if total is None else total + term
    return total
