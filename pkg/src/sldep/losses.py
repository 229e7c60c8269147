"""Training objectives: the style-linguistics dependency loss and classifier losses.

All losses run in float64 torch and return differentiable scalars.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F


@dataclass(frozen=True)
class LossBreakdown:
    """Composite pretraining loss and its parts (0-d float64 tensors)."""

    total: torch.Tensor
    distance: torch.Tensor
    redundancy: torch.Tensor
    weight: float


def _as_f64(x) -> torch.Tensor:
    t = x if isinstance(x, torch.Tensor) else torch.as_tensor(x)
    return t.double() if t.dtype != torch.float64 else t


def distance_loss(style: torch.Tensor, linguistics: torch.Tensor) -> torch.Tensor:
    """Mean squared Frobenius distance between the two views, averaged over time.

    Accepts (F, T) for one utterance or (B, F, T) for a batch; per utterance
    the distance is ``sum((S - L)**2) / T`` and batches are averaged.
    """
    s = _as_f64(style)
    l = _as_f64(linguistics)
    if s.shape != l.shape:
        raise ValueError(f"view shapes differ: {tuple(s.shape)} vs {tuple(l.shape)}")
    if s.dim() == 2:
        s = s.unsqueeze(0)
        l = l.unsqueeze(0)
    if s.dim() != 3:
        raise ValueError(f"expected (F, T) or (B, F, T), got {tuple(s.shape)}")
    t_len = s.shape[-1]
    per_item = ((s - l) ** 2).sum(dim=(-2, -1)) / t_len
    return per_item.mean()


def redundancy_loss(pooled: torch.Tensor) -> torch.Tensor:
    """Identity-target gram penalty on batch-stacked pooled features.

    ``pooled`` is (B, F): one time-averaged feature vector per utterance.
    Features are normalized by batch-centering and 1/sqrt(B) scaling, so the
    F x F gram of the stacked matrix is the batch covariance; the penalty is
    its squared Frobenius distance from identity.  Diagonal terms anchor each
    feature's variance at one, which blocks the scale-collapse optimum of the
    distance term; off-diagonal terms decorrelate distinct features.  The
    centering matters: without it a feature can satisfy its diagonal through
    a large mean, and the mean products then dominate the off-diagonals,
    leaving no pressure on the informative (varying) parts to decorrelate.
    """
    p = _as_f64(pooled)
    if p.dim() == 1:
        p = p.unsqueeze(0)
    if p.dim() != 2:
        raise ValueError(f"expected (B, F) pooled features, got {tuple(p.shape)}")
    m = (p - p.mean(dim=0, keepdim=True)).t() / math.sqrt(p.shape[0])  # (F, B)
    gram = m @ m.t()
    eye = torch.eye(gram.shape[0], dtype=gram.dtype)
    return ((gram - eye) ** 2).sum()


def pool_time(feat: torch.Tensor) -> torch.Tensor:
    """Mean over the trailing time axis: (..., F, T) -> (..., F)."""
    f = _as_f64(feat)
    if f.dim() < 2:
        raise ValueError(f"expected a trailing time axis, got shape {tuple(f.shape)}")
    return f.mean(dim=-1)


def ssc_loss(style: torch.Tensor, linguistics: torch.Tensor, weight: float = 0.007,
             batch_pooled: tuple[torch.Tensor, torch.Tensor] | None = None) -> LossBreakdown:
    """Dependency pretraining loss: framewise distance plus weighted redundancy.

    Args:
        style: (F, T) or (B, F, T) projected style features.
        linguistics: matching projected linguistics features.
        weight: redundancy coefficient in [0, 1].
        batch_pooled: optional (B, F) pooled feature pair; defaults to the
            time averages of the inputs.  Trainers pass this when utterances
            have ragged lengths and the batch is processed item by item.

    Returns:
        LossBreakdown with total == distance + weight * redundancy.
    """
    if not 0.0 <= weight <= 1.0:
        raise ValueError(f"weight must be in [0, 1], got {weight}")
    s = _as_f64(style)
    l = _as_f64(linguistics)
    dist = distance_loss(s, l)
    if batch_pooled is None:
        pooled_s = pool_time(s if s.dim() == 3 else s.unsqueeze(0))
        pooled_l = pool_time(l if l.dim() == 3 else l.unsqueeze(0))
    else:
        pooled_s, pooled_l = batch_pooled
    red = redundancy_loss(pooled_s) + redundancy_loss(pooled_l)
    total = dist + weight * red
    return LossBreakdown(total=total, distance=dist, redundancy=red, weight=weight)


def _check_logits_labels(logits: torch.Tensor, labels: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    z = _as_f64(logits).reshape(-1)
    y = _as_f64(labels).reshape(-1)
    if z.numel() == 0:
        raise ValueError("empty logits")
    if z.shape != y.shape:
        raise ValueError(f"logits/labels disagree: {tuple(z.shape)} vs {tuple(y.shape)}")
    if not torch.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 (spoof) or 1 (bonafide)")
    return z, y


def weighted_bce(logits: torch.Tensor, labels: torch.Tensor, pos_weight: float = 10.0) -> torch.Tensor:
    """Binary cross-entropy with an up-weighted positive (bonafide) class."""
    if pos_weight <= 0:
        raise ValueError(f"pos_weight must be positive, got {pos_weight}")
    z, y = _check_logits_labels(logits, labels)
    w = torch.tensor(float(pos_weight), dtype=torch.float64)
    return F.binary_cross_entropy_with_logits(z, y, pos_weight=w)


def focal_loss(logits: torch.Tensor, labels: torch.Tensor, gamma: float = 2.0,
               alpha: float | None = None) -> torch.Tensor:
    """Focal loss with the standard (1 - p_t)^gamma modulation.

    ``alpha=None`` applies no class weighting, so ``gamma=0`` reduces exactly
    to plain BCE.  Computed via softplus for saturation-safe log probs.
    """
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    if alpha is not None and not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    z, y = _check_logits_labels(logits, labels)
    log_p1 = -F.softplus(-z)  # log sigmoid(z)
    log_p0 = -F.softplus(z)   # log (1 - sigmoid(z))
    log_pt = torch.where(y == 1, log_p1, log_p0)
    log_1m_pt = torch.where(y == 1, log_p0, log_p1)
    modulation = torch.exp(gamma * log_1m_pt) if gamma > 0 else torch.ones_like(log_pt)
    if alpha is None:
        at = torch.ones_like(log_pt)
    else:
        at = torch.where(y == 1, torch.full_like(log_pt, alpha), torch.full_like(log_pt, 1.0 - alpha))
    return (-at * modulation * log_pt).mean()
