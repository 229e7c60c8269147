"""Trainable components: view projectors, attentive pooling, fusion classifier.

Everything runs in float64 so finite-difference gradient checks hold tightly.
Convention throughout: label 1 / higher logit = bonafide.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .encoder import LayerViewSpec


@dataclass(frozen=True)
class ModelConfig:
    """Width and dropout settings for the stage-2 detector."""

    proj_dim: int = 256
    asp_hidden: int = 128
    clf_hidden: int = 256
    bottleneck_dropout: float = 0.1
    head_dropout: float = 0.1
    clf_dropout: float = 0.25

    def __post_init__(self):
        if min(self.proj_dim, self.asp_hidden, self.clf_hidden) < 1:
            raise ValueError("model dims must be positive")
        for name in ("bottleneck_dropout", "head_dropout", "clf_dropout"):
            p = getattr(self, name)
            if not 0.0 <= p < 1.0:
                raise ValueError(f"{name} must be in [0, 1), got {p}")


def as_model_tensor(x) -> torch.Tensor:
    """Convert encoder output (numpy or tensor) to float64 torch."""
    t = torch.as_tensor(getattr(x, "tensor", x))
    return t.double() if t.dtype != torch.float64 else t


class Projector(nn.Module):
    """Layer-weighted pooling plus a linear bottleneck and projection head.

    Maps (..., L, F, T) to (..., F', T).  The layer pool is softmax-weighted
    and initialized uniform; the bottleneck goes F -> F' -> F with dropout
    and the head F -> F' with its own dropout.  All maps are linear, so with
    identity-initialized weights the module reduces to a truncated layer
    average (handy for oracle checks).
    """

    def __init__(self, layer_count: int, in_dim: int, out_dim: int = 256,
                 bottleneck_dropout: float = 0.1, head_dropout: float = 0.1):
        super().__init__()
        if layer_count < 1 or in_dim < 1 or out_dim < 1:
            raise ValueError(f"bad dims: layers={layer_count}, in={in_dim}, out={out_dim}")
        self.layer_count = layer_count
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.layer_logits = nn.Parameter(torch.zeros(layer_count))
        self.down = nn.Linear(in_dim, out_dim)
        self.up = nn.Linear(out_dim, in_dim)
        self.head = nn.Linear(in_dim, out_dim)
        self.bottleneck_dropout = nn.Dropout(bottleneck_dropout)
        self.head_dropout = nn.Dropout(head_dropout)
        self.double()

    def forward(self, rep: torch.Tensor) -> torch.Tensor:
        if rep.dim() not in (3, 4):
            raise ValueError(f"expected (L, F, T) or (B, L, F, T), got {tuple(rep.shape)}")
        if rep.shape[-3] != self.layer_count or rep.shape[-2] != self.in_dim:
            raise ValueError(
                f"projector built for L={self.layer_count}, F={self.in_dim}; got {tuple(rep.shape)}")
        w = torch.softmax(self.layer_logits, dim=0)
        pooled = torch.einsum("...lft,l->...ft", rep, w)
        y = pooled.transpose(-1, -2)  # (..., T, F)
        y = self.up(self.bottleneck_dropout(self.down(y)))
        y = self.head_dropout(self.head(y))
        return y.transpose(-1, -2)


def project(rep, projector: Projector, train_mode: bool = False) -> torch.Tensor:
    """Apply a projector to an encoder stack; dropout active only in train mode."""
    x = as_model_tensor(rep)
    was_training = projector.training
    projector.train(train_mode)
    try:
        out = projector(x)
    finally:
        projector.train(was_training)
    return out


class AttentiveStatsPooling(nn.Module):
    """Attention-weighted mean and standard deviation over time.

    (..., F, T) -> (..., 2F).  A two-layer tanh score net yields softmax
    attention over frames; the variance is floored at ``eps`` before the
    square root.  Zero-initialized score weights give uniform attention,
    i.e. plain mean and population std.
    """

    def __init__(self, in_dim: int, hidden_dim: int = 128, eps: float = 1e-8):
        super().__init__()
        self.in_dim = in_dim
        self.eps = eps
        self.pre = nn.Linear(in_dim, hidden_dim)
        self.gate = nn.Linear(hidden_dim, 1)
        self.double()

    def attention(self, x: torch.Tensor) -> torch.Tensor:
        h = torch.tanh(self.pre(x.transpose(-1, -2)))
        scores = self.gate(h).squeeze(-1)  # (..., T)
        return torch.softmax(scores, dim=-1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-2] != self.in_dim:
            raise ValueError(f"pooling built for F={self.in_dim}, got {tuple(x.shape)}")
        if x.shape[-1] < 2:
            raise ValueError(f"need at least 2 frames, got {x.shape[-1]}")
        att = self.attention(x).unsqueeze(-2)  # (..., 1, T)
        mean = (x * att).sum(dim=-1)
        var = (x * x * att).sum(dim=-1) - mean ** 2
        std = torch.sqrt(torch.clamp(var, min=self.eps))
        return torch.cat([mean, std], dim=-1)


def asp(x, pooling: AttentiveStatsPooling, train_mode: bool = False) -> torch.Tensor:
    t = as_model_tensor(x)
    was_training = pooling.training
    pooling.train(train_mode)
    try:
        out = pooling(t)
    finally:
        pooling.train(was_training)
    return out


class ViewEmbedder(nn.Module):
    """Raw-view branch: average a layer stack, pool over time, reduce width.

    Input must include the layer axis: (L, F, T) or (B, L, F, T).
    """

    def __init__(self, feat_dim: int, out_dim: int = 256, asp_hidden: int = 128):
        super().__init__()
        self.pool = AttentiveStatsPooling(feat_dim, asp_hidden)
        self.reduce = nn.Linear(2 * feat_dim, out_dim)
        self.double()

    def forward(self, stack: torch.Tensor) -> torch.Tensor:
        if stack.dim() not in (3, 4):
            raise ValueError(f"expected (L, F, T) or (B, L, F, T), got {tuple(stack.shape)}")
        x = stack.mean(dim=-3)
        return self.reduce(self.pool(x))


class FusionClassifier(nn.Module):
    """Score fused features: dependency pair interactions plus raw embeddings.

    The dependency vectors enter directly and through elementwise squared
    difference and product, so a linear readout of the fused vector can
    already express cosine-style mismatch between the two views; the ASP
    embeddings are concatenated alongside.  One hidden layer, one logit.
    """

    def __init__(self, feat_dim: int = 256, hidden_dim: int = 256, dropout: float = 0.25):
        super().__init__()
        self.feat_dim = feat_dim
        self.hidden = nn.Linear(6 * feat_dim, hidden_dim)
        self.dropout = nn.Dropout(dropout)
        self.out = nn.Linear(hidden_dim, 1)
        self.double()

    def forward(self, dep_style: torch.Tensor, dep_ling: torch.Tensor,
                emb_style: torch.Tensor, emb_ling: torch.Tensor) -> torch.Tensor:
        for name, part in (("dep_style", dep_style), ("dep_ling", dep_ling),
                           ("emb_style", emb_style), ("emb_ling", emb_ling)):
            if part.shape[-1] != self.feat_dim:
                raise ValueError(f"{name} has width {part.shape[-1]}, expected {self.feat_dim}")
        diff = (dep_style - dep_ling) ** 2
        prod = dep_style * dep_ling
        z = torch.cat([dep_style, dep_ling, diff, prod, emb_style, emb_ling], dim=-1)
        h = self.dropout(torch.relu(self.hidden(z)))
        return self.out(h).squeeze(-1)


def fuse_and_classify(dep_style, dep_ling, emb_style, emb_ling,
                      classifier: FusionClassifier, train_mode: bool = False) -> torch.Tensor:
    parts = [as_model_tensor(p) for p in (dep_style, dep_ling, emb_style, emb_ling)]
    was_training = classifier.training
    classifier.train(train_mode)
    try:
        out = classifier(*parts)
    finally:
        classifier.train(was_training)
    return out


class ProjectorPair(nn.Module):
    """Stage-1 trainable unit: one projector per layer view."""

    def __init__(self, view_spec: LayerViewSpec, feat_dim: int, cfg: ModelConfig = ModelConfig()):
        super().__init__()
        self.view_spec = view_spec
        self.feat_dim = feat_dim
        self.cfg = cfg
        self.style = Projector(view_spec.n_style, feat_dim, cfg.proj_dim,
                               cfg.bottleneck_dropout, cfg.head_dropout)
        self.linguistics = Projector(view_spec.n_linguistics, feat_dim, cfg.proj_dim,
                                     cfg.bottleneck_dropout, cfg.head_dropout)

    def forward(self, rep: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        s0, s1 = self.view_spec.style_layers
        l0, l1 = self.view_spec.linguistics_layers
        if rep.dim() == 3:
            return self.style(rep[s0:s1]), self.linguistics(rep[l0:l1])
        if rep.dim() == 4:
            return self.style(rep[:, s0:s1]), self.linguistics(rep[:, l0:l1])
        raise ValueError(f"expected (L, F, T) or (B, L, F, T), got {tuple(rep.shape)}")


class SpoofDetector(nn.Module):
    """Stage-2 model: dependency projectors, raw-view embedders, fusion head.

    ``use_dependency=False`` zeroes the dependency branch, leaving a raw
    pooled-features classifier (the no-pretraining ablation).
    """

    def __init__(self, layer_count: int, feat_dim: int, view_spec: LayerViewSpec,
                 cfg: ModelConfig = ModelConfig(), use_dependency: bool = True):
        super().__init__()
        view_spec.validate_layer_count(layer_count)
        self.layer_count = layer_count
        self.feat_dim = feat_dim
        self.view_spec = view_spec
        self.cfg = cfg
        self.use_dependency = use_dependency
        self.projectors = ProjectorPair(view_spec, feat_dim, cfg)
        self.embed_style = ViewEmbedder(feat_dim, cfg.proj_dim, cfg.asp_hidden)
        self.embed_ling = ViewEmbedder(feat_dim, cfg.proj_dim, cfg.asp_hidden)
        self.classifier = FusionClassifier(cfg.proj_dim, cfg.clf_hidden, cfg.clf_dropout)

    def forward(self, rep: torch.Tensor) -> torch.Tensor:
        if rep.dim() not in (3, 4):
            raise ValueError(f"expected (L, F, T) or (B, L, F, T), got {tuple(rep.shape)}")
        if rep.shape[-3] != self.layer_count or rep.shape[-2] != self.feat_dim:
            raise ValueError(
                f"detector built for L={self.layer_count}, F={self.feat_dim}; got {tuple(rep.shape)}")
        s0, s1 = self.view_spec.style_layers
        l0, l1 = self.view_spec.linguistics_layers
        style_stack = rep[..., s0:s1, :, :]
        ling_stack = rep[..., l0:l1, :, :]
        emb_s = self.embed_style(style_stack)
        emb_l = self.embed_ling(ling_stack)
        if self.use_dependency:
            proj_s, proj_l = self.projectors(rep)
            # time-pooled projections; the pretraining redundancy term
            # anchors their per-dimension variance, so scales are comparable
            dep_s = proj_s.mean(dim=-1)
            dep_l = proj_l.mean(dim=-1)
        else:
            dep_s = torch.zeros_like(emb_s)
            dep_l = torch.zeros_like(emb_l)
        return self.classifier(dep_s, dep_l, emb_s, emb_l)

    def freeze_projectors(self, frozen: bool = True) -> None:
        for p in self.projectors.parameters():
            p.requires_grad_(not frozen)

    def arch_dict(self) -> dict:
        """Architecture fingerprint material; enough to rebuild the module."""
        return {
            "layer_count": self.layer_count,
            "feat_dim": self.feat_dim,
            "style_layers": list(self.view_spec.style_layers),
            "linguistics_layers": list(self.view_spec.linguistics_layers),
            "proj_dim": self.cfg.proj_dim,
            "asp_hidden": self.cfg.asp_hidden,
            "clf_hidden": self.cfg.clf_hidden,
            "bottleneck_dropout": self.cfg.bottleneck_dropout,
            "head_dropout": self.cfg.head_dropout,
            "clf_dropout": self.cfg.clf_dropout,
            "use_dependency": self.use_dependency,
        }


def detector_from_arch(arch: dict) -> SpoofDetector:
    """Rebuild a detector from :meth:`SpoofDetector.arch_dict` output."""
    view = LayerViewSpec(style_layers=tuple(arch["style_layers"]),
                         linguistics_layers=tuple(arch["linguistics_layers"]))
    cfg = ModelConfig(proj_dim=arch["proj_dim"], asp_hidden=arch["asp_hidden"],
                      clf_hidden=arch["clf_hidden"],
                      bottleneck_dropout=arch["bottleneck_dropout"],
                      head_dropout=arch["head_dropout"], clf_dropout=arch["clf_dropout"])
    return SpoofDetector(arch["layer_count"], arch["feat_dim"], view, cfg,
                         use_dependency=arch.get("use_dependency", True))


def state_to_numpy(module: nn.Module) -> dict[str, np.ndarray]:
    return {k: v.detach().cpu().numpy().copy() for k, v in module.state_dict().items()}


def load_numpy_state(module: nn.Module, state: dict[str, np.ndarray]) -> None:
    tensors = {k: torch.as_tensor(v).double() if np.asarray(v).dtype.kind == "f"
               else torch.as_tensor(v) for k, v in state.items()}
    module.load_state_dict(tensors)
