"""Two-stage training: dependency pretraining and supervised classification.

Stage 1 fits the view projectors on bonafide speech only, minimizing the
framewise style/linguistics distance plus the weighted redundancy penalty.
Stage 2 trains the detector on spoof + bonafide data with augmentation-
doubled batches, tracking validation EER.

Determinism contract: every stochastic choice (batch order, dropout,
augmentation) is driven by seeds derived from (config seed, stage, epoch),
so identical configs reproduce runs bit-exactly and resuming from a
checkpoint at an epoch boundary matches the uninterrupted run.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np
import torch

from .audio import SilenceConfig, Waveform, load_training_waveform, make_batches
from .augment import RawBoostConfig, augment_batch
from .checkpoint import Checkpoint, config_fingerprint
from .corpus import BONAFIDE, SPOOF, SampleRecord
from .encoder import Encoder, LayerViewSpec, encode
from .losses import LossBreakdown, focal_loss, redundancy_loss, weighted_bce
from .metrics import compute_eer
from .models import (
    ModelConfig,
    ProjectorPair,
    SpoofDetector,
    detector_from_arch,
    load_numpy_state,
    state_to_numpy,
)
from .reporting import ScoreFile, ScoreRow

LOSS_CHOICES = ("weighted_bce", "focal")


@dataclass(frozen=True)
class StageConfig:
    """Optimization settings for one training stage."""

    stage: int
    batch_size: int
    epochs: int
    lr_start: float
    lr_end: float
    early_stop_patience: int = 3
    seed: int = 0
    max_audio_s: float | None = 10.0
    length_sorted: bool = True
    betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    weight_decay: float = 0.01
    # stage 1
    ssc_weight: float = 0.007
    # stage 2
    loss_choice: str = "weighted_bce"
    pos_weight: float = 10.0
    focal_gamma: float = 2.0
    focal_alpha: float | None = None
    augment: bool = True
    finetune_projectors: bool = False

    def __post_init__(self):
        if self.stage not in (1, 2):
            raise ValueError(f"stage must be 1 or 2, got {self.stage}")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError(f"batch_size/epochs must be >= 1, got {self.batch_size}/{self.epochs}")
        if self.lr_start <= 0 or self.lr_end <= 0 or self.lr_end > self.lr_start:
            raise ValueError(f"need lr_start >= lr_end > 0, got {self.lr_start}/{self.lr_end}")
        if self.early_stop_patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.early_stop_patience}")
        if self.max_audio_s is not None and self.max_audio_s <= 0:
            raise ValueError(f"max_audio_s must be positive, got {self.max_audio_s}")
        if not 0.0 <= self.ssc_weight <= 1.0:
            raise ValueError(f"ssc_weight must be in [0, 1], got {self.ssc_weight}")
        if self.loss_choice not in LOSS_CHOICES:
            raise ValueError(f"loss_choice must be one of {LOSS_CHOICES}, got {self.loss_choice!r}")
        if self.pos_weight <= 0:
            raise ValueError(f"pos_weight must be positive, got {self.pos_weight}")


def stage1_defaults(**overrides) -> StageConfig:
    """Reference pretraining settings: batch 16, 50 epochs, lr 5e-3 -> 1e-4."""
    base = dict(stage=1, batch_size=16, epochs=50, lr_start=0.005, lr_end=0.0001,
                early_stop_patience=3, ssc_weight=0.007)
    base.update(overrides)
    return StageConfig(**base)


def stage2_defaults(**overrides) -> StageConfig:
    """Reference classifier settings: batch 4 (doubled to 8 by augmentation),
    5 epochs, lr 1e-3 -> 1e-4, bonafide class weight 10."""
    base = dict(stage=2, batch_size=4, epochs=5, lr_start=0.001, lr_end=0.0001,
                early_stop_patience=3, pos_weight=10.0)
    base.update(overrides)
    return StageConfig(**base)


def lr_at(step: int, total_steps: int, cfg: StageConfig) -> float:
    """Linear learning-rate interpolation from lr_start to lr_end."""
    if total_steps <= 0:
        raise ValueError(f"total_steps must be positive, got {total_steps}")
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    frac = step / total_steps
    return cfg.lr_start + (cfg.lr_end - cfg.lr_start) * frac


class EarlyStopper:
    """Stop after ``patience`` consecutive non-improving epochs; ties don't improve."""

    def __init__(self, patience: int = 3):
        if patience < 1:
            raise ValueError(f"patience must be >= 1, got {patience}")
        self.patience = patience
        self.best = float("inf")
        self.best_epoch = -1
        self.bad_epochs = 0
        self.count = 0

    def update(self, value: float) -> str:
        epoch = self.count
        self.count += 1
        if value < self.best:
            self.best = value
            self.best_epoch = epoch
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
        return "stop" if self.bad_epochs >= self.patience else "continue"

    def state(self) -> dict:
        return {"best": self.best, "best_epoch": self.best_epoch,
                "bad_epochs": self.bad_epochs, "count": self.count}

    def load_state(self, state: dict) -> None:
        self.best = float(state["best"])
        self.best_epoch = int(state["best_epoch"])
        self.bad_epochs = int(state["bad_epochs"])
        self.count = int(state["count"])


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from hierarchical parts (base seed, stage, epoch, tag)."""
    blob = ":".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "little") >> 1


class JsonlLogger:
    """Append JSON records one per line; floats keep full repr precision."""

    def __init__(self, path: str | None):
        self.path = path
        if path:
            open(path, "w", encoding="utf-8").close()

    def write(self, record: dict) -> None:
        if self.path:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")


@dataclass
class EncodedSample:
    """A record with its frozen-encoder features and, optionally, its waveform."""

    record: SampleRecord
    rep: torch.Tensor  # (L, F, T) float64
    label01: int | None
    waveform: Waveform | None = None


def prepare_samples(records: Sequence[SampleRecord], enc: Encoder, *,
                    max_audio_s: float | None = None,
                    silence: SilenceConfig | None = None,
                    audio_root: str | None = None,
                    load_fn: Callable[[str], Waveform] | None = None,
                    keep_waveform: bool = False,
                    workers: int = 1) -> list[EncodedSample]:
    """Load, preprocess, and encode records once; the frozen-feature cache.

    Order is preserved regardless of ``workers``, so parallel loading cannot
    change results.
    """
    def build(rec: SampleRecord) -> EncodedSample:
        wave = load_training_waveform(rec, audio_root=audio_root, silence=silence,
                                      max_audio_s=max_audio_s, load_fn=load_fn)
        rep = torch.as_tensor(encode(wave, enc).tensor)
        label01 = {BONAFIDE: 1, SPOOF: 0}.get(rec.label)
        return EncodedSample(record=rec, rep=rep, label01=label01,
                             waveform=wave if keep_waveform else None)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(build, records))
    return [build(rec) for rec in records]


def ssc_over_items(pair: ProjectorPair, items: Sequence[EncodedSample],
                   weight: float) -> LossBreakdown:
    """Dependency loss over a ragged batch, one projector pass per item.

    Equals the padded-batch form when all items share a length: distances
    average over items and the redundancy penalty sees the batch-stacked
    time-pooled features of both views.
    """
    dists = []
    pooled_s = []
    pooled_l = []
    for item in items:
        s, l = pair(item.rep)
        dists.append(((s - l) ** 2).sum() / s.shape[-1])
        pooled_s.append(s.mean(dim=-1))
        pooled_l.append(l.mean(dim=-1))
    dist = torch.stack(dists).mean()
    red = redundancy_loss(torch.stack(pooled_s)) + redundancy_loss(torch.stack(pooled_l))
    total = dist + weight * red
    return LossBreakdown(total=total, distance=dist, redundancy=red, weight=weight)


def _optimizer_to_numpy(opt: torch.optim.Optimizer) -> tuple[dict[str, np.ndarray], list]:
    sd = opt.state_dict()
    arrays: dict[str, np.ndarray] = {}
    for idx, state in sd["state"].items():
        for key, val in state.items():
            arr = val.detach().cpu().numpy() if torch.is_tensor(val) else np.asarray(val)
            arrays[f"{idx}/{key}"] = arr.copy()
    return arrays, sd["param_groups"]


def _optimizer_from_numpy(opt: torch.optim.Optimizer, arrays: dict[str, np.ndarray],
                          groups: list) -> None:
    state: dict[int, dict] = {}
    for name, arr in arrays.items():
        idx_s, _, key = name.partition("/")
        state.setdefault(int(idx_s), {})[key] = torch.as_tensor(arr)
    opt.load_state_dict({"state": state, "param_groups": groups})


def _make_optimizer(params, cfg: StageConfig) -> torch.optim.Optimizer:
    return torch.optim.AdamW(params, lr=cfg.lr_start, betas=cfg.betas,
                             eps=cfg.adam_eps, weight_decay=cfg.weight_decay)


def _set_lr(opt: torch.optim.Optimizer, lr: float) -> None:
    for group in opt.param_groups:
        group["lr"] = lr


def _fingerprint_source(cfg: StageConfig, arch: dict, enc: Encoder) -> dict:
    return {
        "stage_config": asdict(cfg),
        "arch": arch,
        "encoder": {"layer_count": enc.layer_count, "feature_dim": enc.feature_dim,
                    "hop": enc.hop},
    }


def compare_configs(stored: dict, current: dict, prefix: str = "") -> list[str]:
    """Dot-path keys on which two fingerprint-source dicts disagree."""
    diverged = []
    keys = set(stored) | set(current)
    for key in sorted(keys):
        path = f"{prefix}.{key}" if prefix else str(key)
        if key not in stored or key not in current:
            diverged.append(path)
        elif isinstance(stored[key], dict) and isinstance(current[key], dict):
            diverged.extend(compare_configs(stored[key], current[key], path))
        else:
            a, b = stored[key], current[key]
            if isinstance(a, (list, tuple)) or isinstance(b, (list, tuple)):
                a = list(a) if isinstance(a, (list, tuple)) else a
                b = list(b) if isinstance(b, (list, tuple)) else b
            if a != b:
                diverged.append(path)
    return diverged


def _check_resume(ckpt: Checkpoint, fingerprint: str, source: dict, stage: int) -> None:
    if ckpt.stage != stage:
        raise ValueError(f"checkpoint is stage {ckpt.stage}, expected stage {stage}")
    if ckpt.config_fingerprint != fingerprint:
        diverged = compare_configs(ckpt.extra.get("config", {}), source)
        raise ValueError(f"checkpoint config mismatch on keys: {', '.join(diverged) or '?'}")


def pretrain_stage1(train_records: Sequence[SampleRecord],
                    val_records: Sequence[SampleRecord] | None,
                    enc: Encoder, cfg: StageConfig, *,
                    view_spec: LayerViewSpec = LayerViewSpec(),
                    model_cfg: ModelConfig = ModelConfig(),
                    silence: SilenceConfig | None = None,
                    audio_root: str | None = None,
                    load_fn: Callable[[str], Waveform] | None = None,
                    log_path: str | None = None,
                    workers: int = 1,
                    resume_from: Checkpoint | None = None,
                    stop_after_epoch: int | None = None) -> Checkpoint:
    """Fit the style/linguistics projectors on bonafide-only data.

    Returns the best-validation checkpoint (falls back to the train loss when
    no validation set is given).  Any spoof or unlabeled record is rejected.
    ``stop_after_epoch`` finishes that epoch then returns a resumable
    checkpoint; it is an operational time-slicing knob, so unlike the config
    it is not fingerprinted and resuming reproduces the uninterrupted run.
    """
    if cfg.stage != 1:
        raise ValueError(f"stage-1 trainer got a stage-{cfg.stage} config")
    if not train_records:
        raise ValueError("no training records")
    for rec in list(train_records) + list(val_records or []):
        if rec.label != BONAFIDE:
            raise ValueError(
                f"stage 1 trains on bonafide speech only; record {rec.utt_id!r} is {rec.label}")
    view_spec.validate_layer_count(enc.layer_count)

    # parameter init draws from the torch RNG, so seed it for reproducibility
    torch.manual_seed(derive_seed(cfg.seed, "stage1", "init"))
    pair = ProjectorPair(view_spec, enc.feature_dim, model_cfg)
    arch = {"feat_dim": enc.feature_dim, "style_layers": list(view_spec.style_layers),
            "linguistics_layers": list(view_spec.linguistics_layers),
            **{k: getattr(model_cfg, k) for k in ("proj_dim", "asp_hidden", "clf_hidden",
                                                  "bottleneck_dropout", "head_dropout",
                                                  "clf_dropout")}}
    source = _fingerprint_source(cfg, arch, enc)
    fingerprint = config_fingerprint(source)

    train_items = prepare_samples(train_records, enc, max_audio_s=cfg.max_audio_s,
                                  silence=silence, audio_root=audio_root, load_fn=load_fn,
                                  workers=workers)
    by_id = {it.record.utt_id: it for it in train_items}
    val_items = None
    if val_records:
        val_items = prepare_samples(val_records, enc, max_audio_s=None, silence=silence,
                                    audio_root=audio_root, load_fn=load_fn, workers=workers)

    opt = _make_optimizer(pair.parameters(), cfg)
    stopper = EarlyStopper(cfg.early_stop_patience)
    logger = JsonlLogger(log_path)
    steps_per_epoch = int(np.ceil(len(train_items) / cfg.batch_size))
    total_steps = cfg.epochs * steps_per_epoch
    global_step = 0
    start_epoch = 0
    best_params = state_to_numpy(pair)
    best_metric = float("inf")
    best_epoch = -1

    if resume_from is not None:
        _check_resume(resume_from, fingerprint, source, stage=1)
        load_numpy_state(pair, resume_from.resume_params)
        _optimizer_from_numpy(opt, resume_from.optimizer,
                              resume_from.scalars["optimizer_groups"])
        stopper.load_state(resume_from.scalars["stopper"])
        start_epoch = int(resume_from.scalars["next_epoch"])
        global_step = int(resume_from.scalars["global_step"])
        best_params = resume_from.params
        best_metric = resume_from.val_metric
        best_epoch = resume_from.epoch

    def epoch_val_loss() -> float:
        items = val_items if val_items is not None else train_items
        lut = {it.record.utt_id: it for it in items}
        pair.eval()
        total = 0.0
        n = 0
        with torch.no_grad():
            # fixed grouping: deterministic length-sorted batches, fixed seed
            for batch in make_batches([it.record for it in items], cfg.batch_size,
                                      length_sorted=True, seed=0):
                sel = [lut[r.utt_id] for r in batch]
                bd = ssc_over_items(pair, sel, cfg.ssc_weight)
                total += float(bd.total) * len(sel)
                n += len(sel)
        return total / n

    for epoch in range(start_epoch, cfg.epochs):
        torch.manual_seed(derive_seed(cfg.seed, "stage1", "torch", epoch))
        batches = make_batches(train_records, cfg.batch_size, length_sorted=cfg.length_sorted,
                               seed=derive_seed(cfg.seed, "stage1", "batches", epoch))
        pair.train()
        for batch in batches:
            items = [by_id[r.utt_id] for r in batch]
            lr = lr_at(global_step, total_steps, cfg)
            _set_lr(opt, lr)
            opt.zero_grad()
            bd = ssc_over_items(pair, items, cfg.ssc_weight)
            bd.total.backward()
            opt.step()
            logger.write({"stage": 1, "epoch": epoch, "step": global_step, "lr": lr,
                          "n_items": len(items), "loss": float(bd.total.detach()),
                          "distance": float(bd.distance.detach()),
                          "redundancy": float(bd.redundancy.detach())})
            global_step += 1
        val_loss = epoch_val_loss()
        decision = stopper.update(val_loss)
        if val_loss < best_metric:
            best_metric = val_loss
            best_epoch = epoch
            best_params = state_to_numpy(pair)
        logger.write({"stage": 1, "epoch": epoch, "val_loss": val_loss,
                      "best_epoch": best_epoch, "decision": decision})
        if decision == "stop":
            break
        if stop_after_epoch is not None and epoch >= stop_after_epoch:
            break

    opt_arrays, opt_groups = _optimizer_to_numpy(opt)
    return Checkpoint(
        stage=1,
        params=best_params,
        epoch=best_epoch,
        val_metric=best_metric,
        config_fingerprint=fingerprint,
        rng_state={"seed": cfg.seed},
        optimizer=opt_arrays,
        resume_params=state_to_numpy(pair),
        scalars={"optimizer_groups": opt_groups, "stopper": stopper.state(),
                 "next_epoch": min(stopper.count, cfg.epochs), "global_step": global_step,
                 "total_steps": total_steps},
        extra={"kind": "projector_pair", "arch": arch, "config": source},
    )


def train_stage2(train_records: Sequence[SampleRecord],
                 val_records: Sequence[SampleRecord],
                 enc: Encoder, stage1: Checkpoint | None, cfg: StageConfig, *,
                 rawboost: RawBoostConfig | None = None,
                 view_spec: LayerViewSpec = LayerViewSpec(),
                 model_cfg: ModelConfig = ModelConfig(),
                 silence: SilenceConfig | None = None,
                 audio_root: str | None = None,
                 load_fn: Callable[[str], Waveform] | None = None,
                 log_path: str | None = None,
                 workers: int = 1,
                 use_dependency: bool = True,
                 resume_from: Checkpoint | None = None,
                 stop_after_epoch: int | None = None) -> Checkpoint:
    """Train the spoof detector; returns the best-validation-EER checkpoint.

    ``stage1`` provides the pretrained projector weights (frozen unless
    ``cfg.finetune_projectors``).  Passing ``stage1=None`` with
    ``use_dependency=False`` trains the raw pooled-features ablation.
    ``stop_after_epoch`` finishes that epoch then returns a resumable
    checkpoint, as in :func:`pretrain_stage1`.
    """
    if cfg.stage != 2:
        raise ValueError(f"stage-2 trainer got a stage-{cfg.stage} config")
    if not train_records:
        raise ValueError("no training records")
    if not val_records:
        raise ValueError("stage 2 needs a validation set to track EER")
    for name, recs in (("train", train_records), ("validation", val_records)):
        labels = {r.label for r in recs}
        if not {BONAFIDE, SPOOF} <= labels:
            raise ValueError(f"stage 2 {name} data must contain both classes, found {sorted(labels)}")
    if use_dependency and stage1 is None:
        raise ValueError("use_dependency=True needs a stage-1 checkpoint (or set use_dependency=False)")
    view_spec.validate_layer_count(enc.layer_count)
    if cfg.augment and rawboost is None:
        rawboost = RawBoostConfig()

    # parameter init draws from the torch RNG, so seed it for reproducibility
    torch.manual_seed(derive_seed(cfg.seed, "stage2", "init"))
    model = SpoofDetector(enc.layer_count, enc.feature_dim, view_spec, model_cfg,
                          use_dependency=use_dependency)
    if stage1 is not None:
        stored_arch = stage1.extra.get("arch", {})
        want = {"feat_dim": enc.feature_dim, "style_layers": list(view_spec.style_layers),
                "linguistics_layers": list(view_spec.linguistics_layers),
                "proj_dim": model_cfg.proj_dim}
        diverged = compare_configs({k: stored_arch.get(k) for k in want}, want)
        if diverged:
            raise ValueError(f"stage-1 checkpoint incompatible on keys: {', '.join(diverged)}")
        load_numpy_state(model.projectors, stage1.params)
    if use_dependency and not cfg.finetune_projectors:
        model.freeze_projectors(True)
    if not use_dependency:
        model.freeze_projectors(True)

    arch = model.arch_dict()
    source = _fingerprint_source(cfg, arch, enc)
    source["stage1_fingerprint"] = stage1.config_fingerprint if stage1 else None
    fingerprint = config_fingerprint(source)

    train_items = prepare_samples(train_records, enc, max_audio_s=cfg.max_audio_s,
                                  silence=silence, audio_root=audio_root, load_fn=load_fn,
                                  keep_waveform=True, workers=workers)
    val_items = prepare_samples(val_records, enc, max_audio_s=None, silence=silence,
                                audio_root=audio_root, load_fn=load_fn, workers=workers)
    by_id = {it.record.utt_id: it for it in train_items}

    trainable = [p for p in model.parameters() if p.requires_grad]
    opt = _make_optimizer(trainable, cfg)
    stopper = EarlyStopper(cfg.early_stop_patience)
    logger = JsonlLogger(log_path)
    steps_per_epoch = int(np.ceil(len(train_items) / cfg.batch_size))
    total_steps = cfg.epochs * steps_per_epoch
    global_step = 0
    start_epoch = 0
    best_params = state_to_numpy(model)
    best_metric = float("inf")
    best_epoch = -1

    if resume_from is not None:
        _check_resume(resume_from, fingerprint, source, stage=2)
        load_numpy_state(model, resume_from.resume_params)
        _optimizer_from_numpy(opt, resume_from.optimizer,
                              resume_from.scalars["optimizer_groups"])
        stopper.load_state(resume_from.scalars["stopper"])
        start_epoch = int(resume_from.scalars["next_epoch"])
        global_step = int(resume_from.scalars["global_step"])
        best_params = resume_from.params
        best_metric = resume_from.val_metric
        best_epoch = resume_from.epoch

    def step_loss(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
        if cfg.loss_choice == "weighted_bce":
            return weighted_bce(logits, labels, pos_weight=cfg.pos_weight)
        return focal_loss(logits, labels, gamma=cfg.focal_gamma, alpha=cfg.focal_alpha)

    def val_eer() -> float:
        model.eval()
        scores = []
        labels = []
        with torch.no_grad():
            for it in val_items:
                scores.append(float(model(it.rep)))
                labels.append(it.label01)
        return compute_eer(np.array(scores), np.array(labels))[0]

    for epoch in range(start_epoch, cfg.epochs):
        torch.manual_seed(derive_seed(cfg.seed, "stage2", "torch", epoch))
        rb_rng = np.random.default_rng(derive_seed(cfg.seed, "stage2", "rawboost", epoch))
        batches = make_batches(train_records, cfg.batch_size, length_sorted=cfg.length_sorted,
                               seed=derive_seed(cfg.seed, "stage2", "batches", epoch))
        model.train()
        for batch in batches:
            items = [by_id[r.utt_id] for r in batch]
            reps = [it.rep for it in items]
            labels = [it.label01 for it in items]
            if cfg.augment and rawboost is not None:
                waves = [it.waveform for it in items]
                doubled = augment_batch(waves, rawboost, rb_rng)
                reps = reps + [torch.as_tensor(encode(w, enc).tensor)
                               for w in doubled[len(waves):]]
                labels = labels + labels
            lr = lr_at(global_step, total_steps, cfg)
            _set_lr(opt, lr)
            opt.zero_grad()
            logits = torch.stack([model(rep) for rep in reps])
            y = torch.tensor(labels, dtype=torch.float64)
            loss = step_loss(logits, y)
            loss.backward()
            opt.step()
            logger.write({"stage": 2, "epoch": epoch, "step": global_step, "lr": lr,
                          "n_items": len(reps), "loss": float(loss.detach())})
            global_step += 1
        metric = val_eer()
        decision = stopper.update(metric)
        if metric < best_metric:
            best_metric = metric
            best_epoch = epoch
            best_params = state_to_numpy(model)
        logger.write({"stage": 2, "epoch": epoch, "val_eer": metric,
                      "best_epoch": best_epoch, "decision": decision})
        if decision == "stop":
            break
        if stop_after_epoch is not None and epoch >= stop_after_epoch:
            break

    opt_arrays, opt_groups = _optimizer_to_numpy(opt)
    return Checkpoint(
        stage=2,
        params=best_params,
        epoch=best_epoch,
        val_metric=best_metric,
        config_fingerprint=fingerprint,
        rng_state={"seed": cfg.seed},
        optimizer=opt_arrays,
        resume_params=state_to_numpy(model),
        scalars={"optimizer_groups": opt_groups, "stopper": stopper.state(),
                 "next_epoch": min(stopper.count, cfg.epochs), "global_step": global_step,
                 "total_steps": total_steps},
        extra={"kind": "spoof_detector", "arch": arch, "config": source},
    )


def detector_from_checkpoint(ckpt: Checkpoint) -> SpoofDetector:
    """Rebuild the stage-2 model with its best parameters."""
    if ckpt.stage != 2 or ckpt.extra.get("kind") != "spoof_detector":
        raise ValueError("not a stage-2 detector checkpoint")
    model = detector_from_arch(ckpt.extra["arch"])
    load_numpy_state(model, ckpt.params)
    model.eval()
    return model


def score_records(records: Sequence[SampleRecord], enc: Encoder, model: SpoofDetector, *,
                  silence: SilenceConfig | None = None,
                  audio_root: str | None = None,
                  load_fn: Callable[[str], Waveform] | None = None,
                  workers: int = 1,
                  meta: dict | None = None) -> ScoreFile:
    """Score utterances one at a time at full length (no padding, no truncation).

    Scores are independent of batch grouping by construction.
    """
    items = prepare_samples(records, enc, max_audio_s=None, silence=silence,
                            audio_root=audio_root, load_fn=load_fn, workers=workers)
    model.eval()
    rows = []
    with torch.no_grad():
        for it in items:
            score = float(model(it.rep))
            rec = it.record
            rows.append(ScoreRow(utt_id=rec.utt_id, score=score,
                                 label=rec.label if rec.label != "unknown" else None,
                                 attack_id=rec.attack_id, codec_id=rec.codec_id))
    return ScoreFile(rows=tuple(rows), polarity="higher_is_bonafide", meta=meta or {})
