"""Versioned training checkpoints.

A checkpoint is a numpy ``.npz`` archive holding the best model parameters,
the optimizer and last-parameter state needed to resume exactly, and a JSON
metadata block with an explicit tensor-name -> (shape, dtype) manifest so
corruption and version drift fail loudly at load time.
"""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import dataclass, field

import numpy as np

CHECKPOINT_VERSION = 1

_GROUPS = ("params", "optimizer", "resume_params")


@dataclass
class Checkpoint:
    """Training state snapshot.

    ``params`` holds the best-validation model tensors (what scoring uses);
    ``resume_params``/``optimizer``/``scalars`` carry the end-of-epoch state
    needed to continue training bit-exactly.
    """

    stage: int
    params: dict[str, np.ndarray]
    epoch: int
    val_metric: float
    config_fingerprint: str
    rng_state: dict = field(default_factory=dict)
    optimizer: dict[str, np.ndarray] = field(default_factory=dict)
    resume_params: dict[str, np.ndarray] = field(default_factory=dict)
    scalars: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)


def config_fingerprint(config: dict) -> str:
    """Stable hash of a JSON-serializable config dict."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"), default=_jsonify)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _jsonify(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON-serializable: {type(obj)}")


def save_checkpoint(ckpt: Checkpoint, path: str) -> None:
    arrays: dict[str, np.ndarray] = {}
    manifest: dict[str, list] = {}
    for group in _GROUPS:
        for name, arr in getattr(ckpt, group).items():
            key = f"{group}/{name}"
            arrays[key] = np.asarray(arr)
            manifest[key] = [list(arrays[key].shape), str(arrays[key].dtype)]
    meta = {
        "version": CHECKPOINT_VERSION,
        "stage": ckpt.stage,
        "epoch": ckpt.epoch,
        "val_metric": ckpt.val_metric,
        "config_fingerprint": ckpt.config_fingerprint,
        "rng_state": ckpt.rng_state,
        "scalars": ckpt.scalars,
        "extra": ckpt.extra,
        "manifest": manifest,
    }
    arrays["__meta__"] = np.frombuffer(
        json.dumps(meta, sort_keys=True, default=_jsonify).encode("utf-8"), dtype=np.uint8)
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_checkpoint(path: str) -> Checkpoint:
    """Load and validate a checkpoint; raises ValueError on drift or damage."""
    with np.load(path, allow_pickle=False) as data:
        if "__meta__" not in data:
            raise ValueError(f"{path}: not a checkpoint (missing metadata block)")
        meta = json.loads(bytes(data["__meta__"].tobytes()).decode("utf-8"))
        version = meta.get("version")
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version!r}")
        manifest = meta["manifest"]
        stored = {k for k in data.files if k != "__meta__"}
        if stored != set(manifest):
            missing = sorted(set(manifest) - stored)
            surplus = sorted(stored - set(manifest))
            raise ValueError(f"{path}: manifest mismatch; missing {missing}, surplus {surplus}")
        groups: dict[str, dict[str, np.ndarray]] = {g: {} for g in _GROUPS}
        for key, (shape, dtype) in manifest.items():
            arr = data[key]
            if list(arr.shape) != shape or str(arr.dtype) != dtype:
                raise ValueError(f"{path}: tensor {key} is {arr.shape}/{arr.dtype}, "
                                 f"manifest says {shape}/{dtype}")
            group, _, name = key.partition("/")
            groups[group][name] = arr
    return Checkpoint(
        stage=int(meta["stage"]),
        params=groups["params"],
        epoch=int(meta["epoch"]),
        val_metric=float(meta["val_metric"]),
        config_fingerprint=str(meta["config_fingerprint"]),
        rng_state=meta.get("rng_state", {}),
        optimizer=groups["optimizer"],
        resume_params=groups["resume_params"],
        scalars=meta.get("scalars", {}),
        extra=meta.get("extra", {}),
    )
