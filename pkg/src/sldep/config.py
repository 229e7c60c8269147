"""Run configuration: nested sections, strict keys, all-at-once validation.

Configs come from a YAML file plus CLI flag overrides.  Unknown keys are
rejected and every problem found is reported in a single error, so users fix
a config file in one pass.  The resolved config is written next to run
outputs for provenance.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field

import yaml

from .audio import SilenceConfig
from .augment import RawBoostConfig, rawboost_from_dict, rawboost_to_dict
from .encoder import LayerViewSpec
from .metrics import DcfParams
from .models import ModelConfig
from .training import StageConfig, stage1_defaults, stage2_defaults

OUT_ROOT_ENV = "SLDEP_OUT_ROOT"


class ConfigError(ValueError):
    """All config problems, collected and reported together."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("config validation failed:\n" + "\n".join(f"  - {e}" for e in self.errors))


@dataclass(frozen=True)
class DataConfig:
    """Manifest and audio locations."""

    train_manifest: str | None = None
    val_manifest: str | None = None
    manifest_format: str | None = None  # inferred from suffix when None
    audio_root: str | None = None


@dataclass(frozen=True)
class EncoderConfig:
    descriptor: str = "toy:0"
    include_embedding_layer: bool = False


@dataclass(frozen=True)
class SilenceRunConfig:
    enabled: bool = False
    frame_ms: float = 25.0
    hop_ms: float = 10.0
    threshold_db: float = 40.0

    def to_silence_config(self) -> SilenceConfig | None:
        if not self.enabled:
            return None
        return SilenceConfig(frame_ms=self.frame_ms, hop_ms=self.hop_ms,
                             threshold_db=self.threshold_db)


def _default_out_dir() -> str:
    return os.environ.get(OUT_ROOT_ENV, "runs")


@dataclass(frozen=True)
class RunConfig:
    """Top-level run configuration; sections mirror the pipeline parts."""

    seed: int = 0
    out_dir: str = field(default_factory=_default_out_dir)
    workers: int = 1
    polarity: str = "higher_is_bonafide"
    data: DataConfig = field(default_factory=DataConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    views: LayerViewSpec = field(default_factory=LayerViewSpec)
    model: ModelConfig = field(default_factory=ModelConfig)
    stage1: StageConfig = field(default_factory=stage1_defaults)
    stage2: StageConfig = field(default_factory=stage2_defaults)
    rawboost: RawBoostConfig = field(default_factory=RawBoostConfig)
    silence: SilenceRunConfig = field(default_factory=SilenceRunConfig)
    dcf: DcfParams = field(default_factory=DcfParams)


_SECTIONS = {
    "data": DataConfig,
    "encoder": EncoderConfig,
    "views": LayerViewSpec,
    "model": ModelConfig,
    "stage1": StageConfig,
    "stage2": StageConfig,
    "silence": SilenceRunConfig,
    "dcf": DcfParams,
}


def _coerce_scalar(value, target_type):
    # YAML gives ints where floats are declared; annotations are strings here
    wants_float = target_type is float or (isinstance(target_type, str) and "float" in target_type)
    if wants_float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if isinstance(value, tuple):
        return tuple(_coerce_scalar(v, "float") if isinstance(v, int) else v for v in value) \
            if (isinstance(target_type, str) and "float" in target_type) else value
    return value


def _build_section(cls, data: dict, path: str, errors: list[str], defaults=None):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    for key in unknown:
        errors.append(f"{path}.{key}: unknown key")
    kwargs = {}
    for name, value in data.items():
        if name not in fields:
            continue
        if isinstance(value, list):
            value = tuple(value)
        kwargs[name] = _coerce_scalar(value, fields[name].type)
    base = defaults if defaults is not None else cls()
    try:
        return dataclasses.replace(base, **kwargs)
    except (TypeError, ValueError) as exc:
        errors.append(f"{path}: {exc}")
        return base


def config_from_dict(data: dict) -> RunConfig:
    """Build a RunConfig from a nested dict, collecting all problems."""
    if not isinstance(data, dict):
        raise ConfigError(["top level must be a mapping"])
    errors: list[str] = []
    top_fields = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(data) - top_fields)
    for key in unknown:
        errors.append(f"{key}: unknown key")
    kwargs = {}
    for name, value in data.items():
        if name not in top_fields:
            continue
        if name == "rawboost":
            if not isinstance(value, dict):
                errors.append("rawboost: must be a mapping")
                continue
            try:
                kwargs[name] = rawboost_from_dict(value)
            except (ValueError, KeyError) as exc:
                errors.append(f"rawboost: {exc}")
        elif name in _SECTIONS:
            if not isinstance(value, dict):
                errors.append(f"{name}: must be a mapping")
                continue
            defaults = {"stage1": stage1_defaults(), "stage2": stage2_defaults()}.get(name)
            kwargs[name] = _build_section(_SECTIONS[name], value, name, errors, defaults)
        else:
            kwargs[name] = value
    cfg = None
    if not errors:
        try:
            cfg = RunConfig(**kwargs)
        except (TypeError, ValueError) as exc:
            errors.append(str(exc))
    if errors:
        raise ConfigError(errors)
    extra = _validate(cfg)
    if extra:
        raise ConfigError(extra)
    return cfg


def _validate(cfg: RunConfig) -> list[str]:
    errors = []
    if cfg.workers < 1:
        errors.append(f"workers: must be >= 1, got {cfg.workers}")
    if cfg.polarity not in ("higher_is_bonafide", "higher_is_spoof"):
        errors.append(f"polarity: unknown value {cfg.polarity!r}")
    if cfg.stage1.stage != 1:
        errors.append(f"stage1.stage: must be 1, got {cfg.stage1.stage}")
    if cfg.stage2.stage != 2:
        errors.append(f"stage2.stage: must be 2, got {cfg.stage2.stage}")
    return errors


def load_config(path: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Load YAML config and apply flat CLI overrides.

    Override keys use dots for nesting, e.g. ``{"dcf.cost_fa": 5.0}``.
    """
    data: dict = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            loaded = yaml.safe_load(fh)
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError([f"{path}: top level must be a mapping"])
        data = loaded
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        node = data
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError([f"{key}: cannot override a scalar section"])
        node[parts[-1]] = value
    return config_from_dict(data)


def config_to_dict(cfg: RunConfig) -> dict:
    out = dataclasses.asdict(cfg)
    out["rawboost"] = rawboost_to_dict(cfg.rawboost)
    return _tuples_to_lists(out)


def _tuples_to_lists(obj):
    if isinstance(obj, tuple):
        return [_tuples_to_lists(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _tuples_to_lists(v) for k, v in obj.items()}
    return obj


def dump_config(cfg: RunConfig, path: str) -> None:
    """Write the fully resolved config for provenance."""
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(config_to_dict(cfg), fh, sort_keys=True)
