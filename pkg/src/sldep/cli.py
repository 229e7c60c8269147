"""Command line interface: pretrain, train, score, eval.

Exit codes: 0 success, 1 validation error (bad config, bad manifest,
incompatible checkpoint), 2 runtime failure (missing files, decode errors).
Each command writes its resolved config next to its outputs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ConfigError, RunConfig, config_to_dict, dump_config, load_config
from .corpus import ManifestError, load_manifest
from .encoder import external_encoder_adapter
from .metrics import DcfParams, apply_llr, calibrate_llr, compute_eer, compute_min_dcf
from .augment import load_rawboost_preset
from .reporting import (
    ScoreFile,
    attach_labels,
    breakdown_report,
    breakdown_to_csv,
    breakdown_to_text,
    read_score_file,
    write_score_file,
)
from .training import (
    detector_from_checkpoint,
    pretrain_stage1,
    score_records,
    train_stage2,
)


def _ensure_dirs(out_dir: str) -> dict[str, str]:
    layout = {name: os.path.join(out_dir, name)
              for name in ("checkpoints", "logs", "scores", "reports")}
    for path in layout.values():
        os.makedirs(path, exist_ok=True)
    return layout


def _resolve_config(args) -> RunConfig:
    overrides: dict = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
        overrides["stage1.seed"] = args.seed
        overrides["stage2.seed"] = args.seed
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.out_dir is not None:
        overrides["out_dir"] = args.out_dir
    if args.polarity is not None:
        overrides["polarity"] = args.polarity
    if args.dcf_cmiss is not None:
        overrides["dcf.cost_miss"] = args.dcf_cmiss
    if args.dcf_cfa is not None:
        overrides["dcf.cost_fa"] = args.dcf_cfa
    if args.dcf_ptar is not None:
        overrides["dcf.prior_target"] = args.dcf_ptar
    for attr, key in (("train_manifest", "data.train_manifest"),
                      ("val_manifest", "data.val_manifest"),
                      ("audio_root", "data.audio_root")):
        value = getattr(args, attr, None)
        if value is not None:
            overrides[key] = value
    cfg = load_config(args.config, overrides)
    if getattr(args, "rawboost_preset", None):
        cfg = RunConfig(**{**_cfg_fields(cfg), "rawboost": load_rawboost_preset(args.rawboost_preset)})
    return cfg


def _cfg_fields(cfg: RunConfig) -> dict:
    import dataclasses

    return {f.name: getattr(cfg, f.name) for f in dataclasses.fields(cfg)}


def _load_manifests(cfg: RunConfig, need_val: bool):
    if cfg.data.train_manifest is None:
        raise ConfigError(["data.train_manifest: required for this command"])
    train = load_manifest(cfg.data.train_manifest, cfg.data.manifest_format)
    val = None
    if cfg.data.val_manifest is not None:
        val = load_manifest(cfg.data.val_manifest, cfg.data.manifest_format)
    elif need_val:
        raise ConfigError(["data.val_manifest: required for this command"])
    return train, val


def cmd_pretrain(args) -> int:
    cfg = _resolve_config(args)
    layout = _ensure_dirs(cfg.out_dir)
    dump_config(cfg, os.path.join(cfg.out_dir, "pretrain_config.yaml"))
    train, val = _load_manifests(cfg, need_val=False)
    enc = external_encoder_adapter(cfg.encoder.descriptor, cfg.encoder.include_embedding_layer)
    ckpt = pretrain_stage1(
        train, val, enc, cfg.stage1,
        view_spec=cfg.views, model_cfg=cfg.model,
        silence=cfg.silence.to_silence_config(),
        audio_root=cfg.data.audio_root,
        log_path=os.path.join(layout["logs"], "stage1.jsonl"),
        workers=cfg.workers,
    )
    path = os.path.join(layout["checkpoints"], "stage1.npz")
    save_checkpoint(ckpt, path)
    print(f"stage-1 checkpoint: {path} (best epoch {ckpt.epoch}, "
          f"val loss {ckpt.val_metric:.6f})")
    return 0


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    layout = _ensure_dirs(cfg.out_dir)
    dump_config(cfg, os.path.join(cfg.out_dir, "train_config.yaml"))
    train, val = _load_manifests(cfg, need_val=True)
    enc = external_encoder_adapter(cfg.encoder.descriptor, cfg.encoder.include_embedding_layer)
    stage1 = load_checkpoint(args.stage1) if args.stage1 else None
    ckpt = train_stage2(
        train, val, enc, stage1, cfg.stage2,
        rawboost=cfg.rawboost,
        view_spec=cfg.views, model_cfg=cfg.model,
        silence=cfg.silence.to_silence_config(),
        audio_root=cfg.data.audio_root,
        log_path=os.path.join(layout["logs"], "stage2.jsonl"),
        workers=cfg.workers,
        use_dependency=not args.no_dependency,
    )
    path = os.path.join(layout["checkpoints"], "stage2.npz")
    save_checkpoint(ckpt, path)
    print(f"stage-2 checkpoint: {path} (best epoch {ckpt.epoch}, "
          f"val EER {ckpt.val_metric:.4f})")
    return 0


def cmd_score(args) -> int:
    cfg = _resolve_config(args)
    layout = _ensure_dirs(cfg.out_dir)
    dump_config(cfg, os.path.join(cfg.out_dir, "score_config.yaml"))
    records = load_manifest(args.manifest, cfg.data.manifest_format)
    enc = external_encoder_adapter(cfg.encoder.descriptor, cfg.encoder.include_embedding_layer)
    ckpt = load_checkpoint(args.ckpt)
    model = detector_from_checkpoint(ckpt)
    if model.layer_count != enc.layer_count or model.feat_dim != enc.feature_dim:
        raise ValueError(
            f"checkpoint/encoder mismatch: model wants L={model.layer_count}, "
            f"F={model.feat_dim}; encoder provides L={enc.layer_count}, F={enc.feature_dim}")
    good = []
    failures = []
    for rec in records:
        try:
            from .corpus import resolve_audio_path
            resolve_audio_path(rec, cfg.data.audio_root)
            good.append(rec)
        except FileNotFoundError as exc:
            failures.append((rec.utt_id, str(exc)))
    sf = score_records(good, enc, model, silence=cfg.silence.to_silence_config(),
                       audio_root=cfg.data.audio_root, workers=cfg.workers,
                       meta={"checkpoint_fingerprint": ckpt.config_fingerprint})
    out_path = args.out or os.path.join(layout["scores"], "scores.tsv")
    write_score_file(sf, out_path)
    if failures:
        with open(out_path, "a", encoding="utf-8") as fh:
            for utt_id, msg in failures:
                fh.write(f"# error\t{utt_id}\t{msg}\n")
        print(f"wrote {len(sf.rows)} scores to {out_path}; "
              f"{len(failures)} utterances failed (see # error lines)", file=sys.stderr)
        return 2
    print(f"wrote {len(sf.rows)} scores to {out_path}")
    return 0


def cmd_eval(args) -> int:
    cfg = _resolve_config(args)
    layout = _ensure_dirs(cfg.out_dir)
    dump_config(cfg, os.path.join(cfg.out_dir, "eval_config.yaml"))
    sf = read_score_file(args.scores)
    if args.manifest:
        records = load_manifest(args.manifest, cfg.data.manifest_format)
        sf = attach_labels(sf, records)
    if args.polarity is not None:
        sf = ScoreFile(rows=sf.rows, polarity=args.polarity, meta=dict(sf.meta))
    scores = sf.scores()
    labels = sf.labels01()
    eer, eer_thr = compute_eer(scores, labels, sf.polarity)
    min_dcf, dcf_thr = compute_min_dcf(scores, labels, cfg.dcf, sf.polarity)
    cmap = calibrate_llr(scores, labels, sf.polarity)
    canon = scores if sf.polarity == "higher_is_bonafide" else -scores
    llr = apply_llr(cmap, canon)
    table = breakdown_report(sf, dcf=cfg.dcf)
    avg = table.lookup("attack_average")
    summary = {
        "n_trials": int(len(sf.rows)),
        "eer": eer,
        "eer_threshold": eer_thr,
        "min_dcf": min_dcf,
        "min_dcf_threshold": dcf_thr,
        "avg_attack_eer": avg.eer,
        "avg_attack_min_dcf": avg.min_dcf,
        "llr_calibration": {"scale": cmap.scale, "offset": cmap.offset,
                            "mean_llr_bonafide": float(llr[labels == 1].mean()),
                            "mean_llr_spoof": float(llr[labels == 0].mean())},
        "dcf_params": {"cost_miss": cfg.dcf.cost_miss, "cost_fa": cfg.dcf.cost_fa,
                       "prior_target": cfg.dcf.prior_target},
        "polarity": sf.polarity,
    }
    metrics_path = os.path.join(layout["reports"], "metrics.json")
    with open(metrics_path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    csv_path = os.path.join(layout["reports"], "breakdown.csv")
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write(breakdown_to_csv(table))
    txt_path = os.path.join(layout["reports"], "breakdown.txt")
    with open(txt_path, "w", encoding="utf-8") as fh:
        fh.write(breakdown_to_text(table))
    print(f"eer {eer:.4f}  min_dcf {min_dcf:.4f}  "
          f"(reports in {layout['reports']})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sldep",
                                     description="two-stage audio anti-spoofing pipeline")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", default=None, help="YAML run config")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--out-dir", default=None,
                       help=f"output root (default: ${{{'SLDEP_OUT_ROOT'}}} or ./runs)")
        p.add_argument("--polarity", choices=("higher_is_bonafide", "higher_is_spoof"),
                       default=None)
        p.add_argument("--rawboost-preset", default=None,
                       help="augmentation preset YAML, or 'default'")
        p.add_argument("--dcf-cmiss", type=float, default=None)
        p.add_argument("--dcf-cfa", type=float, default=None)
        p.add_argument("--dcf-ptar", type=float, default=None)

    p = sub.add_parser("pretrain", help="stage 1: fit projectors on bonafide speech")
    add_common(p)
    p.add_argument("--train-manifest", default=None)
    p.add_argument("--val-manifest", default=None)
    p.add_argument("--audio-root", default=None)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train", help="stage 2: train the spoof detector")
    add_common(p)
    p.add_argument("--stage1", default=None, help="stage-1 checkpoint path")
    p.add_argument("--no-dependency", action="store_true",
                   help="ablation: raw pooled features only, no stage-1 branch")
    p.add_argument("--train-manifest", default=None)
    p.add_argument("--val-manifest", default=None)
    p.add_argument("--audio-root", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="score a manifest with a trained detector")
    add_common(p)
    p.add_argument("--ckpt", required=True, help="stage-2 checkpoint path")
    p.add_argument("--manifest", required=True)
    p.add_argument("--audio-root", default=None)
    p.add_argument("--out", default=None, help="score file path (default scores/scores.tsv)")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="metrics and breakdown from a score file")
    add_common(p)
    p.add_argument("--scores", required=True, help="score file path")
    p.add_argument("--manifest", default=None, help="manifest with trial labels")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ManifestError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, RuntimeError, KeyError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
