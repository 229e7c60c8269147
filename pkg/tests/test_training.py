"""Trainer behaviors: schedules, stopping, determinism, resume, augmentation."""

import json

import numpy as np
import pytest
import torch

from sldep.checkpoint import load_checkpoint, save_checkpoint
from sldep.encoder import LayerViewSpec, ToyEncoder
from sldep.models import ModelConfig, ProjectorPair, load_numpy_state
from sldep.training import (
    EarlyStopper,
    StageConfig,
    derive_seed,
    detector_from_checkpoint,
    lr_at,
    prepare_samples,
    pretrain_stage1,
    score_records,
    ssc_over_items,
    stage1_defaults,
    stage2_defaults,
    train_stage2,
)

from conftest import make_toy_corpus, merge_loaders

torch.set_num_threads(2)

ENC = ToyEncoder(seed=0, layer_count=12, feature_dim=16)
VIEW = LayerViewSpec()
MC = ModelConfig(proj_dim=3, asp_hidden=8, clf_hidden=16)

S1_RECORDS, S1_LOAD = make_toy_corpus(71, 12, 0, prefix="a")
S2_RECORDS, S2_LOAD = make_toy_corpus(72, 10, 10, prefix="b")
VAL_RECORDS, VAL_LOAD = make_toy_corpus(73, 6, 6, prefix="c")
LOAD_ALL = merge_loaders(S1_LOAD, S2_LOAD, VAL_LOAD)


def quick_stage1(**overrides):
    base = dict(epochs=3, seed=5, batch_size=4, lr_start=0.01, lr_end=0.001,
                ssc_weight=0.5, weight_decay=0.0, early_stop_patience=10)
    base.update(overrides)
    return stage1_defaults(**base)


def quick_stage2(**overrides):
    base = dict(epochs=2, seed=5, batch_size=4, lr_start=0.01, lr_end=0.001,
                augment=False, pos_weight=1.0, weight_decay=0.0,
                early_stop_patience=10)
    base.update(overrides)
    return stage2_defaults(**base)


def test_lr_at_linear_endpoints():
    cfg = quick_stage1(lr_start=0.02, lr_end=0.002)
    assert lr_at(0, 10, cfg) == pytest.approx(0.02)
    assert lr_at(10, 10, cfg) == pytest.approx(0.002)
    assert lr_at(5, 10, cfg) == pytest.approx(0.011)
    with pytest.raises(ValueError, match="total_steps"):
        lr_at(0, 0, cfg)
    with pytest.raises(ValueError, match="outside"):
        lr_at(11, 10, cfg)


def test_stage_config_validation():
    with pytest.raises(ValueError, match="stage"):
        StageConfig(stage=3, batch_size=4, epochs=1, lr_start=1e-3, lr_end=1e-4)
    with pytest.raises(ValueError, match="lr_start"):
        quick_stage1(lr_start=1e-4, lr_end=1e-3)
    with pytest.raises(ValueError, match="ssc_weight"):
        quick_stage1(ssc_weight=1.5)
    with pytest.raises(ValueError, match="loss_choice"):
        quick_stage2(loss_choice="hinge")


def test_early_stopper_stops_after_patience():
    stopper = EarlyStopper(patience=3)
    decisions = [stopper.update(v) for v in (5.0, 4.0, 4.1, 4.2, 4.3)]
    assert decisions == ["continue"] * 4 + ["stop"]
    assert stopper.best_epoch == 1


def test_early_stopper_ties_do_not_improve():
    stopper = EarlyStopper(patience=2)
    assert stopper.update(3.0) == "continue"
    assert stopper.update(3.0) == "continue"
    assert stopper.update(3.0) == "stop"


def test_early_stopper_state_roundtrip():
    a = EarlyStopper(patience=4)
    for v in (2.0, 1.5, 1.6):
        a.update(v)
    b = EarlyStopper(patience=4)
    b.load_state(a.state())
    assert b.update(1.7) == a.update(1.7)
    assert b.state() == a.state()


def test_derive_seed_stable_and_distinct():
    assert derive_seed(0, "stage1", "torch", 3) == derive_seed(0, "stage1", "torch", 3)
    seeds = {derive_seed(s, tag, e) for s in (0, 1) for tag in ("a", "b") for e in (0, 1)}
    assert len(seeds) == 8
    for s in seeds:
        assert 0 <= s < 2 ** 63


def test_prepare_samples_worker_invariance():
    one = prepare_samples(S2_RECORDS, ENC, load_fn=LOAD_ALL, workers=1)
    many = prepare_samples(S2_RECORDS, ENC, load_fn=LOAD_ALL, workers=3)
    assert [it.record.utt_id for it in one] == [it.record.utt_id for it in many]
    for a, b in zip(one, many):
        assert torch.equal(a.rep, b.rep)
    assert [it.label01 for it in one] == [1] * 10 + [0] * 10


def test_pretrain_rejects_spoof_records():
    with pytest.raises(ValueError, match="bonafide speech only"):
        pretrain_stage1(S2_RECORDS, None, ENC, quick_stage1(), view_spec=VIEW,
                        model_cfg=MC, load_fn=LOAD_ALL)


def test_pretrain_loss_decreases(tmp_path):
    log = tmp_path / "s1.jsonl"
    pretrain_stage1(S1_RECORDS, None, ENC, quick_stage1(epochs=5), view_spec=VIEW,
                    model_cfg=MC, load_fn=LOAD_ALL, log_path=str(log))
    by_epoch = {}
    for line in log.read_text().splitlines():
        rec = json.loads(line)
        if "loss" in rec:
            by_epoch.setdefault(rec["epoch"], []).append(rec["loss"])
    means = [float(np.mean(by_epoch[e])) for e in sorted(by_epoch)]
    assert means[-1] < means[0]


def test_pretrain_deterministic_across_runs():
    runs = [pretrain_stage1(S1_RECORDS, None, ENC, quick_stage1(), view_spec=VIEW,
                            model_cfg=MC, load_fn=LOAD_ALL) for _ in range(2)]
    assert runs[0].val_metric == runs[1].val_metric
    assert set(runs[0].params) == set(runs[1].params)
    for key in runs[0].params:
        assert np.array_equal(runs[0].params[key], runs[1].params[key])


def test_redundancy_weight_prevents_feature_collapse():
    # with no redundancy pressure the pooled projections drift from the
    # identity-covariance anchor; the weighted run stays near it
    outs = {}
    for lam in (0.0, 0.5):
        ck = pretrain_stage1(S1_RECORDS, None, ENC, quick_stage1(epochs=6, ssc_weight=lam),
                             view_spec=VIEW, model_cfg=MC, load_fn=LOAD_ALL)
        pair = ProjectorPair(VIEW, ENC.feature_dim, MC)
        load_numpy_state(pair, ck.resume_params)
        pair.eval()
        items = prepare_samples(S1_RECORDS, ENC, load_fn=LOAD_ALL)
        with torch.no_grad():
            outs[lam] = float(ssc_over_items(pair, items, 0.0).redundancy)
    assert outs[0.5] < outs[0.0]


def test_stage2_validates_inputs():
    bona_only = [r for r in S2_RECORDS if r.label == "bonafide"]
    with pytest.raises(ValueError, match="both classes"):
        train_stage2(bona_only, VAL_RECORDS, ENC, None, quick_stage2(),
                     view_spec=VIEW, model_cfg=MC, load_fn=LOAD_ALL,
                     use_dependency=False)
    with pytest.raises(ValueError, match="validation"):
        train_stage2(S2_RECORDS, [], ENC, None, quick_stage2(),
                     view_spec=VIEW, model_cfg=MC, load_fn=LOAD_ALL,
                     use_dependency=False)
    with pytest.raises(ValueError, match="stage-1 checkpoint"):
        train_stage2(S2_RECORDS, VAL_RECORDS, ENC, None, quick_stage2(),
                     view_spec=VIEW, model_cfg=MC, load_fn=LOAD_ALL,
                     use_dependency=True)


def test_stage2_rejects_incompatible_stage1():
    other = ModelConfig(proj_dim=5, asp_hidden=8, clf_hidden=16)
    ck1 = pretrain_stage1(S1_RECORDS, None, ENC, quick_stage1(), view_spec=VIEW,
                          model_cfg=other, load_fn=LOAD_ALL)
    with pytest.raises(ValueError, match="incompatible"):
        train_stage2(S2_RECORDS, VAL_RECORDS, ENC, ck1, quick_stage2(),
                     view_spec=VIEW, model_cfg=MC, load_fn=LOAD_ALL)


def test_stage2_augmentation_doubles_step_items(tmp_path):
    for augment, expect in ((False, 4), (True, 8)):
        log = tmp_path / f"s2_{augment}.jsonl"
        train_stage2(S2_RECORDS, VAL_RECORDS, ENC, None,
                     quick_stage2(epochs=1, augment=augment),
                     view_spec=VIEW, model_cfg=MC, load_fn=LOAD_ALL,
                     use_dependency=False, log_path=str(log))
        counts = {json.loads(l)["n_items"] for l in log.read_text().splitlines()
                  if "n_items" in json.loads(l)}
        assert expect in counts


def test_stage2_loss_choice_changes_training():
    cks = {}
    for choice in ("weighted_bce", "focal"):
        cks[choice] = train_stage2(S2_RECORDS, VAL_RECORDS, ENC, None,
                                   quick_stage2(loss_choice=choice, pos_weight=3.0),
                                   view_spec=VIEW, model_cfg=MC, load_fn=LOAD_ALL,
                                   use_dependency=False)
    a, b = cks["weighted_bce"].resume_params, cks["focal"].resume_params
    assert any(not np.array_equal(a[k], b[k]) for k in a)


def test_stage2_frozen_projectors_keep_stage1_weights():
    ck1 = pretrain_stage1(S1_RECORDS, None, ENC, quick_stage1(), view_spec=VIEW,
                          model_cfg=MC, load_fn=LOAD_ALL)
    ck2 = train_stage2(S2_RECORDS, VAL_RECORDS, ENC, ck1, quick_stage2(),
                       view_spec=VIEW, model_cfg=MC, load_fn=LOAD_ALL)
    for key, arr in ck1.params.items():
        assert np.array_equal(ck2.resume_params[f"projectors.{key}"], arr)


def test_checkpoint_roundtrip_and_scoring(tmp_path):
    ck1 = pretrain_stage1(S1_RECORDS, None, ENC, quick_stage1(), view_spec=VIEW,
                          model_cfg=MC, load_fn=LOAD_ALL)
    ck2 = train_stage2(S2_RECORDS, VAL_RECORDS, ENC, ck1, quick_stage2(),
                       view_spec=VIEW, model_cfg=MC, load_fn=LOAD_ALL)
    path = tmp_path / "stage2.npz"
    save_checkpoint(ck2, str(path))
    back = load_checkpoint(str(path))
    assert back.stage == 2 and back.epoch == ck2.epoch
    assert back.val_metric == ck2.val_metric
    assert back.config_fingerprint == ck2.config_fingerprint
    for key in ck2.params:
        assert np.array_equal(back.params[key], ck2.params[key])
    model_a = detector_from_checkpoint(ck2)
    model_b = detector_from_checkpoint(back)
    sf_a = score_records(VAL_RECORDS, ENC, model_a, load_fn=LOAD_ALL)
    sf_b = score_records(VAL_RECORDS, ENC, model_b, load_fn=LOAD_ALL)
    assert [r.score for r in sf_a.rows] == [r.score for r in sf_b.rows]


def test_detector_from_checkpoint_rejects_stage1():
    ck1 = pretrain_stage1(S1_RECORDS, None, ENC, quick_stage1(), view_spec=VIEW,
                          model_cfg=MC, load_fn=LOAD_ALL)
    with pytest.raises(ValueError, match="stage-2"):
        detector_from_checkpoint(ck1)


def test_stage1_resume_matches_uninterrupted(tmp_path):
    cfg = quick_stage1(epochs=4)
    full = pretrain_stage1(S1_RECORDS, None, ENC, cfg, view_spec=VIEW,
                           model_cfg=MC, load_fn=LOAD_ALL)
    part = pretrain_stage1(S1_RECORDS, None, ENC, cfg, view_spec=VIEW,
                           model_cfg=MC, load_fn=LOAD_ALL, stop_after_epoch=1)
    assert part.scalars["next_epoch"] == 2
    path = tmp_path / "part.npz"
    save_checkpoint(part, str(path))
    resumed = pretrain_stage1(S1_RECORDS, None, ENC, cfg, view_spec=VIEW,
                              model_cfg=MC, load_fn=LOAD_ALL,
                              resume_from=load_checkpoint(str(path)))
    assert resumed.val_metric == full.val_metric
    assert resumed.epoch == full.epoch
    assert resumed.scalars["global_step"] == full.scalars["global_step"]
    for key in full.params:
        assert np.array_equal(resumed.params[key], full.params[key])
    for key in full.resume_params:
        assert np.array_equal(resumed.resume_params[key], full.resume_params[key])


def test_resume_rejects_changed_config():
    cfg = quick_stage1(epochs=4)
    part = pretrain_stage1(S1_RECORDS, None, ENC, cfg, view_spec=VIEW,
                           model_cfg=MC, load_fn=LOAD_ALL, stop_after_epoch=1)
    with pytest.raises(ValueError, match="mismatch"):
        pretrain_stage1(S1_RECORDS, None, ENC, quick_stage1(epochs=4, lr_start=0.02),
                        view_spec=VIEW, model_cfg=MC, load_fn=LOAD_ALL,
                        resume_from=part)
