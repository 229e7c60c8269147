"""Detection metrics against brute-force threshold sweeps and known cases."""

import numpy as np
import pytest

from sldep.metrics import (
    CalibrationMap,
    DcfParams,
    apply_llr,
    calibrate_llr,
    compute_eer,
    compute_min_dcf,
    roc_points,
)

from oracles import brute_force_eer, brute_force_min_dcf, brute_force_roc


def random_trials(rng, n_max=60, allow_ties=True):
    n = int(rng.integers(4, n_max))
    labels = rng.integers(0, 2, size=n)
    # force both classes
    labels[0] = 1
    labels[1] = 0
    if allow_ties and rng.random() < 0.5:
        scores = rng.integers(-3, 4, size=n).astype(np.float64)
    else:
        scores = rng.standard_normal(n)
    return scores, labels


def test_roc_points_match_brute_force_enumeration():
    rng = np.random.default_rng(10)
    for _ in range(50):
        scores, labels = random_trials(rng)
        miss, fa, thr = roc_points(scores, labels)
        oracle = brute_force_roc(scores, labels)
        # library enumerates boundary thresholds between distinct scores;
        # both must realize exactly the same set of (miss, fa) points
        got = sorted(zip(miss.tolist(), fa.tolist()))
        want = sorted((m, f) for m, f, _ in oracle)
        assert len(got) == len(want)
        for (gm, gf), (wm, wf) in zip(got, want):
            assert gm == pytest.approx(wm, abs=1e-12)
            assert gf == pytest.approx(wf, abs=1e-12)


def test_eer_matches_brute_force_sweep():
    rng = np.random.default_rng(11)
    for _ in range(200):
        scores, labels = random_trials(rng)
        eer, thr = compute_eer(scores, labels)
        o_eer, o_thr = brute_force_eer(scores, labels)
        assert abs(eer - o_eer) <= 1e-9
        # the accept rule at the returned threshold realizes the same point
        assert abs(thr - o_thr) <= 1e-9 or np.isinf(thr) == np.isinf(o_thr)


def test_min_dcf_matches_brute_force_sweep():
    rng = np.random.default_rng(12)
    params = DcfParams()
    for _ in range(200):
        scores, labels = random_trials(rng)
        dcf, _ = compute_min_dcf(scores, labels, params)
        o_dcf, _ = brute_force_min_dcf(scores, labels)
        assert abs(dcf - o_dcf) <= 1e-9


def test_min_dcf_nondefault_costs_match_brute_force():
    rng = np.random.default_rng(13)
    params = DcfParams(cost_miss=2.5, cost_fa=1.0, prior_target=0.3)
    for _ in range(50):
        scores, labels = random_trials(rng)
        dcf, _ = compute_min_dcf(scores, labels, params)
        o_dcf, _ = brute_force_min_dcf(scores, labels, cost_miss=2.5,
                                       cost_fa=1.0, prior=0.3)
        assert abs(dcf - o_dcf) <= 1e-9


def test_eer_invariant_under_monotone_transform():
    rng = np.random.default_rng(14)
    for _ in range(50):
        scores, labels = random_trials(rng, allow_ties=False)
        base, _ = compute_eer(scores, labels)
        warped, _ = compute_eer(np.tanh(scores) * 3.0 + 1.0, labels)
        assert base == pytest.approx(warped, abs=1e-12)
        affine, _ = compute_eer(2.0 * scores - 5.0, labels)
        assert base == pytest.approx(affine, abs=1e-12)


def test_min_dcf_invariant_under_monotone_transform():
    rng = np.random.default_rng(15)
    for _ in range(50):
        scores, labels = random_trials(rng, allow_ties=False)
        base, _ = compute_min_dcf(scores, labels)
        warped, _ = compute_min_dcf(np.exp(scores), labels)
        assert base == pytest.approx(warped, abs=1e-12)


def test_polarity_flip_gives_same_rates():
    rng = np.random.default_rng(16)
    for _ in range(20):
        scores, labels = random_trials(rng)
        eer_hi, _ = compute_eer(scores, labels, polarity="higher_is_bonafide")
        eer_lo, _ = compute_eer(-scores, labels, polarity="higher_is_spoof")
        assert eer_hi == pytest.approx(eer_lo, abs=1e-12)
        dcf_hi, _ = compute_min_dcf(scores, labels)
        dcf_lo, _ = compute_min_dcf(-scores, labels, polarity="higher_is_spoof")
        assert dcf_hi == pytest.approx(dcf_lo, abs=1e-12)


def test_perfectly_separated_scores():
    scores = np.array([-2.0, -1.0, 1.0, 2.0])
    labels = np.array([0, 0, 1, 1])
    eer, thr = compute_eer(scores, labels)
    assert eer == pytest.approx(0.0)
    assert -1.0 < thr <= 1.0
    dcf, _ = compute_min_dcf(scores, labels)
    assert dcf == pytest.approx(0.0)


def test_inverted_scores_give_chance_or_worse():
    scores = np.array([2.0, 1.0, -1.0, -2.0])
    labels = np.array([0, 0, 1, 1])
    eer, _ = compute_eer(scores, labels)
    assert eer >= 0.5


def test_constant_scores_interpolate_to_half():
    scores = np.zeros(10)
    labels = np.array([1, 0] * 5)
    eer, _ = compute_eer(scores, labels)
    assert eer == pytest.approx(0.5)


def test_large_random_scores_near_chance():
    rng = np.random.default_rng(17)
    scores = rng.standard_normal(4000)
    labels = rng.integers(0, 2, size=4000)
    eer, _ = compute_eer(scores, labels)
    assert abs(eer - 0.5) < 0.05


def test_min_dcf_capped_by_trivial_decisions():
    # rejecting everything costs the normalized floor exactly 1.0 at one of
    # the endpoints, so the minimum can never exceed 1
    rng = np.random.default_rng(18)
    for _ in range(50):
        scores, labels = random_trials(rng)
        dcf, _ = compute_min_dcf(scores, labels)
        assert dcf <= 1.0 + 1e-12


def test_single_class_rejected():
    with pytest.raises(ValueError, match="no spoof"):
        compute_eer([1.0, 2.0], [1, 1])
    with pytest.raises(ValueError, match="no bonafide"):
        compute_min_dcf([1.0, 2.0], [0, 0])


def test_bad_inputs_rejected():
    with pytest.raises(ValueError, match="polarity"):
        compute_eer([1.0, 0.0], [1, 0], polarity="upside_down")
    with pytest.raises(ValueError, match="disagree"):
        compute_eer([1.0, 0.0, 2.0], [1, 0])
    with pytest.raises(ValueError, match="empty"):
        compute_eer([], [])
    with pytest.raises(ValueError, match="non-finite"):
        compute_eer([np.nan, 0.0], [1, 0])
    with pytest.raises(ValueError, match="labels"):
        compute_eer([1.0, 0.0], [2, 0])


def test_dcf_params_validation():
    with pytest.raises(ValueError, match="positive"):
        DcfParams(cost_miss=0.0)
    with pytest.raises(ValueError, match="prior_target"):
        DcfParams(prior_target=1.0)


def test_calibration_recovers_gaussian_llr():
    # scores already equal to the true LLR of a two-Gaussian model should
    # calibrate to approximately the identity map
    rng = np.random.default_rng(19)
    n = 20000
    mu = 1.5
    tar = rng.normal(mu, 1.0, size=n)
    non = rng.normal(-mu, 1.0, size=n)
    # llr(x) = 2*mu*x for N(+mu,1) vs N(-mu,1)
    scores = np.concatenate([2 * mu * tar, 2 * mu * non])
    labels = np.concatenate([np.ones(n, dtype=int), np.zeros(n, dtype=int)])
    cmap = calibrate_llr(scores, labels)
    assert cmap.scale == pytest.approx(1.0, abs=0.05)
    assert cmap.offset == pytest.approx(0.0, abs=0.08)


def test_calibration_undoes_affine_distortion():
    rng = np.random.default_rng(20)
    n = 20000
    mu = 1.0
    tar = 2 * mu * rng.normal(mu, 1.0, size=n)
    non = 2 * mu * rng.normal(-mu, 1.0, size=n)
    llr = np.concatenate([tar, non])
    labels = np.concatenate([np.ones(n, dtype=int), np.zeros(n, dtype=int)])
    distorted = 0.25 * llr + 3.0
    cmap = calibrate_llr(distorted, labels)
    assert cmap.scale == pytest.approx(4.0, rel=0.05)
    recovered = apply_llr(cmap, distorted)
    assert np.mean(np.abs(recovered - llr)) < 0.15


def test_calibration_ignores_development_prior():
    # same score distributions at a skewed class ratio must give the same
    # map as the balanced case (prior log-odds removed from the intercept)
    rng = np.random.default_rng(21)
    mu = 1.0
    tar = 2 * mu * rng.normal(mu, 1.0, size=30000)
    non = 2 * mu * rng.normal(-mu, 1.0, size=3000)
    scores = np.concatenate([tar, non])
    labels = np.concatenate([np.ones(tar.size, dtype=int),
                             np.zeros(non.size, dtype=int)])
    cmap = calibrate_llr(scores, labels)
    assert cmap.scale == pytest.approx(1.0, abs=0.08)
    assert cmap.offset == pytest.approx(0.0, abs=0.15)


def test_calibration_preserves_ranking_and_eer():
    rng = np.random.default_rng(22)
    scores = np.concatenate([rng.normal(1.0, 1.0, 300), rng.normal(-1.0, 1.0, 300)])
    labels = np.concatenate([np.ones(300, dtype=int), np.zeros(300, dtype=int)])
    cmap = calibrate_llr(scores, labels)
    assert cmap.scale > 0
    llr = apply_llr(cmap, scores)
    assert np.all(np.diff(llr[np.argsort(scores)]) >= 0)
    raw_eer, _ = compute_eer(scores, labels)
    cal_eer, _ = compute_eer(llr, labels)
    assert raw_eer == pytest.approx(cal_eer, abs=1e-12)


def test_calibration_rejects_degenerate_inputs():
    with pytest.raises(ValueError, match="constant"):
        calibrate_llr([1.0, 1.0, 1.0, 1.0], [1, 0, 1, 0])
    with pytest.raises(ValueError, match="no spoof"):
        calibrate_llr([1.0, 2.0], [1, 1])


def test_calibration_map_validation():
    with pytest.raises(ValueError, match="scale"):
        CalibrationMap(scale=0.0, offset=1.0)
    with pytest.raises(ValueError, match="scale"):
        CalibrationMap(scale=-2.0, offset=0.0)
    cmap = CalibrationMap(scale=2.0, offset=-1.0)
    out = apply_llr(cmap, [0.0, 1.0])
    assert out.tolist() == [-1.0, 1.0]
    with pytest.raises(ValueError, match="non-finite"):
        apply_llr(cmap, [np.inf])
