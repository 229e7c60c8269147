"""Detection metrics: EER, minimum normalized detection cost, LLR calibration.

Scores are canonicalized so that higher means bonafide (the target class);
the accept rule is score >= threshold.  Error rates are evaluated on the
achievable operating points of the empirical ROC, with the equal error rate
linearly interpolated between the two points bracketing the miss = false
alarm crossing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.special import expit

POLARITIES = ("higher_is_bonafide", "higher_is_spoof")


@dataclass(frozen=True)
class DcfParams:
    """Detection cost parameters (defaults follow the spoofing-challenge convention)."""

    cost_miss: float = 1.0
    cost_fa: float = 10.0
    prior_target: float = 0.05

    def __post_init__(self):
        if self.cost_miss <= 0 or self.cost_fa <= 0:
            raise ValueError(f"costs must be positive, got {self.cost_miss}, {self.cost_fa}")
        if not 0.0 < self.prior_target < 1.0:
            raise ValueError(f"prior_target must be in (0, 1), got {self.prior_target}")


@dataclass(frozen=True)
class CalibrationMap:
    """Affine score-to-LLR map: llr = scale * score + offset, scale > 0."""

    scale: float
    offset: float

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")


def _canonical(scores, labels, polarity: str) -> tuple[np.ndarray, np.ndarray]:
    if polarity not in POLARITIES:
        raise ValueError(f"unknown polarity {polarity!r}; expected one of {POLARITIES}")
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if s.size != y.size:
        raise ValueError(f"scores/labels disagree: {s.size} vs {y.size}")
    if s.size == 0:
        raise ValueError("empty score set")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores contain non-finite values")
    y = y.astype(np.int64)
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 (spoof) or 1 (bonafide)")
    if polarity == "higher_is_spoof":
        s = -s
    return s, y


def _require_both_classes(y: np.ndarray) -> None:
    if not (y == 1).any():
        raise ValueError("no bonafide trials")
    if not (y == 0).any():
        raise ValueError("no spoof trials")


def roc_points(scores, labels, polarity: str = "higher_is_bonafide"
               ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Achievable operating points of the accept-iff-score>=threshold rule.

    Returns (miss, fa, thresholds) over the boundaries between distinct
    sorted scores plus the accept-all and reject-all endpoints.  The
    reject-all threshold is +inf.
    """
    s, y = _canonical(scores, labels, polarity)
    _require_both_classes(y)
    order = np.argsort(s, kind="mergesort")
    s = s[order]
    y = y[order]
    n = s.size
    n_tar = int((y == 1).sum())
    n_non = n - n_tar
    cum_tar = np.concatenate([[0], np.cumsum(y == 1)])
    cum_non = np.concatenate([[0], np.cumsum(y == 0)])
    # k rejects the k lowest scores; keep only k where a threshold can sit
    ks = [0]
    ks.extend(k for k in range(1, n) if s[k - 1] < s[k])
    ks.append(n)
    ks = np.asarray(ks)
    miss = cum_tar[ks] / n_tar
    fa = (n_non - cum_non[ks]) / n_non
    thresholds = np.concatenate([s[ks[:-1]], [np.inf]])
    return miss, fa, thresholds


def compute_eer(scores, labels, polarity: str = "higher_is_bonafide") -> tuple[float, float]:
    """Equal error rate and its operating threshold.

    Linear interpolation between the two achievable operating points that
    bracket miss == fa; degenerate score sets interpolate the same way.
    """
    miss, fa, thr = roc_points(scores, labels, polarity)
    diff = miss - fa  # non-decreasing from -1 to +1
    j = int(np.searchsorted(diff >= 0, True))
    if diff[j] == 0:
        return float(miss[j]), float(thr[j])
    i = j - 1
    d0 = -diff[i]
    d1 = diff[j]
    t = d0 / (d0 + d1)
    eer = miss[i] + t * (miss[j] - miss[i])
    theta = thr[i] if np.isinf(thr[j]) else thr[i] + t * (thr[j] - thr[i])
    return float(eer), float(theta)


def detection_cost(miss: np.ndarray, fa: np.ndarray, params: DcfParams) -> np.ndarray:
    """Normalized detection cost at given (miss, fa) rates."""
    raw = (params.cost_miss * params.prior_target * miss
           + params.cost_fa * (1.0 - params.prior_target) * fa)
    floor = min(params.cost_miss * params.prior_target,
                params.cost_fa * (1.0 - params.prior_target))
    return raw / floor


def compute_min_dcf(scores, labels, params: DcfParams = DcfParams(),
                    polarity: str = "higher_is_bonafide") -> tuple[float, float]:
    """Minimum normalized detection cost over achievable thresholds."""
    miss, fa, thr = roc_points(scores, labels, polarity)
    costs = detection_cost(miss, fa, params)
    idx = int(np.argmin(costs))
    return float(costs[idx]), float(thr[idx])


def calibrate_llr(scores, labels, polarity: str = "higher_is_bonafide") -> CalibrationMap:
    """Fit an affine log-likelihood-ratio calibration on a development set.

    Maximum-likelihood logistic regression with a structurally positive
    slope; the fitted intercept has the development prior log-odds removed,
    so well-calibrated balanced scores map to scale 1, offset 0.
    """
    s, y = _canonical(scores, labels, polarity)
    _require_both_classes(y)
    # standardize for conditioning; unscale afterwards
    mu = float(s.mean())
    sd = float(s.std())
    if sd == 0:
        raise ValueError("cannot calibrate constant scores")
    z = (s - mu) / sd
    yf = y.astype(np.float64)

    def nll_and_grad(theta):
        u, c = theta
        a = np.exp(u)
        t = a * z + c
        # softplus(-t)*y + softplus(t)*(1-y), stable form
        nll = np.logaddexp(0.0, -t) * yf + np.logaddexp(0.0, t) * (1.0 - yf)
        p = expit(t)
        dt = p - yf
        return float(nll.sum()), np.array([float((dt * z).sum() * a), float(dt.sum())])

    res = optimize.minimize(nll_and_grad, x0=np.zeros(2), jac=True, method="L-BFGS-B")
    if not res.success and res.fun > 0 and np.linalg.norm(res.jac) > 1e-3 * s.size:
        raise RuntimeError(f"calibration failed to converge: {res.message}")
    a = float(np.exp(res.x[0]))
    c = float(res.x[1])
    scale = a / sd
    intercept = c - a * mu / sd
    n_tar = int((y == 1).sum())
    n_non = int((y == 0).sum())
    offset = intercept - float(np.log(n_tar / n_non))
    return CalibrationMap(scale=scale, offset=offset)


def apply_llr(cmap: CalibrationMap, scores) -> np.ndarray:
    """Map raw scores to calibrated LLRs (strictly increasing affine map)."""
    s = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(s)):
        raise ValueError("scores contain non-finite values")
    return cmap.scale * s + cmap.offset
