"""Reliability curves, isotonic recalibration and the metric suite.

Predictions are Gaussian (mean, variance) per cycle. The calibration score
is the empirical coverage of the central 90% predictive interval (ideal
value 90); recalibration rescales sigma by a single factor derived from the
isotonic map at the 0.05/0.95 levels so the Gaussian form is preserved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf, erfinv

from .errors import DataError

Z90 = math.sqrt(2.0) * erfinv(0.9)  # half-width of the central 90% interval
DEFAULT_LEVELS = 20
DEFAULT_ALPHA = 0.015


def _phi(z):
    return 0.5 * (1.0 + erf(np.asarray(z, dtype=float) / math.sqrt(2.0)))


def _phi_inv(p: float) -> float:
    return math.sqrt(2.0) * erfinv(2.0 * p - 1.0)


@dataclass
class ReliabilityCurve:
    """Nominal confidence levels and the empirical frequencies attained."""

    levels: np.ndarray
    empirical: np.ndarray

    def __post_init__(self):
        self.levels = np.asarray(self.levels, dtype=float)
        self.empirical = np.asarray(self.empirical, dtype=float)
        if np.any(np.diff(self.levels) <= 0):
            raise DataError("levels must be strictly increasing")
        if np.any((self.empirical < 0) | (self.empirical > 1)):
            raise DataError("empirical frequencies must lie in [0,1]")


@dataclass
class RecalibrationMap:
    """Monotone piecewise-linear map on [0,1] with pinned endpoints."""

    knots_x: np.ndarray
    knots_y: np.ndarray

    def __post_init__(self):
        self.knots_x = np.asarray(self.knots_x, dtype=float)
        self.knots_y = np.asarray(self.knots_y, dtype=float)
        if np.any(np.diff(self.knots_y) < -1e-12):
            raise DataError("recalibration map must be non-decreasing")

    def __call__(self, p):
        return np.interp(p, self.knots_x, self.knots_y)

    @property
    def sigma_scale(self) -> float:
        """Sigma rescaling so the nominal 90% interval attains mapped coverage."""
        cov = float(self(0.95) - self(0.05))
        cov = min(max(cov, 1e-6), 1.0 - 1e-6)
        return Z90 / _phi_inv((1.0 + cov) / 2.0)


@dataclass
class MetricsReport:
    """Accuracy and uncertainty metrics for one cell or an aggregate."""

    mape: float
    rmspe: float
    c_score: float
    sharpness: float
    alpha_accuracy: float
    beta: float
    pep: float
    n: int

    FIELDS = ("mape", "rmspe", "c_score", "sharpness", "alpha_accuracy", "beta", "pep", "n")

    def as_dict(self) -> dict:
        return {f: getattr(self, f) for f in self.FIELDS}


def _check(mu, sigma, y=None):
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if mu.size == 0:
        raise DataError("empty prediction set")
    if np.any(sigma <= 0):
        raise DataError("predictive sigma must be > 0")
    if y is None:
        return mu, sigma
    y = np.asarray(y, dtype=float)
    if y.shape != mu.shape:
        raise DataError("prediction/target length mismatch")
    return mu, sigma, y


def reliability(mu, sigma, y, m: int = DEFAULT_LEVELS) -> ReliabilityCurve:
    """Empirical frequency of F_n(y_n) <= p_j at levels p_j = j/(m+1)."""
    if m < 2:
        raise DataError("need at least 2 levels")
    mu, sigma, y = _check(mu, sigma, y)
    levels = np.arange(1, m + 1) / (m + 1)
    cdf = _phi((y - mu) / sigma)
    empirical = (cdf[:, None] <= levels[None, :]).mean(axis=0)
    return ReliabilityCurve(levels, empirical)


def pava(values: np.ndarray, weights: np.ndarray | None = None) -> np.ndarray:
    """Least-squares monotone (non-decreasing) fit via pool-adjacent-violators."""
    v = np.asarray(values, dtype=float)
    w = np.ones_like(v) if weights is None else np.asarray(weights, dtype=float)
    # Blocks as (mean, weight, count), merged while out of order.
    means: list[float] = []
    wts: list[float] = []
    counts: list[int] = []
    for x, wi in zip(v, w):
        means.append(float(x))
        wts.append(float(wi))
        counts.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            m2, w2, c2 = means.pop(), wts.pop(), counts.pop()
            m1, w1, c1 = means.pop(), wts.pop(), counts.pop()
            wt = w1 + w2
            means.append((m1 * w1 + m2 * w2) / wt)
            wts.append(wt)
            counts.append(c1 + c2)
    out = np.empty_like(v)
    pos = 0
    for m_, c_ in zip(means, counts):
        out[pos:pos + c_] = m_
        pos += c_
    return out


def fit_recalibration(curve: ReliabilityCurve) -> RecalibrationMap:
    """Isotonic fit of empirical frequency against nominal level.

    Endpoints (0,0) and (1,1) are pinned so the map covers [0,1].
    """
    if len(curve.levels) < 2:
        raise DataError("need at least 2 distinct levels")
    fitted = pava(curve.empirical)
    xs = np.concatenate(([0.0], curve.levels, [1.0]))
    ys = np.concatenate(([0.0], np.clip(fitted, 0.0, 1.0), [1.0]))
    ys = np.maximum.accumulate(ys)
    return RecalibrationMap(xs, ys)


def apply_recalibration(rmap: RecalibrationMap, mu, sigma):
    """Rescale sigma by the map's 90%-interval factor; mean unchanged."""
    mu, sigma = _check(mu, sigma)
    return mu, sigma * rmap.sigma_scale


def mape(y_pred, y_true) -> float:
    """Mean absolute percent error, in percent."""
    y_pred = np.asarray(y_pred, dtype=float)
    y_true = np.asarray(y_true, dtype=float)
    return float(np.mean(np.abs(y_pred - y_true) / y_true)) * 100.0


def rmspe(y_pred, y_true) -> float:
    """Root mean squared percent error, in percent."""
    y_pred = np.asarray(y_pred, dtype=float)
    y_true = np.asarray(y_true, dtype=float)
    return float(np.sqrt(np.mean(((y_pred - y_true) / y_true) ** 2))) * 100.0


def c_score(mu, sigma, y) -> float:
    """Coverage (in percent) of the central 90% predictive interval."""
    mu, sigma, y = _check(mu, sigma, y)
    inside = np.abs(y - mu) <= Z90 * sigma
    return float(inside.mean()) * 100.0


def sharpness(sigma) -> float:
    """Mean predicted standard deviation."""
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0):
        raise DataError("predictive sigma must be > 0")
    return float(sigma.mean())


def alpha_beta_pep(mu, sigma, y, alpha: float = DEFAULT_ALPHA) -> tuple[float, float, float]:
    """Accuracy-zone metrics at the +/- alpha band around the true value.

    Returns (alpha_accuracy %, mean probability mass beta in the band,
    percentage of early predictions with mean below the true label).
    """
    mu, sigma, y = _check(mu, sigma, y)
    acc = float((np.abs(mu - y) <= alpha * y).mean()) * 100.0
    hi = _phi((y * (1 + alpha) - mu) / sigma)
    lo = _phi((y * (1 - alpha) - mu) / sigma)
    beta = float((hi - lo).mean())
    pep = float((mu < y).mean()) * 100.0
    return acc, beta, pep


def metrics_report(mu, sigma, y, alpha: float = DEFAULT_ALPHA) -> MetricsReport:
    """Full per-set metric report."""
    mu, sigma, y = _check(mu, sigma, y)
    acc, beta, pep = alpha_beta_pep(mu, sigma, y, alpha)
    return MetricsReport(
        mape=mape(mu, y),
        rmspe=rmspe(mu, y),
        c_score=c_score(mu, sigma, y),
        sharpness=sharpness(sigma),
        alpha_accuracy=acc,
        beta=beta,
        pep=pep,
        n=len(mu),
    )
