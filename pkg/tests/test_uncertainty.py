import itertools
import math

import numpy as np
import pytest
from scipy.special import erf

from sohkit.errors import DataError
from sohkit.uncertainty import (
    Z90,
    MetricsReport,
    RecalibrationMap,
    ReliabilityCurve,
    alpha_beta_pep,
    apply_recalibration,
    c_score,
    fit_recalibration,
    mape,
    metrics_report,
    pava,
    reliability,
    rmspe,
    sharpness,
)


def phi(z):
    return 0.5 * (1.0 + erf(z / math.sqrt(2.0)))


class TestReliability:
    def test_well_calibrated_gaussian_monte_carlo(self):
        # With y ~ N(mu, sigma^2), the empirical frequency at each level p
        # converges to p; bound by 3 binomial standard errors.
        rng = np.random.default_rng(0)
        n = 100_000
        mu = rng.uniform(0.7, 1.0, n)
        sigma = rng.uniform(0.005, 0.02, n)
        y = rng.normal(mu, sigma)
        curve = reliability(mu, sigma, y)
        assert len(curve.levels) == 20
        np.testing.assert_allclose(curve.levels, np.arange(1, 21) / 21.0)
        for p, e in zip(curve.levels, curve.empirical):
            assert abs(e - p) <= 3 * math.sqrt(p * (1 - p) / n)

    def test_sharp_correct_predictor_steps_at_half(self):
        # Predictions exactly equal the labels: the PIT values are all 0.5,
        # so empirical frequency is 0 below p=0.5 and 1 at or above it.
        y = np.linspace(0.8, 1.0, 50)
        curve = reliability(y, np.full(50, 1e-6), y)
        for p, e in zip(curve.levels, curve.empirical):
            assert e == (1.0 if p >= 0.5 else 0.0)

    def test_single_observation(self):
        curve = reliability([1.0], [0.1], [1.05])
        pit = phi(0.05 / 0.1)
        np.testing.assert_array_equal(curve.empirical, (pit <= curve.levels).astype(float))

    def test_validation(self):
        with pytest.raises(DataError):
            reliability([1.0], [0.0], [1.0])
        with pytest.raises(DataError):
            reliability([], [], [])


def brute_isotonic(v, grid_steps=400):
    """Exhaustive least-squares monotone fit for short sequences.

    The optimal solution is piecewise constant with block means, so search
    all partitions into contiguous blocks and take the least-squares best
    whose block means are non-decreasing.
    """
    v = list(v)
    n = len(v)
    best, best_cost = None, float("inf")
    for cuts in itertools.product([0, 1], repeat=n - 1):
        blocks = []
        start = 0
        for i, c in enumerate(cuts, start=1):
            if c:
                blocks.append((start, i))
                start = i
        blocks.append((start, n))
        means = [sum(v[a:b]) / (b - a) for a, b in blocks]
        if any(m2 < m1 for m1, m2 in zip(means, means[1:])):
            continue
        fit = []
        for (a, b), m in zip(blocks, means):
            fit.extend([m] * (b - a))
        cost = sum((x - f) ** 2 for x, f in zip(v, fit))
        if cost < best_cost - 1e-15:
            best, best_cost = fit, cost
    return np.array(best)


class TestPava:
    def test_known_example(self):
        np.testing.assert_allclose(pava(np.array([0.3, 0.1, 0.6])),
                                   np.array([0.2, 0.2, 0.6]))

    def test_already_monotone_unchanged(self):
        v = np.array([0.1, 0.2, 0.2, 0.9])
        np.testing.assert_array_equal(pava(v), v)

    def test_decreasing_collapses_to_mean(self):
        v = np.array([4.0, 3.0, 2.0, 1.0])
        np.testing.assert_allclose(pava(v), np.full(4, 2.5))

    def test_matches_exhaustive_projection(self):
        rng = np.random.default_rng(1)
        for _ in range(500):
            n = int(rng.integers(1, 7))
            v = rng.uniform(-1, 1, n)
            np.testing.assert_allclose(pava(v), brute_isotonic(v), atol=1e-12)

    def test_weighted_merge(self):
        # Weighted two-point violation pools to the weighted mean.
        out = pava(np.array([1.0, 0.0]), np.array([3.0, 1.0]))
        np.testing.assert_allclose(out, np.full(2, 0.75))


class TestRecalibration:
    def test_identity_map_scale_is_one(self):
        m = RecalibrationMap(np.array([0.0, 1.0]), np.array([0.0, 1.0]))
        assert m.sigma_scale == pytest.approx(1.0, rel=1e-12)

    def test_overconfident_map_widens_sigma(self):
        # Empirical coverage of [0.05, 0.95] only 0.6 -> sigma must grow.
        m = RecalibrationMap(np.array([0.0, 0.05, 0.95, 1.0]),
                             np.array([0.0, 0.2, 0.8, 1.0]))
        assert m.sigma_scale > 1.0

    def test_underconfident_map_shrinks_sigma(self):
        m = RecalibrationMap(np.array([0.0, 0.05, 0.95, 1.0]),
                             np.array([0.0, 0.001, 0.999, 1.0]))
        assert m.sigma_scale < 1.0

    def test_fit_pins_endpoints_and_is_monotone(self):
        rng = np.random.default_rng(2)
        curve = ReliabilityCurve(np.arange(1, 21) / 21.0,
                                 np.sort(rng.uniform(0, 1, 20)))
        m = fit_recalibration(curve)
        assert m(0.0) == 0.0 and m(1.0) == 1.0
        grid = np.linspace(0, 1, 101)
        assert np.all(np.diff(m(grid)) >= -1e-12)

    def test_apply_preserves_mean(self):
        m = RecalibrationMap(np.array([0.0, 1.0]), np.array([0.0, 1.0]))
        mu, sigma = apply_recalibration(m, np.array([0.9]), np.array([0.01]))
        assert mu[0] == 0.9
        assert sigma[0] == pytest.approx(0.01, rel=1e-12)

    def test_recalibrated_coverage_monte_carlo(self):
        # Overconfident predictor (reported sigma is half the truth): fit the
        # map on one sample, check coverage is repaired on a fresh sample.
        rng = np.random.default_rng(3)
        n = 50_000
        mu = np.full(n, 0.9)
        true_sigma = 0.02
        sigma = np.full(n, true_sigma / 2)
        y = rng.normal(mu, true_sigma)
        m = fit_recalibration(reliability(mu, sigma, y))
        y2 = rng.normal(mu, true_sigma)
        _, s2 = apply_recalibration(m, mu, sigma)
        cov = c_score(mu, s2, y2)
        assert cov == pytest.approx(90.0, abs=2.0)


class TestPointMetrics:
    def test_mape_example(self):
        # |1-1.1|/1.1 and |2-1.9|/1.9 averaged, in percent.
        got = mape(np.array([1.0, 2.0]), np.array([1.1, 1.9]))
        oracle = (0.1 / 1.1 + 0.1 / 1.9) / 2 * 100
        assert got == pytest.approx(oracle, rel=1e-12)

    def test_rmspe_example(self):
        got = rmspe(np.array([1.0, 2.0]), np.array([1.1, 1.9]))
        oracle = math.sqrt(((0.1 / 1.1) ** 2 + (0.1 / 1.9) ** 2) / 2) * 100
        assert got == pytest.approx(oracle, rel=1e-12)

    def test_rmspe_dominates_mape(self):
        rng = np.random.default_rng(4)
        for _ in range(30):
            y = rng.uniform(0.5, 1.0, 25)
            p = y + rng.normal(0, 0.02, 25)
            assert rmspe(p, y) >= mape(p, y) - 1e-12

    def test_perfect_prediction_zero(self):
        y = np.array([0.9, 0.8])
        assert mape(y, y) == 0.0
        assert rmspe(y, y) == 0.0


class TestCoverageAndSharpness:
    def test_c_score_monte_carlo(self):
        rng = np.random.default_rng(5)
        n = 200_000
        mu = rng.uniform(0.7, 1.0, n)
        sigma = rng.uniform(0.01, 0.03, n)
        y = rng.normal(mu, sigma)
        assert c_score(mu, sigma, y) == pytest.approx(90.0, abs=0.5)

    def test_c_score_boundary_inclusive(self):
        assert c_score([1.0], [0.1], [1.0 + 0.1 * Z90]) == 100.0

    def test_sharpness_is_mean_sigma(self):
        assert sharpness(np.array([0.01, 0.03])) == pytest.approx(0.02)
        with pytest.raises(DataError):
            sharpness(np.array([0.01, -0.01]))


def adaptive_simpson(f, a, b, tol=1e-10, depth=30):
    def simpson(x0, x2):
        x1 = 0.5 * (x0 + x2)
        return (x2 - x0) / 6 * (f(x0) + 4 * f(x1) + f(x2)), x1

    def rec(x0, x2, whole, d):
        s_left, x1 = simpson(x0, 0.5 * (x0 + x2))
        s_right, _ = simpson(0.5 * (x0 + x2), x2)
        if d <= 0 or abs(s_left + s_right - whole) < 15 * tol:
            return s_left + s_right + (s_left + s_right - whole) / 15
        mid = 0.5 * (x0 + x2)
        return rec(x0, mid, s_left, d - 1) + rec(mid, x2, s_right, d - 1)

    whole, _ = simpson(a, b)
    return rec(a, b, whole, depth)


class TestAlphaBetaPep:
    def test_beta_matches_quadrature_oracle(self):
        # beta is the Gaussian mass inside [y(1-a), y(1+a)]; integrate the
        # density numerically instead of using the CDF.
        mu = np.array([0.90, 0.85, 0.95])
        sigma = np.array([0.01, 0.02, 0.005])
        y = np.array([0.91, 0.84, 0.95])
        a = 0.015
        _, beta, _ = alpha_beta_pep(mu, sigma, y, alpha=a)

        masses = []
        for m, s, t in zip(mu, sigma, y):
            pdf = lambda x: math.exp(-0.5 * ((x - m) / s) ** 2) / (s * math.sqrt(2 * math.pi))
            masses.append(adaptive_simpson(pdf, t * (1 - a), t * (1 + a)))
        assert beta == pytest.approx(np.mean(masses), rel=1e-6)

    def test_alpha_accuracy_counts_band_membership(self):
        y = np.array([1.0, 1.0, 1.0, 1.0])
        mu = np.array([1.0, 1.014, 1.016, 0.9])
        sigma = np.full(4, 0.01)
        acc, _, pep = alpha_beta_pep(mu, sigma, y, alpha=0.015)
        assert acc == pytest.approx(50.0)
        assert pep == pytest.approx(25.0)

    def test_beta_monotone_in_alpha(self):
        rng = np.random.default_rng(6)
        mu = rng.uniform(0.7, 1.0, 40)
        sigma = rng.uniform(0.005, 0.03, 40)
        y = mu + rng.normal(0, 0.01, 40)
        betas = [alpha_beta_pep(mu, sigma, y, alpha=a)[1]
                 for a in (0.005, 0.015, 0.05, 0.2)]
        assert all(b2 >= b1 for b1, b2 in zip(betas, betas[1:]))
        assert all(0.0 <= b <= 1.0 for b in betas)


class TestMetricsReport:
    def test_fields_consistent(self):
        rng = np.random.default_rng(7)
        y = rng.uniform(0.7, 1.0, 60)
        sigma = rng.uniform(0.005, 0.02, 60)
        mu = y + rng.normal(0, 0.01, 60)
        rep = metrics_report(mu, sigma, y)
        assert rep.n == 60
        assert rep.mape == pytest.approx(mape(mu, y))
        assert rep.rmspe == pytest.approx(rmspe(mu, y))
        assert rep.c_score == pytest.approx(c_score(mu, sigma, y))
        assert rep.sharpness == pytest.approx(sharpness(sigma))
        d = rep.as_dict()
        assert set(d) == set(MetricsReport.FIELDS)
