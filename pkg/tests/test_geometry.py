"""Geometry primitives checked against brute-force oracles."""

import itertools
import math

import numpy as np
import pytest

from sohkit.errors import DataError, DegenerateSeriesError
from sohkit.geometry import (
    curve_entropy,
    directed_hausdorff,
    discrete_frechet,
    polyline_length,
    reference_line,
    smallest_enclosing_circle,
)


def brute_hausdorff(a, b):
    return max(min(math.dist(x, y) for y in b) for x in a)


def brute_frechet(a, b):
    """Minimum over all monotone couplings of the maximal pair distance."""
    n, m = len(a), len(b)
    best = [math.inf]

    def walk(i, j, leash):
        leash = max(leash, math.dist(a[i], b[j]))
        if leash >= best[0]:
            return
        if i == n - 1 and j == m - 1:
            best[0] = leash
            return
        if i + 1 < n:
            walk(i + 1, j, leash)
        if j + 1 < m:
            walk(i, j + 1, leash)
        if i + 1 < n and j + 1 < m:
            walk(i + 1, j + 1, leash)

    walk(0, 0, 0.0)
    return best[0]


def brute_enclosing_diameter(points):
    """O(n^3) smallest circle: best over all point pairs and triples."""
    pts = [tuple(p) for p in points]

    def covers(c, r):
        return all(math.dist(c, p) <= r + 1e-9 for p in pts)

    best = math.inf
    for p, q in itertools.combinations(pts, 2):
        c = ((p[0] + q[0]) / 2, (p[1] + q[1]) / 2)
        r = math.dist(p, q) / 2
        if covers(c, r):
            best = min(best, r)
    for p, q, s in itertools.combinations(pts, 3):
        d = 2 * (p[0] * (q[1] - s[1]) + q[0] * (s[1] - p[1]) + s[0] * (p[1] - q[1]))
        if d == 0:
            continue
        ux = ((p[0] ** 2 + p[1] ** 2) * (q[1] - s[1]) + (q[0] ** 2 + q[1] ** 2) * (s[1] - p[1])
              + (s[0] ** 2 + s[1] ** 2) * (p[1] - q[1])) / d
        uy = ((p[0] ** 2 + p[1] ** 2) * (s[0] - q[0]) + (q[0] ** 2 + q[1] ** 2) * (p[0] - s[0])
              + (s[0] ** 2 + s[1] ** 2) * (q[0] - p[0])) / d
        r = math.dist((ux, uy), p)
        if covers((ux, uy), r):
            best = min(best, r)
    if len(pts) == 1:
        best = 0.0
    return 2 * best


class TestDirectedHausdorff:
    def test_subset_gives_zero(self):
        rng = np.random.default_rng(0)
        b = rng.normal(size=(10, 2))
        assert directed_hausdorff(b[:4], b) == 0.0

    def test_single_pair(self):
        assert directed_hausdorff([(0, 0)], [(3, 4)]) == 5.0

    def test_asymmetric(self):
        a = np.array([[0.0, 0.0]])
        b = np.array([[0.0, 0.0], [10.0, 0.0]])
        assert directed_hausdorff(a, b) == 0.0
        assert directed_hausdorff(b, a) == 10.0

    def test_matches_brute_force_on_random_sets(self):
        rng = np.random.default_rng(42)
        for _ in range(50):
            a = rng.normal(size=(20, 2))
            b = rng.normal(size=(20, 2))
            assert directed_hausdorff(a, b) == pytest.approx(brute_hausdorff(a, b), rel=1e-12)

    def test_empty_raises(self):
        with pytest.raises(DataError):
            directed_hausdorff(np.empty((0, 2)), [(0, 0)])


class TestDiscreteFrechet:
    def test_identical_is_zero(self):
        a = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 0.0]])
        assert discrete_frechet(a, a) == 0.0

    def test_parallel_translation(self):
        rng = np.random.default_rng(1)
        a = np.cumsum(rng.normal(size=(6, 2)), axis=0)
        h = 0.37
        b = a + np.array([0.0, h])
        assert discrete_frechet(a, b) == pytest.approx(h, abs=1e-12)

    def test_matches_exhaustive_couplings(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            a = rng.normal(size=(rng.integers(2, 8), 2))
            b = rng.normal(size=(rng.integers(2, 8), 2))
            assert discrete_frechet(a, b) == pytest.approx(brute_frechet(a, b), rel=1e-12)

    def test_frechet_at_least_hausdorff(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            a = rng.normal(size=(6, 2))
            b = rng.normal(size=(6, 2))
            assert discrete_frechet(a, b) >= directed_hausdorff(a, b) - 1e-12

    def test_too_short_raises(self):
        with pytest.raises(DataError):
            discrete_frechet([(0, 0)], [(0, 0), (1, 1)])


class TestEnclosingCircle:
    def test_matches_cubic_brute_force(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            pts = rng.normal(size=(30, 2))
            _, _, r = smallest_enclosing_circle(pts)
            assert 2 * r == pytest.approx(brute_enclosing_diameter(pts), rel=1e-9)

    def test_deterministic(self):
        pts = np.random.default_rng(5).normal(size=(40, 2))
        assert smallest_enclosing_circle(pts) == smallest_enclosing_circle(pts)


class TestCurveEntropy:
    @pytest.mark.parametrize("n", [3, 5, 9, 33])
    def test_straight_line_value(self, n):
        pts = np.column_stack([np.linspace(0, 1, n), np.linspace(0, 1, n)])
        assert curve_entropy(pts) == pytest.approx(1.0 / math.log2(n - 1), rel=1e-12)

    def test_three_point_line_is_one(self):
        pts = np.array([[0.0, 0.0], [0.5, 0.5], [1.0, 1.0]])
        assert curve_entropy(pts) == pytest.approx(1.0, rel=1e-12)

    def test_oscillation_increases_entropy(self):
        x = np.linspace(0, 1, 41)
        straight = np.column_stack([x, np.zeros_like(x)])
        wiggly = np.column_stack([x, 0.05 * np.sin(10 * np.pi * x)])
        assert curve_entropy(wiggly) > curve_entropy(straight)

    def test_degenerate_raises(self):
        with pytest.raises(DegenerateSeriesError):
            curve_entropy([(0, 0), (1, 1)])
        with pytest.raises(DegenerateSeriesError):
            curve_entropy([(0, 0), (0, 0), (0, 0)])


class TestReferenceLine:
    def test_endpoints_and_count(self):
        pts = np.array([[0.0, 2.0], [0.3, 2.5], [1.0, 4.0]])
        line = reference_line(pts, 32)
        assert line.shape == (32, 2)
        np.testing.assert_allclose(line[0], pts[0])
        np.testing.assert_allclose(line[-1], pts[-1])
        # Collinear: consecutive deltas all equal.
        deltas = np.diff(line, axis=0)
        np.testing.assert_allclose(deltas, np.tile(deltas[0], (len(deltas), 1)), atol=1e-12)

    def test_polyline_length(self):
        pts = np.array([[0.0, 0.0], [3.0, 4.0], [3.0, 5.0]])
        assert polyline_length(pts) == pytest.approx(6.0)
