"""Curve-similarity and geometric primitives for segment features.

All distances use the Euclidean norm on the normalized (t in [0,1],
v in [0,1]) plane so the time and value axes are commensurate.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DataError, DegenerateSeriesError


def directed_hausdorff(a: np.ndarray, b: np.ndarray) -> float:
    """max over x in a of (min over y in b of ||x-y||). Not symmetric.

    Only the curve-to-reference-line direction is used downstream.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) == 0 or len(b) == 0:
        raise DataError("point sets must be nonempty")
    diff = a[:, None, :] - b[None, :, :]
    d = np.sqrt((diff ** 2).sum(axis=2))
    return float(d.min(axis=1).max())


def discrete_frechet(a: np.ndarray, b: np.ndarray) -> float:
    """Discrete Frechet distance between two polylines.

    Standard dynamic program over the coupling lattice: the entry (i, j)
    holds the cheapest maximal leash over monotone couplings of prefixes
    a[:i+1], b[:j+1].
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) < 2 or len(b) < 2:
        raise DataError("polylines need at least 2 points")
    diff = a[:, None, :] - b[None, :, :]
    d = np.sqrt((diff ** 2).sum(axis=2))
    n, m = d.shape
    ca = np.empty((n, m))
    ca[0, 0] = d[0, 0]
    for j in range(1, m):
        ca[0, j] = max(ca[0, j - 1], d[0, j])
    for i in range(1, n):
        ca[i, 0] = max(ca[i - 1, 0], d[i, 0])
        row_prev = ca[i - 1]
        row = ca[i]
        for j in range(1, m):
            row[j] = max(min(row_prev[j], row_prev[j - 1], row[j - 1]), d[i, j])
    return float(ca[-1, -1])


def _circle_from(p1, p2, p3=None):
    if p3 is None:
        cx = (p1[0] + p2[0]) / 2.0
        cy = (p1[1] + p2[1]) / 2.0
        r = math.hypot(p1[0] - cx, p1[1] - cy)
        return cx, cy, r
    ax, ay = p1
    bx, by = p2
    cx_, cy_ = p3
    d = 2.0 * (ax * (by - cy_) + bx * (cy_ - ay) + cx_ * (ay - by))
    if d == 0.0:
        return None
    ux = ((ax * ax + ay * ay) * (by - cy_) + (bx * bx + by * by) * (cy_ - ay)
          + (cx_ * cx_ + cy_ * cy_) * (ay - by)) / d
    uy = ((ax * ax + ay * ay) * (cx_ - bx) + (bx * bx + by * by) * (ax - cx_)
          + (cx_ * cx_ + cy_ * cy_) * (bx - ax)) / d
    return ux, uy, math.hypot(ax - ux, ay - uy)


def _in_circle(c, p, eps=1e-12):
    return c is not None and math.hypot(p[0] - c[0], p[1] - c[1]) <= c[2] * (1 + eps) + eps


def smallest_enclosing_circle(points: np.ndarray, seed: int = 0) -> tuple[float, float, float]:
    """Exact smallest enclosing circle (cx, cy, r) of 2-D points.

    Randomized move-to-front construction, expected linear time; the
    shuffle is seeded so results are deterministic.
    """
    pts = [tuple(map(float, p)) for p in np.asarray(points, dtype=float)]
    if not pts:
        raise DataError("need at least one point")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(pts))
    pts = [pts[i] for i in order]

    c = None
    for i, p in enumerate(pts):
        if not _in_circle(c, p):
            c = _circle_one(pts[: i + 1], p)
    return c


def _circle_one(pts, p):
    c = (p[0], p[1], 0.0)
    for i, q in enumerate(pts):
        if not _in_circle(c, q):
            c = _circle_from(p, q) if c[2] == 0.0 else _circle_two(pts[: i + 1], p, q)
    return c


def _circle_two(pts, p, q):
    circ = _circle_from(p, q)
    left = None
    right = None
    px, py = p
    qx, qy = q
    for r in pts:
        if _in_circle(circ, r):
            continue
        cross = (qx - px) * (r[1] - py) - (qy - py) * (r[0] - px)
        c = _circle_from(p, q, r)
        if c is None:
            continue
        cc = (qx - px) * (c[1] - py) - (qy - py) * (c[0] - px)
        if cross > 0.0 and (left is None or cc > (qx - px) * (left[1] - py) - (qy - py) * (left[0] - px)):
            left = c
        elif cross < 0.0 and (right is None or cc < (qx - px) * (right[1] - py) - (qy - py) * (right[0] - px)):
            right = c
    if left is None and right is None:
        return circ
    if left is None:
        return right
    if right is None:
        return left
    return left if left[2] <= right[2] else right


def polyline_length(points: np.ndarray) -> float:
    pts = np.asarray(points, dtype=float)
    return float(np.sqrt((np.diff(pts, axis=0) ** 2).sum(axis=1)).sum())


def curve_entropy(points: np.ndarray, seed: int = 0) -> float:
    """Thermodynamic curve entropy log2(2L/D) / log2(N-1).

    L is the polyline arc length, D the diameter of the smallest
    enclosing circle of its vertices, N-1 the number of segments.
    A straight line of any N >= 3 equally spaced points gives
    1 / log2(N-1).
    """
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    if n < 3:
        raise DegenerateSeriesError("curve entropy needs at least 3 points")
    _, _, r = smallest_enclosing_circle(pts, seed=seed)
    d = 2.0 * r
    if d <= 0.0:
        raise DegenerateSeriesError("degenerate curve: zero diameter")
    length = polyline_length(pts)
    return math.log2(2.0 * length / d) / math.log2(n - 1)


def reference_line(points: np.ndarray, n_points: int = 32) -> np.ndarray:
    """Chord y = m*x + c from the first to the last vertex, resampled.

    Endpoints coincide with the curve's first and last points.
    """
    pts = np.asarray(points, dtype=float)
    if len(pts) < 2:
        raise DataError("need at least 2 points for a reference line")
    s = np.linspace(0.0, 1.0, n_points)[:, None]
    return pts[0] * (1.0 - s) + pts[-1] * s
