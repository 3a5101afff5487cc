"""Extraction and normalization of the ageing segments of charge curves.

The CC segment is the voltage-vs-time slice between V_l = v_high - delta_v
and v_high; the CV segment is the current-vs-time slice between i_high and
i_low_fraction * i_high. Threshold crossings are located by linear
interpolation and an interpolated boundary point is inserted, so segment
endpoints (and therefore durations) are exact rather than quantized to the
sampling grid. Fast-charge samples are ignored entirely; extraction applies
to the CC-CV portion only.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data_model import CycleRecord
from .errors import DataError, DegenerateSeriesError, SegmentUnavailableError

CC_KIND = "cc_voltage"
CV_KIND = "cv_current"


@dataclass
class ThresholdConfig:
    """Voltage/current thresholds bounding the extracted segments.

    ``v_high`` defaults to the cell's cut-off voltage at call sites;
    ``delta_v`` of 0.3 V accommodates terminal-voltage recovery after
    discharge while capturing the late CC period. ``i_low_fraction`` of
    0.60 corresponds to a 40% current drop from i_high.
    """

    v_high: float
    i_high: float
    delta_v: float = 0.3
    i_low_fraction: float = 0.60

    def __post_init__(self):
        if not (self.v_high > self.delta_v > 0):
            raise DataError("require v_high > delta_v > 0")
        if not (0 < self.i_low_fraction < 1):
            raise DataError("require 0 < i_low_fraction < 1")

    @property
    def v_low(self) -> float:
        return self.v_high - self.delta_v

    @property
    def i_low(self) -> float:
        return self.i_low_fraction * self.i_high


@dataclass
class CurveSegment:
    """A thresholded slice of a charge curve, time rebased to 0."""

    kind: str  # CC_KIND or CV_KIND
    t: np.ndarray
    v: np.ndarray
    normalized: bool = False
    t_offset_s: float = 0.0  # segment start in the cycle's original clock

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if len(self.t) < 2:
            raise DataError("segment needs at least 2 samples")
        if np.any(np.diff(self.t) <= 0):
            raise DataError("segment time must be strictly increasing")

    @property
    def duration_s(self) -> float:
        return float(self.t[-1] - self.t[0])


def _dedupe_time(t: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Drop repeated time stamps so segment time is strictly increasing."""
    keep = np.concatenate(([True], np.diff(t) > 0))
    return t[keep], v[keep]


def _crossing_time(t0, t1, y0, y1, level) -> float:
    return t0 + (level - y0) / (y1 - y0) * (t1 - t0)


def _slice_band(t: np.ndarray, y: np.ndarray, lo: float, hi: float,
                decreasing: bool, lo_name: str, hi_name: str) -> tuple[np.ndarray, np.ndarray]:
    """Contiguous slice of (t, y) between levels lo and hi with interpolated endpoints.

    For an increasing curve (CC voltage): from the first crossing of lo up to
    the first subsequent crossing of hi. For a decreasing curve (CV current):
    levels are entered at hi and left at lo. Curves that start inside the
    band are clipped to the series start.
    """
    first_level, last_level = (hi, lo) if decreasing else (lo, hi)
    first_name, last_name = (hi_name, lo_name) if decreasing else (lo_name, hi_name)

    # Entry: first sample past the entry level, with an interpolated boundary
    # point when the crossing falls between samples; clipped to the series
    # start when the curve begins inside the band.
    inside = y <= first_level if decreasing else y >= first_level
    idx = np.nonzero(inside)[0]
    if len(idx) == 0:
        raise SegmentUnavailableError(first_name)
    start = idx[0]
    pts_t, pts_y = [], []
    if start > 0:
        tc = _crossing_time(t[start - 1], t[start], y[start - 1], y[start], first_level)
        pts_t.append(tc)
        pts_y.append(first_level)

    # Exit: first index at/after entry where the curve passes last_level.
    if decreasing:
        beyond = y[start:] <= last_level
    else:
        beyond = y[start:] >= last_level
    jdx = np.nonzero(beyond)[0]
    if len(jdx) == 0:
        raise SegmentUnavailableError(last_name)
    end = start + jdx[0]

    exact_end = (y[end] == last_level)
    pts_t.extend(t[start:end + 1] if exact_end else t[start:end])
    pts_y.extend(y[start:end + 1] if exact_end else y[start:end])
    if not exact_end:
        tc = _crossing_time(t[end - 1] if end > start else pts_t[0],
                            t[end],
                            y[end - 1] if end > start else pts_y[0],
                            y[end], last_level)
        pts_t.append(tc)
        pts_y.append(last_level)

    tt, yy = _dedupe_time(np.asarray(pts_t, dtype=float), np.asarray(pts_y, dtype=float))
    if len(tt) < 2:
        raise SegmentUnavailableError(last_name, "segment degenerate after thresholding")
    return tt, yy


def extract_cc_segment(cycle: CycleRecord, cfg: ThresholdConfig) -> CurveSegment:
    """Voltage-vs-time slice of the constant-current charge between V_l and V_h."""
    mask = cycle.phase_mask("cc_charge")
    if mask.sum() < 2:
        raise SegmentUnavailableError("v_low", f"cycle {cycle.cycle_index}: no cc_charge samples")
    t = cycle.time_s[mask]
    v = cycle.voltage_v[mask]
    tt, vv = _slice_band(t, v, cfg.v_low, cfg.v_high, decreasing=False,
                         lo_name="v_low", hi_name="v_high")
    return CurveSegment(kind=CC_KIND, t=tt - tt[0], v=vv, t_offset_s=float(tt[0]))


def extract_cv_segment(cycle: CycleRecord, cfg: ThresholdConfig) -> CurveSegment:
    """Current-vs-time slice of the constant-voltage charge between I_h and I_l."""
    mask = cycle.phase_mask("cv_charge")
    if mask.sum() < 2:
        raise SegmentUnavailableError("i_high", f"cycle {cycle.cycle_index}: no cv_charge samples")
    t = cycle.time_s[mask]
    i = cycle.current_a[mask]
    tt, ii = _slice_band(t, i, cfg.i_low, cfg.i_high, decreasing=True,
                         lo_name="i_low", hi_name="i_high")
    return CurveSegment(kind=CV_KIND, t=tt - tt[0], v=ii, t_offset_s=float(tt[0]))


def normalize_segment(seg: CurveSegment) -> CurveSegment:
    """Min-max normalize segment values onto [0, 1]; idempotent."""
    if seg.normalized:
        return seg
    lo = float(seg.v.min())
    hi = float(seg.v.max())
    if hi <= lo:
        raise DegenerateSeriesError("cannot normalize a constant segment")
    return replace(seg, v=(seg.v - lo) / (hi - lo), normalized=True)
