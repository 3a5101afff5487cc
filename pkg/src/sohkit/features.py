"""The 30 engineered per-cycle features and their assembly.

Feature groups: battery-specific metadata, cumulative history, one-cycle
lagged quantities, and instantaneous charge-curve statistics computed on
the extracted CC/CV segments. Statistics on normalized segments are
dimensionless; distance features are computed on the normalized plane
(t rescaled to [0,1], v min-max normalized) against a 32-point reference
chord. Columns follow a fixed alphabetical order for persistence stability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .data_model import CellHistory, CycleRecord, soh
from .errors import DataError, DegenerateSeriesError, SegmentUnavailableError
from .segments import (
    CurveSegment,
    ThresholdConfig,
    extract_cc_segment,
    extract_cv_segment,
    normalize_segment,
)

# Canonical 30-feature column order (alphabetical).
FEATURE_NAMES = sorted([
    "nominal_capacity_ah",
    "charge_current_a",
    "discharge_current_a",
    "cum_discharge_capacity_ah",
    "cum_discharge_energy_wh",
    "lagged_cycle_time_s",
    "lagged_pseudo_resistance_ohm",
    "start_of_charge_voltage_v",
    "ccct_s",
    "cvct_s",
    "cc_mean_current_a",
    "cv_mean_voltage_v",
    "cc_slope",
    "cv_slope",
    "cc_energy_wh",
    "cv_energy_wh",
    "energy_ratio",
    "energy_difference",
    "cc_curve_entropy",
    "cv_curve_entropy",
    "cc_shannon_entropy",
    "cv_shannon_entropy",
    "cc_skewness",
    "cv_skewness",
    "cc_kurtosis",
    "cv_kurtosis",
    "cc_frechet",
    "cv_frechet",
    "cc_hausdorff",
    "cv_hausdorff",
])

# Features that require the CV part of the charge protocol; absent for
# CC-only cells, leaving 18 candidates.
CV_FEATURE_NAMES = frozenset([
    "cvct_s",
    "cv_mean_voltage_v",
    "cv_slope",
    "cv_energy_wh",
    "energy_ratio",
    "energy_difference",
    "cv_curve_entropy",
    "cv_shannon_entropy",
    "cv_skewness",
    "cv_kurtosis",
    "cv_frechet",
    "cv_hausdorff",
])

REFERENCE_LINE_POINTS = 32
SHANNON_BINS = 32


@dataclass
class FeatureConfig:
    """Knobs for feature assembly."""

    thresholds: ThresholdConfig
    has_cv_phase: bool = True
    include_cc_capacity: bool = False  # extra selectable column cc_capacity_ah
    reference_points: int = REFERENCE_LINE_POINTS
    shannon_bins: int = SHANNON_BINS


def integral_capacity(t_s: np.ndarray, current_a: np.ndarray) -> float:
    """Trapezoidal integral of current over time, in ampere-hours."""
    return float(np.trapezoid(current_a, t_s)) / 3600.0


def integral_energy(t_s: np.ndarray, voltage_v: np.ndarray, current_a: np.ndarray) -> float:
    """Trapezoidal integral of V*I over time, in watt-hours."""
    v = np.asarray(voltage_v, dtype=float)
    i = np.asarray(current_a, dtype=float)
    return float(np.trapezoid(v * i, t_s)) / 3600.0


def _moments(x: np.ndarray) -> tuple[int, float, float]:
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 3:
        raise DegenerateSeriesError("need at least 3 samples")
    mean = float(x.mean())
    sd = float(np.sqrt(((x - mean) ** 2).sum() / (n - 1)))
    if sd == 0.0:
        raise DegenerateSeriesError("constant series has no skewness/kurtosis")
    return n, mean, sd


def skewness(x: np.ndarray) -> float:
    """sum((x - mean)^3) / ((n-1) * sd^3) with the n-1 sample deviation."""
    n, mean, sd = _moments(x)
    x = np.asarray(x, dtype=float)
    return float(((x - mean) ** 3).sum() / ((n - 1) * sd ** 3))


def kurtosis(x: np.ndarray) -> float:
    """sum((x - mean)^4) / ((n-1) * sd^4) with the n-1 sample deviation."""
    n, mean, sd = _moments(x)
    x = np.asarray(x, dtype=float)
    return float(((x - mean) ** 4).sum() / ((n - 1) * sd ** 4))


def shannon_entropy(values: np.ndarray, bins: int = SHANNON_BINS) -> float:
    """Entropy in bits of normalized values over equal-width bins on [0,1]."""
    v = np.asarray(values, dtype=float)
    if v.min() < -1e-12 or v.max() > 1 + 1e-12:
        raise DataError("shannon_entropy expects values normalized to [0,1]")
    counts, _ = np.histogram(np.clip(v, 0.0, 1.0), bins=bins, range=(0.0, 1.0))
    p = counts[counts > 0] / len(v)
    return float(-(p * np.log2(p)).sum())


def slope(t: np.ndarray, v: np.ndarray) -> float:
    """Ordinary least-squares slope of v against t."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    tc = t - t.mean()
    denom = (tc ** 2).sum()
    if denom == 0.0:
        raise DegenerateSeriesError("slope undefined for constant time")
    return float((tc * (v - v.mean())).sum() / denom)


def pseudo_resistance(prev_cycle: CycleRecord) -> float | None:
    """Voltage drop at load application over load current, from the previous cycle.

    Returns None when the previous cycle has no rest -> discharge transition;
    callers impute with the cell's most recent available value.
    """
    phases = prev_cycle.phase
    for k in range(1, len(phases)):
        if phases[k] == "discharge" and phases[k - 1] == "rest":
            drop = float(prev_cycle.voltage_v[k - 1] - prev_cycle.voltage_v[k])
            load = abs(float(prev_cycle.current_a[k]))
            if load == 0.0:
                return None
            return drop / load
    return None


def _normalized_plane(seg: CurveSegment) -> np.ndarray:
    """Segment vertices with t rescaled to [0,1] and v min-max normalized."""
    nseg = normalize_segment(seg)
    span = nseg.t[-1] - nseg.t[0]
    if span <= 0:
        raise DegenerateSeriesError("zero-duration segment")
    tn = (nseg.t - nseg.t[0]) / span
    return np.column_stack([tn, nseg.v])


def _window_series(cycle: CycleRecord, tag: str, t_lo: float, t_hi: float):
    """(t, V, I) of tagged samples within [t_lo, t_hi], endpoints interpolated."""
    mask = cycle.phase_mask(tag)
    t = cycle.time_s[mask]
    v = cycle.voltage_v[mask]
    i = cycle.current_a[mask]
    keep = (t >= t_lo) & (t <= t_hi)
    tt, vv, ii = list(t[keep]), list(v[keep]), list(i[keep])
    if tt and tt[0] > t_lo and t.min() < t_lo:
        vv.insert(0, float(np.interp(t_lo, t, v)))
        ii.insert(0, float(np.interp(t_lo, t, i)))
        tt.insert(0, t_lo)
    if tt and tt[-1] < t_hi and t.max() > t_hi:
        vv.append(float(np.interp(t_hi, t, v)))
        ii.append(float(np.interp(t_hi, t, i)))
        tt.append(t_hi)
    return np.asarray(tt), np.asarray(vv), np.asarray(ii)


def _segment_stats(seg: CurveSegment, cfg: FeatureConfig, prefix: str) -> dict[str, float]:
    pts = _normalized_plane(seg)
    line = geometry.reference_line(pts, cfg.reference_points)
    vals = pts[:, 1]
    return {
        f"{prefix}_slope": slope(seg.t, normalize_segment(seg).v),
        f"{prefix}_curve_entropy": geometry.curve_entropy(pts),
        f"{prefix}_shannon_entropy": shannon_entropy(vals, cfg.shannon_bins),
        f"{prefix}_skewness": skewness(vals),
        f"{prefix}_kurtosis": kurtosis(vals),
        f"{prefix}_frechet": geometry.discrete_frechet(pts, line),
        f"{prefix}_hausdorff": geometry.directed_hausdorff(pts, line),
    }


def _lagged_resistance(cell: CellHistory, upto_position: int) -> float | None:
    """Most recent available pseudo resistance strictly before this cycle."""
    for j in range(upto_position - 1, -1, -1):
        r = pseudo_resistance(cell.cycles[j])
        if r is not None:
            return r
    return None


def assemble_features(cell: CellHistory, cycle_index: int, cfg: FeatureConfig) -> dict[str, float]:
    """Compute the full feature vector (plus the ``soh`` target) for one cycle.

    Cumulative fields sum discharge capacity/energy over all prior cycles;
    lagged fields come from the previous cycle (imputed from the most recent
    available predecessor when missing). CV-derived features are omitted when
    the charge protocol has no CV phase. Feature errors propagate with the
    feature name attached.
    """
    pos = next((j for j, c in enumerate(cell.cycles) if c.cycle_index == cycle_index), None)
    if pos is None:
        raise DataError(f"{cell.cell_id}: no cycle {cycle_index}")
    if pos == 0:
        raise DataError(f"{cell.cell_id}: lagged features need a previous cycle")
    cyc = cell.cycles[pos]
    prev = cell.cycles[pos - 1]

    out: dict[str, float] = {
        "nominal_capacity_ah": cell.nominal_capacity_ah,
        "charge_current_a": cell.charge_current_a,
    }

    # Discharge current: per cycle when variable, else cell metadata.
    dmask = cyc.phase_mask("discharge")
    if dmask.any():
        out["discharge_current_a"] = float(np.abs(cyc.current_a[dmask]).mean())
    elif cell.discharge_current_a is not None:
        out["discharge_current_a"] = cell.discharge_current_a
    else:
        raise DataError(f"{cell.cell_id} cycle {cycle_index}: no discharge current available")

    cum_cap = 0.0
    cum_energy = 0.0
    for c in cell.cycles[:pos]:
        cum_cap += c.discharge_capacity_ah
        m = c.phase_mask("discharge")
        if m.sum() >= 2:
            cum_energy += abs(integral_energy(c.time_s[m], c.voltage_v[m], c.current_a[m]))
    out["cum_discharge_capacity_ah"] = cum_cap
    out["cum_discharge_energy_wh"] = cum_energy

    out["lagged_cycle_time_s"] = prev.cycle_duration_s
    r = _lagged_resistance(cell, pos)
    if r is None:
        raise DataError(f"{cell.cell_id} cycle {cycle_index}: no pseudo resistance available for imputation")
    out["lagged_pseudo_resistance_ohm"] = r

    charge_mask = cyc.phase_mask("cc_charge") | cyc.phase_mask("cv_charge") | cyc.phase_mask("fast_charge")
    if not charge_mask.any():
        raise DataError(f"{cell.cell_id} cycle {cycle_index}: no charge samples")
    out["start_of_charge_voltage_v"] = float(cyc.voltage_v[np.nonzero(charge_mask)[0][0]])

    try:
        cc = extract_cc_segment(cyc, cfg.thresholds)
        out["ccct_s"] = cc.duration_s
        t_cc, v_cc, i_cc = _window_series(cyc, "cc_charge", cc.t_offset_s, cc.t_offset_s + cc.duration_s)
        out["cc_mean_current_a"] = float(i_cc.mean())
        out["cc_energy_wh"] = integral_energy(t_cc, v_cc, i_cc)
        if cfg.include_cc_capacity:
            out["cc_capacity_ah"] = integral_capacity(t_cc, i_cc)
        out.update(_segment_stats(cc, cfg, "cc"))
    except (DataError, DegenerateSeriesError) as exc:
        raise DataError(f"{cell.cell_id} cycle {cycle_index} [cc segment]: {exc}") from exc

    if cfg.has_cv_phase:
        try:
            cv = extract_cv_segment(cyc, cfg.thresholds)
            out["cvct_s"] = cv.duration_s
            t_cv, v_cv, i_cv = _window_series(cyc, "cv_charge", cv.t_offset_s, cv.t_offset_s + cv.duration_s)
            out["cv_mean_voltage_v"] = float(v_cv.mean())
            out["cv_energy_wh"] = integral_energy(t_cv, v_cv, i_cv)
            out["energy_ratio"] = out["cc_energy_wh"] / out["cv_energy_wh"]
            out["energy_difference"] = out["cc_energy_wh"] - out["cv_energy_wh"]
            out.update(_segment_stats(cv, cfg, "cv"))
        except (DataError, DegenerateSeriesError) as exc:
            raise DataError(f"{cell.cell_id} cycle {cycle_index} [cv segment]: {exc}") from exc

    c1 = cell.cycles[0].discharge_capacity_ah
    out["soh"] = soh(cyc.discharge_capacity_ah, c1)

    bad = [k for k, v in out.items() if not math.isfinite(v)]
    if bad:
        raise DataError(f"{cell.cell_id} cycle {cycle_index}: non-finite feature(s) {bad}")
    return out


def feature_columns(cfg: FeatureConfig) -> list[str]:
    """Active feature columns in canonical order for this configuration."""
    cols = list(FEATURE_NAMES)
    if not cfg.has_cv_phase:
        cols = [c for c in cols if c not in CV_FEATURE_NAMES]
    if cfg.include_cc_capacity:
        cols = sorted(cols + ["cc_capacity_ah"])
    return cols


def featurize_cell(cell: CellHistory, cfg: FeatureConfig,
                   inlier_mask: np.ndarray | None = None,
                   reference_capacity_ah: float | None = None):
    """Feature rows for every usable cycle of a cell.

    The first cycle is dropped (lagged features undefined); cycles whose
    segments are unavailable are skipped and reported. ``inlier_mask``
    (training cells, from the RANSAC filter) drops flagged cycles; when it
    excludes the first cycle, ``reference_capacity_ah`` re-bases the SOH
    target on the first inlier capacity.

    Returns (rows, skipped) where rows are dicts including ``cycle_index``
    and ``soh`` and skipped is a list of (cycle_index, reason) pairs.
    """
    keep = {c.cycle_index for c in cell.cycles}
    if inlier_mask is not None:
        keep = {c.cycle_index for c, ok in zip(cell.cycles, inlier_mask) if ok}
    if reference_capacity_ah is None:
        first_kept = next(c for c in cell.cycles if c.cycle_index in keep)
        reference_capacity_ah = first_kept.discharge_capacity_ah

    rows = []
    skipped = []
    for c in cell.cycles[1:]:
        if c.cycle_index not in keep:
            skipped.append((c.cycle_index, "outlier"))
            continue
        try:
            feats = assemble_features(cell, c.cycle_index, cfg)
        except SegmentUnavailableError as exc:
            skipped.append((c.cycle_index, f"segment unavailable ({exc.threshold})"))
            continue
        except DataError as exc:
            skipped.append((c.cycle_index, str(exc)))
            continue
        feats["soh"] = soh(c.discharge_capacity_ah, reference_capacity_ah)
        feats["cycle_index"] = c.cycle_index
        rows.append(feats)
    return rows, skipped
