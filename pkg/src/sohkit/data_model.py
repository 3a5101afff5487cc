"""Cycle data ingestion, SOH targets, outlier filtering and cell partitioning.

The normalized ingestion format is a per-cell CSV
``cell_id,cycle_index,time_s,voltage_v,current_a,phase,discharge_capacity_ah``
plus a key=value metadata file carrying ``nominal_capacity_ah``,
``charge_current_a`` and ``cut_off_voltage_v``. Vendor-native formats are
out of scope.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError

PHASES = ("cc_charge", "cv_charge", "fast_charge", "discharge", "rest")
ROLES = ("feature_selection", "train", "calibration", "test")

CSV_COLUMNS = [
    "cell_id",
    "cycle_index",
    "time_s",
    "voltage_v",
    "current_a",
    "phase",
    "discharge_capacity_ah",
]


@dataclass
class CycleRecord:
    """One charge/discharge cycle: sampled series plus its measured capacity."""

    cycle_index: int
    time_s: np.ndarray
    voltage_v: np.ndarray
    current_a: np.ndarray
    phase: np.ndarray  # per-sample tag, one of PHASES
    discharge_capacity_ah: float
    cycle_duration_s: float = 0.0

    def __post_init__(self):
        self.time_s = np.asarray(self.time_s, dtype=float)
        self.voltage_v = np.asarray(self.voltage_v, dtype=float)
        self.current_a = np.asarray(self.current_a, dtype=float)
        self.phase = np.asarray(self.phase, dtype=object)
        n = len(self.time_s)
        if not (len(self.voltage_v) == len(self.current_a) == len(self.phase) == n):
            raise DataError(f"cycle {self.cycle_index}: series lengths differ")
        if n >= 2 and np.any(np.diff(self.time_s) < 0):
            raise DataError(f"cycle {self.cycle_index}: time is not monotone non-decreasing")
        if self.discharge_capacity_ah <= 0:
            raise DataError(f"cycle {self.cycle_index}: discharge capacity must be > 0")
        if self.cycle_duration_s == 0.0 and n:
            self.cycle_duration_s = float(self.time_s[-1] - self.time_s[0])

    def phase_mask(self, tag: str) -> np.ndarray:
        return self.phase == tag


@dataclass
class CellHistory:
    """Ordered cycle records for one cell plus its static metadata."""

    cell_id: str
    nominal_capacity_ah: float
    charge_current_a: float
    cut_off_voltage_v: float
    cycles: list[CycleRecord] = field(default_factory=list)
    discharge_current_a: float | None = None

    def __post_init__(self):
        if self.nominal_capacity_ah <= 0:
            raise DataError(f"{self.cell_id}: nominal capacity must be > 0")
        idx = [c.cycle_index for c in self.cycles]
        if idx != sorted(idx):
            raise DataError(f"{self.cell_id}: cycles not ordered by cycle_index")

    def cycle(self, cycle_index: int) -> CycleRecord:
        for c in self.cycles:
            if c.cycle_index == cycle_index:
                return c
        raise DataError(f"{self.cell_id}: no cycle {cycle_index}")


@dataclass
class DatasetManifest:
    """Map cell_id -> role in {feature_selection, train, calibration, test}.

    A feature_selection assignment implies membership of the training set.
    """

    assignments: dict[str, str]

    def __post_init__(self):
        for cid, role in self.assignments.items():
            if role not in ROLES:
                raise ConfigError(f"manifest: unknown role {role!r} for cell {cid!r}")

    def cells_with_role(self, role: str) -> list[str]:
        out = [c for c, r in self.assignments.items() if r == role]
        if role == "train":
            out += self.cells_with_role("feature_selection")
        return sorted(set(out))


@dataclass
class Partition:
    train: list[CellHistory]
    feature_selection: list[CellHistory]
    calibration: list[CellHistory]
    test: list[CellHistory]


@dataclass
class RansacResult:
    inlier_mask: np.ndarray
    insufficient_data: bool = False


def soh(c_i: float, c_1: float) -> float:
    """State of health: capacity at cycle i relative to the first cycle."""
    if c_1 <= 0:
        raise DataError("reference capacity must be > 0")
    return c_i / c_1


def load_manifest(path: str | Path) -> DatasetManifest:
    """Read a ``cell_id,role`` CSV into a DatasetManifest."""
    assignments: dict[str, str] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "cell_id" not in reader.fieldnames or "role" not in reader.fieldnames:
            raise ConfigError(f"{path}: manifest must have columns cell_id,role")
        for row in reader:
            cid = row["cell_id"].strip()
            if cid in assignments:
                raise ConfigError(f"{path}: cell {cid!r} assigned twice")
            assignments[cid] = row["role"].strip()
    return DatasetManifest(assignments)


def _read_metadata(path: Path) -> dict[str, float]:
    meta: dict[str, float] = {}
    for raw in path.read_text(encoding="utf-8").splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"{path}: bad metadata line {line!r}")
        key, val = line.split("=", 1)
        meta[key.strip()] = float(val.strip())
    for required in ("nominal_capacity_ah", "charge_current_a", "cut_off_voltage_v"):
        if required not in meta:
            raise DataError(f"{path}: missing metadata key {required!r}")
    return meta


def load_cell(path: str | Path, metadata_path: str | Path | None = None) -> CellHistory:
    """Parse one cell's cycle CSV (and its sibling ``<stem>.meta`` file).

    Raises DataError with the offending line number for malformed rows and
    names the cycle on non-monotone time.
    """
    path = Path(path)
    if metadata_path is None:
        metadata_path = path.with_suffix(".meta")
    meta = _read_metadata(Path(metadata_path))

    per_cycle: dict[int, dict[str, list]] = {}
    cell_id = None
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in CSV_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise DataError(f"{path}: missing column(s) {', '.join(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                cid = row["cell_id"]
                k = int(row["cycle_index"])
                t = float(row["time_s"])
                v = float(row["voltage_v"])
                i = float(row["current_a"])
                ph = row["phase"]
                cap = float(row["discharge_capacity_ah"])
            except (ValueError, TypeError) as exc:
                raise DataError(f"{path}:{lineno}: malformed row ({exc})") from exc
            if ph not in PHASES:
                raise DataError(f"{path}:{lineno}: unknown phase {ph!r}")
            if cell_id is None:
                cell_id = cid
            elif cid != cell_id:
                raise DataError(f"{path}:{lineno}: multiple cell ids in one file")
            bucket = per_cycle.setdefault(k, {"t": [], "v": [], "i": [], "ph": [], "cap": cap})
            bucket["t"].append(t)
            bucket["v"].append(v)
            bucket["i"].append(i)
            bucket["ph"].append(ph)

    if cell_id is None:
        raise DataError(f"{path}: no data rows")

    cycles = []
    for k in sorted(per_cycle):
        b = per_cycle[k]
        t = np.asarray(b["t"])
        if len(t) >= 2 and np.any(np.diff(t) < 0):
            raise DataError(f"{path}: non-monotone time within cycle {k}")
        cycles.append(
            CycleRecord(
                cycle_index=k,
                time_s=t,
                voltage_v=b["v"],
                current_a=b["i"],
                phase=b["ph"],
                discharge_capacity_ah=b["cap"],
            )
        )
    return CellHistory(
        cell_id=cell_id,
        nominal_capacity_ah=meta["nominal_capacity_ah"],
        charge_current_a=meta["charge_current_a"],
        cut_off_voltage_v=meta["cut_off_voltage_v"],
        discharge_current_a=meta.get("discharge_current_a"),
        cycles=cycles,
    )


def ransac_filter(
    cycle_index: np.ndarray,
    capacity_ah: np.ndarray,
    seed: int = 0,
    n_trials: int = 200,
    min_points: int = 10,
) -> RansacResult:
    """Flag erroneous capacity measurements against a consensus fade model.

    Consensus model is a cubic polynomial of capacity vs cycle index fit to
    200 random minimal samples of 4 points; inliers fall within 3x the median
    absolute residual of the candidate fit. Intended for training cells only;
    test data is left untouched.
    """
    k = np.asarray(cycle_index, dtype=float)
    cap = np.asarray(capacity_ah, dtype=float)
    if k.shape != cap.shape:
        raise DataError("cycle_index and capacity series must have equal length")
    n = len(k)
    if n < min_points:
        return RansacResult(np.ones(n, dtype=bool), insufficient_data=True)

    # Residual floor keeps exact fits from flagging points on clean data.
    floor = 1e-9 + 1e-6 * float(np.median(np.abs(cap)))
    rng = np.random.default_rng(seed)
    best_mask = np.ones(n, dtype=bool)
    best_count = -1
    for _ in range(n_trials):
        sample = rng.choice(n, size=4, replace=False)
        try:
            coeffs = np.polyfit(k[sample], cap[sample], deg=3)
        except np.linalg.LinAlgError:
            continue
        resid = np.abs(cap - np.polyval(coeffs, k))
        thresh = max(3.0 * float(np.median(resid)), floor)
        mask = resid <= thresh
        count = int(mask.sum())
        if count > best_count:
            best_count = count
            best_mask = mask
    # Refit on the consensus inliers for the final mask.
    coeffs = np.polyfit(k[best_mask], cap[best_mask], deg=3)
    resid = np.abs(cap - np.polyval(coeffs, k))
    thresh = max(3.0 * float(np.median(resid[best_mask])), floor)
    return RansacResult(resid <= thresh)


def partition(cells: list[CellHistory], manifest: DatasetManifest) -> Partition:
    """Split cells into train / feature-selection / calibration / test lists.

    Every cell must be assigned exactly once; calibration is disjoint from
    train and test; the feature-selection list is a subset of train.
    """
    by_id = {c.cell_id: c for c in cells}
    unassigned = sorted(set(by_id) - set(manifest.assignments))
    if unassigned:
        raise ConfigError(f"manifest missing cell(s): {', '.join(unassigned)}")
    unknown = sorted(set(manifest.assignments) - set(by_id))
    if unknown:
        raise ConfigError(f"manifest names unknown cell(s): {', '.join(unknown)}")

    buckets: dict[str, list[CellHistory]] = {r: [] for r in ROLES}
    for cid in sorted(by_id):
        buckets[manifest.assignments[cid]].append(by_id[cid])

    train = buckets["train"] + buckets["feature_selection"]
    train.sort(key=lambda c: c.cell_id)
    calibration = buckets["calibration"]
    test = buckets["test"]
    train_ids = {c.cell_id for c in train}
    if {c.cell_id for c in calibration} & ({c.cell_id for c in test} | train_ids):
        raise ConfigError("calibration cells must be disjoint from train and test")
    if train_ids & {c.cell_id for c in test}:
        raise ConfigError("train and test cells overlap")
    return Partition(
        train=train,
        feature_selection=buckets["feature_selection"],
        calibration=calibration,
        test=test,
    )
