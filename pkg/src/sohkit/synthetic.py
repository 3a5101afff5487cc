"""Deterministic synthetic cells with known ground-truth degradation.

The fade model is a double exponential a*exp(b*k) + c*exp(d*k), rebased so
cycle 1 has SOH exactly 1. Ageing shows up the way real cells age: the CC
charge time shrinks proportionally to SOH, the CV time grows inversely, the
CV current decays exponentially, start-of-charge voltage drifts upward and
the pseudo resistance climbs. Generated files round-trip losslessly through
the normalized CSV schema.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data_model import CellHistory, CycleRecord
from .errors import ConfigError

PROTOCOLS = ("cc_cv", "cc", "fast_cc_cv")


@dataclass
class SyntheticCellSpec:
    """Recipe for one synthetic cell."""

    cell_id: str = "syn-0"
    seed: int = 0
    n_cycles: int = 100
    protocol: str = "cc_cv"
    nominal_capacity_ah: float = 1.1
    charge_c_rate: float = 0.5
    discharge_c_rate: float = 1.0
    cut_off_voltage_v: float = 4.2
    # Double-exponential fade coefficients (before rebasing to SOH(1)=1).
    # The small negative fast-growing term produces the knee-shaped decline.
    fade_a: float = -0.0002
    fade_b: float = 0.05
    fade_c: float = 1.0
    fade_d: float = -0.0015
    voltage_noise_v: float = 0.0
    current_noise_a: float = 0.0
    capacity_noise_ah: float = 0.0
    start_voltage_v: float = 3.0
    base_cc_duration_s: float = 3600.0
    base_cv_tau_s: float = 600.0
    samples_per_phase: int = 40
    outlier_cycles: list[int] = field(default_factory=list)
    outlier_scale: float = 0.8  # multiplies capacity on outlier cycles

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"unknown protocol {self.protocol!r}")
        fade = self.fade(np.arange(1, self.n_cycles + 1))
        if fade.min() <= 0.5 or fade.max() > 1.05:
            raise ConfigError("fade curve must stay in (0.5, 1.05]")

    def fade(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=float)
        raw = self.fade_a * np.exp(self.fade_b * k) + self.fade_c * np.exp(self.fade_d * k)
        ref = self.fade_a * np.exp(self.fade_b) + self.fade_c * np.exp(self.fade_d)
        return raw / ref


def _charge_samples(spec: SyntheticCellSpec, soh_k: float, t0: float):
    """CC (and CV) charge phases for one cycle; returns (t, v, i, phase, t_end)."""
    i_chg = spec.charge_c_rate * spec.nominal_capacity_ah
    n = spec.samples_per_phase
    t_parts, v_parts, i_parts, ph_parts = [], [], [], []

    # Start-of-charge voltage drifts upward as the cell ages.
    v0 = spec.start_voltage_v + 0.25 * (1.0 - soh_k)
    t = t0

    if spec.protocol == "fast_cc_cv":
        # High-current step to ~80% SOC before the diagnostic CC-CV part.
        fast_dur = 0.3 * spec.base_cc_duration_s * soh_k
        tt = np.linspace(0.0, fast_dur, n, endpoint=False)
        v_fast = v0 + (3.6 - v0) * tt / fast_dur
        t_parts.append(t + tt)
        v_parts.append(v_fast)
        i_parts.append(np.full(n, 4.0 * i_chg))
        ph_parts.append(["fast_charge"] * n)
        t += fast_dur
        v0 = 3.6

    # CC: linear voltage ramp v0 -> cut-off, duration proportional to SOH.
    cc_dur = spec.base_cc_duration_s * soh_k
    tt = np.linspace(0.0, cc_dur, n, endpoint=True)
    v_cc = v0 + (spec.cut_off_voltage_v - v0) * tt / cc_dur
    t_parts.append(t + tt)
    v_parts.append(v_cc)
    i_parts.append(np.full(n, i_chg))
    ph_parts.append(["cc_charge"] * n)
    t += cc_dur

    if spec.protocol != "cc":
        # CV: exponential current decay with a time constant that grows as
        # the cell ages, so CVCT increases while CCCT decreases.
        tau = spec.base_cv_tau_s / soh_k
        cv_dur = tau * np.log(1.0 / 0.05)  # down to 5% of charge current
        tt = np.linspace(tau * 1e-3, cv_dur, n)
        t_parts.append(t + tt)
        v_parts.append(np.full(n, spec.cut_off_voltage_v))
        i_parts.append(i_chg * np.exp(-tt / tau))
        ph_parts.append(["cv_charge"] * n)
        t += cv_dur

    return t_parts, v_parts, i_parts, ph_parts, t


def generate_cell(spec: SyntheticCellSpec) -> CellHistory:
    """Emit a full cycle history whose true SOH follows the fade model."""
    rng = np.random.default_rng(spec.seed)
    i_dchg = spec.discharge_c_rate * spec.nominal_capacity_ah
    fade = spec.fade(np.arange(1, spec.n_cycles + 1))

    cycles = []
    for k in range(1, spec.n_cycles + 1):
        soh_k = float(fade[k - 1])
        t_parts, v_parts, i_parts, ph_parts, t = _charge_samples(spec, soh_k, 0.0)

        # Rest, then discharge. The first loaded sample shows the ohmic drop
        # that the pseudo-resistance feature reads; resistance grows with age.
        n = spec.samples_per_phase
        rest_dur = 300.0
        tt = np.linspace(0.0, rest_dur, 5, endpoint=False)
        t_parts.append(t + tt)
        v_parts.append(np.full(5, spec.cut_off_voltage_v))
        i_parts.append(np.zeros(5))
        ph_parts.append(["rest"] * 5)
        t += rest_dur

        resistance = 0.05 + 0.10 * (1.0 - soh_k)
        v_drop = resistance * i_dchg
        dis_dur = 3600.0 * soh_k * spec.nominal_capacity_ah / i_dchg
        tt = np.linspace(0.0, dis_dur, n)
        v_dis = (spec.cut_off_voltage_v - v_drop) - 1.2 * tt / dis_dur
        t_parts.append(t + tt)
        v_parts.append(v_dis)
        i_parts.append(np.full(n, -i_dchg))
        ph_parts.append(["discharge"] * n)
        t += dis_dur

        time_s = np.concatenate(t_parts)
        voltage = np.concatenate(v_parts)
        current = np.concatenate(i_parts)
        phase = [p for part in ph_parts for p in part]

        if spec.voltage_noise_v > 0:
            voltage = voltage + rng.normal(0.0, spec.voltage_noise_v, size=len(voltage))
            # The charger terminates CC on the measured voltage, so the
            # recorded CC trace is capped at the cut-off and ends exactly on it.
            cc_idx = np.nonzero(np.asarray(phase) == "cc_charge")[0]
            if len(cc_idx):
                voltage[cc_idx] = np.minimum(voltage[cc_idx], spec.cut_off_voltage_v)
                voltage[cc_idx[-1]] = spec.cut_off_voltage_v
        if spec.current_noise_a > 0:
            noisy = current + rng.normal(0.0, spec.current_noise_a, size=len(current))
            current = np.where(np.asarray(phase) == "rest", current, noisy)

        cap = spec.nominal_capacity_ah * soh_k
        if spec.capacity_noise_ah > 0:
            cap += float(rng.normal(0.0, spec.capacity_noise_ah))
        if k in spec.outlier_cycles:
            cap *= spec.outlier_scale

        cycles.append(CycleRecord(
            cycle_index=k,
            time_s=time_s,
            voltage_v=voltage,
            current_a=current,
            phase=phase,
            discharge_capacity_ah=float(cap),
        ))

    return CellHistory(
        cell_id=spec.cell_id,
        nominal_capacity_ah=spec.nominal_capacity_ah,
        charge_current_a=spec.charge_c_rate * spec.nominal_capacity_ah,
        discharge_current_a=i_dchg,
        cut_off_voltage_v=spec.cut_off_voltage_v,
        cycles=cycles,
    )


def write_cell_csv(cell: CellHistory, out_dir: str | Path) -> Path:
    """Write one cell in the normalized ingestion format (CSV + .meta)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{cell.cell_id}.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cell_id", "cycle_index", "time_s", "voltage_v",
                         "current_a", "phase", "discharge_capacity_ah"])
        for c in cell.cycles:
            for t, v, i, ph in zip(c.time_s, c.voltage_v, c.current_a, c.phase):
                writer.writerow([cell.cell_id, c.cycle_index, repr(float(t)),
                                 repr(float(v)), repr(float(i)), ph,
                                 repr(c.discharge_capacity_ah)])
    meta_path = csv_path.with_suffix(".meta")
    lines = [
        f"nominal_capacity_ah = {cell.nominal_capacity_ah!r}",
        f"charge_current_a = {cell.charge_current_a!r}",
        f"cut_off_voltage_v = {cell.cut_off_voltage_v!r}",
    ]
    if cell.discharge_current_a is not None:
        lines.append(f"discharge_current_a = {cell.discharge_current_a!r}")
    meta_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return csv_path


def generate_fleet(n_cells: int, seed: int = 0, protocol: str = "cc_cv",
                   noise: float = 0.0, n_cycles: int = 100,
                   capacity_noise_ah: float | None = None) -> list[CellHistory]:
    """A family of cells with per-cell fade parameters drawn from ranges."""
    root = np.random.SeedSequence(seed)
    cells = []
    for i, ss in enumerate(root.spawn(n_cells)):
        rng = np.random.default_rng(ss)
        spec = SyntheticCellSpec(
            cell_id=f"syn-{i:02d}",
            seed=int(rng.integers(0, 2**31 - 1)),
            n_cycles=n_cycles,
            protocol=protocol,
            nominal_capacity_ah=float(rng.uniform(1.0, 1.2)),
            charge_c_rate=float(rng.uniform(0.4, 0.6)),
            discharge_c_rate=float(rng.uniform(0.9, 1.1)),
            fade_a=float(rng.uniform(-0.0003, -0.0001)),
            fade_b=float(rng.uniform(0.04, 0.06)),
            fade_d=float(rng.uniform(-0.002, -0.001)),
            voltage_noise_v=noise * 0.005,
            current_noise_a=noise * 0.002,
            capacity_noise_ah=(noise * 0.002 if capacity_noise_ah is None
                               else capacity_noise_ah),
        )
        cells.append(generate_cell(spec))
    return cells
