import numpy as np
import pytest

from sohkit.data_model import CellHistory, CycleRecord
from sohkit.segments import ThresholdConfig
from sohkit.synthetic import SyntheticCellSpec, generate_cell


def make_ramp_cycle(cycle_index=1, v0=3.0, v1=4.2, duration=3600.0, n=121,
                    capacity=1.1, with_cv=True, with_discharge=True):
    """CC ramp v0 -> v1, optional exponential CV decay, rest and discharge."""
    t_cc = np.linspace(0.0, duration, n)
    v_cc = v0 + (v1 - v0) * t_cc / duration
    t, v, i, ph = [t_cc], [v_cc], [np.full(n, 1.1)], [["cc_charge"] * n]
    t_end = duration
    if with_cv:
        tau = 300.0
        tt = np.linspace(1.0, 3.0 * tau, n)
        t.append(t_end + tt)
        v.append(np.full(n, v1))
        i.append(1.1 * np.exp(-tt / tau))
        ph.append(["cv_charge"] * n)
        t_end += 3.0 * tau
    if with_discharge:
        t.append(np.array([t_end + 10.0, t_end + 20.0]))
        v.append(np.array([v1, v1]))
        i.append(np.zeros(2))
        ph.append(["rest"] * 2)
        t_end += 20.0
        tt = np.linspace(1.0, 3600.0, n)
        t.append(t_end + tt)
        v.append(v1 - 0.1 - 1.0 * tt / 3600.0)
        i.append(np.full(n, -1.0))
        ph.append(["discharge"] * n)
    return CycleRecord(
        cycle_index=cycle_index,
        time_s=np.concatenate(t),
        voltage_v=np.concatenate(v),
        current_a=np.concatenate(i),
        phase=[p for part in ph for p in part],
        discharge_capacity_ah=capacity,
    )


@pytest.fixture
def ramp_cycle():
    return make_ramp_cycle()


@pytest.fixture
def thresholds():
    return ThresholdConfig(v_high=4.2, i_high=1.1)


@pytest.fixture(scope="session")
def clean_cell():
    """Noise-free synthetic CC-CV cell, 40 cycles."""
    return generate_cell(SyntheticCellSpec(cell_id="clean", seed=7, n_cycles=40))


@pytest.fixture(scope="session")
def noisy_cell():
    return generate_cell(SyntheticCellSpec(
        cell_id="noisy", seed=8, n_cycles=40,
        voltage_noise_v=0.003, current_noise_a=0.002, capacity_noise_ah=0.002,
    ))
