import numpy as np
import pytest
from hypothesis import given, strategies as st

from rmpump.schedules import Trajectory, named
from rmpump.spectral import GapClosedError
from rmpump.topology import berry_grid, chern_number

EXPECTED = {"C1": -1, "C2": 0, "C3": 0, "C4": 1, "C_on": 1, "C_hop": 1, "C_sl": 0}


@pytest.mark.parametrize("name", sorted(EXPECTED))
def test_preset_chern_numbers(name):
    traj, J = named(name)
    assert chern_number(traj, J) == EXPECTED[name]
    assert chern_number(traj, J, 64, 64) == EXPECTED[name]


@pytest.mark.parametrize("name", ["C1", "C4", "C_sl"])
def test_reversal_negates(name):
    traj, J = named(name)
    assert chern_number(traj.reversed(), J) == -EXPECTED[name]


@given(ks=st.floats(0, 1), ts=st.floats(0, 1))
def test_grid_offset_invariance(ks, ts):
    traj, J = named("C4")
    assert berry_grid(traj, J, 32, 32, ks, ts).total == pytest.approx(1.0, abs=1e-9)


@given(D=st.floats(1, 20), d=st.floats(0.5, 3), J=st.floats(0.5, 4))
def test_ellipse_about_origin(D, d, J):
    assert chern_number(Trajectory("ellipse", D, min(d, 0.9 * J) if d > J else d, 1.0), J) == 1


def test_flux_sums_to_integer():
    traj, J = named("C_on")
    g = berry_grid(traj, J)
    assert np.all(np.abs(g.field) < np.pi)
    assert g.field.sum() / (2 * np.pi) == pytest.approx(1.0, abs=1e-10)


def test_gap_closing_raises():
    with pytest.raises(GapClosedError):
        chern_number(Trajectory("ellipse", 10.0, 0.0, 1.0), 2.0)


def test_double_loop_net_zero():
    traj, J = named("C_dl")
    assert chern_number(traj, J, 64, 128) == 0
