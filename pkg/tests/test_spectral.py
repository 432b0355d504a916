import numpy as np
import pytest
from hypothesis import given, strategies as st

from rmpump.model import ChainSpec, ParamPoint, bloch_energies, build_single_particle
from rmpump.schedules import Trajectory, generate_uniform_onsite, named
from rmpump.spectral import (GAP_TOL, GapClosedError, _wilson_phase, band_gap, check_hermitian, delta_polarization, eigh,
                             ipr, ipr_spectrum, lower_band_states, mean_ipr, min_instantaneous_gap, polarization,
                             wannier_center, wannier_state)


def test_eigh_diagonal():
    es = eigh(np.diag([3.0, -1.0]))
    np.testing.assert_allclose(es.values, [-1.0, 3.0])


def test_eigh_rejects_non_hermitian():
    with pytest.raises(ValueError):
        eigh(np.array([[0, 1], [0, 0]], dtype=float))
    with pytest.raises(ValueError):
        check_hermitian(np.array([[0, 1 + 1e-9], [1, 0]]))


@given(seed=st.integers(0, 2 ** 31), n=st.integers(1, 30))
def test_eigh_reconstructs(seed, n):
    r = np.random.default_rng(seed)
    A = r.normal(size=(n, n)) + 1j * r.normal(size=(n, n))
    H = A + A.conj().T
    np.testing.assert_allclose(eigh(H).reconstruct(), H, atol=1e-9)


def test_ssh_extremes_match_bloch():
    J, d = 2.0, 2.5 - 1.0
    w = eigh(build_single_particle(ChainSpec(800, J, "periodic"), ParamPoint(0.0, d))).values
    assert w[-1] == pytest.approx(2 * J, abs=1e-6)
    assert w[0] == pytest.approx(-2 * J, abs=1e-6)
    assert w[400] == pytest.approx(2 * abs(d), abs=1e-6)
    assert w[399] == pytest.approx(-2 * abs(d), abs=1e-6)


def test_min_gap_equals_bloch_minimum():
    # half gap of the clean periodic chain is min over the cycle and k of E(k)
    traj, J = named("C_on")
    chain = ChainSpec(200, J, "periodic")
    rep = min_instantaneous_gap(chain, traj)
    t = np.linspace(0, traj.T, 2001)
    k = np.linspace(-np.pi / 2, np.pi / 2, 2001)
    D, dl = traj.arrays(t)
    f2 = (J + dl[:, None]) ** 2 + (J - dl[:, None]) ** 2 + 2 * (J ** 2 - dl[:, None] ** 2) * np.cos(2 * k)[None]
    E = np.sqrt(D[:, None] ** 2 + f2)
    assert rep.min_gap == pytest.approx(E.min(), rel=1e-3)
    assert rep.min_gap == pytest.approx(4.0, rel=1e-3)


def test_gap_through_origin_is_zero():
    traj = Trajectory("ellipse", 10.0, 0.0, 1.0)
    rep = min_instantaneous_gap(ChainSpec(40, 2.0, "periodic"), traj)
    assert rep.min_gap < 1e-6


@pytest.mark.slow
def test_ensemble_gap_shrinks_with_disorder():
    # strict decrease while the mean gap is open; once it falls below the
    # closure tolerance it stays closed (the residual is avoided-crossing noise)
    traj, J = named("C_on")
    chain = ChainSpec(42, J, "periodic")
    means = []
    for V in (0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 15.0, 20.0, 30.0):
        gaps = [min_instantaneous_gap(chain, traj, generate_uniform_onsite(chain, V, seed=4, stream=i),
                                      n_time=128).min_gap for i in range(20)]
        means.append(np.mean(gaps))
    means = np.array(means)
    closed = np.flatnonzero(means < GAP_TOL)
    assert closed.size and np.all(means[closed[0]:] < GAP_TOL), means
    assert np.all(np.diff(means[:closed[0] + 1]) < 0), means


def test_ipr_limits():
    L = 17
    e = np.zeros(L)
    e[4] = 1.0
    assert ipr(e) == 1.0
    assert ipr(np.full(L, 1 / np.sqrt(L))) == pytest.approx(1 / L)
    with pytest.raises(ValueError):
        ipr(np.ones(3))


@given(seed=st.integers(0, 2 ** 31), L=st.integers(2, 40), V=st.floats(0, 50))
def test_ipr_bounds(seed, L, V):
    if L % 2:
        L += 1
    ch = ChainSpec(L, 2.0, "periodic")
    vals = ipr_spectrum(build_single_particle(ch, ParamPoint(1.0, 0.5), generate_uniform_onsite(ch, V, seed=seed)))
    assert np.all(vals >= 1 / L - 1e-12) and np.all(vals <= 1 + 1e-12)


def test_ipr_grows_with_disorder():
    ch = ChainSpec(100, 2.0, "periodic")
    p = ParamPoint(0.0, 2.5)
    means = [mean_ipr(ch, p, [generate_uniform_onsite(ch, V, seed=8, stream=i) for i in range(20)])[0]
             for V in (0.0, 5.0, 15.0, 40.0)]
    assert np.all(np.diff(means) > 0), means


@given(d=st.floats(0.05, 5).flatmap(lambda x: st.sampled_from([x, -x])))
def test_polarization_quantized_at_zero_delta(d):
    P = polarization(ParamPoint(0.0, d), 2.0, 512)
    assert min(abs(P), abs(abs(P) - 1.0)) < 1e-6


@given(seed=st.integers(0, 2 ** 31), D=st.floats(-10, 10), d=st.floats(-3, 3))
def test_wilson_loop_gauge_invariant(seed, D, d):
    u, gaps = lower_band_states(D, d, 2.0, 128)
    if gaps.min() < 1e-3:
        return
    phases = np.exp(1j * np.random.default_rng(seed).uniform(0, 2 * np.pi, 128))
    a, b = _wilson_phase(u), _wilson_phase(u * phases[:, None])
    assert abs(np.angle(np.exp(1j * (a - b)))) < 1e-10


def test_polarization_gap_closed():
    with pytest.raises(GapClosedError):
        polarization(ParamPoint(0.0, 0.0), 2.0)


@pytest.mark.parametrize("name,nu", [("C_on", 1), ("C4", 1), ("C1", -1), ("C_sl", 0), ("C2", 0), ("C3", 0)])
def test_delta_polarization(name, nu):
    traj, J = named(name)
    assert abs(delta_polarization(traj, J) - nu) <= 1e-6
    assert abs(delta_polarization(traj.reversed(), J) + nu) <= 1e-6


def test_band_gap_closed_form():
    assert band_gap(ParamPoint(0.0, 1.5), 2.0) == pytest.approx(6.0)


def test_wannier_dimer_limit():
    J = 2.0
    w = wannier_state(ParamPoint(0.0, J), J, home=8, n_k=32)
    p = np.abs(w) ** 2
    assert p.sum() == pytest.approx(1.0)
    assert 1.0 - p[16] - p[17] <= 1e-3


@pytest.mark.parametrize("D,d", [(0.0, 1.0), (5.0, 1.0), (-3.0, 0.5), (2.0, 1.5)])
def test_wannier_com_matches_center(D, d):
    p = ParamPoint(D, d)
    n_k, home = 64, 32
    w = wannier_state(p, 2.0, home=home, n_k=n_k)
    x = np.arange(2 * n_k)
    com = np.sum(x * np.abs(w) ** 2) - 2 * home
    assert np.linalg.norm(w) == pytest.approx(1.0)
    assert com == pytest.approx(wannier_center(p, 2.0, n_k), abs=1e-3)
