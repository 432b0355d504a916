import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import expm

from rmpump.dynamics import (StepperConfig, convergence_gap, evolve_half_filling, evolve_single_excitation,
                             evolve_state, evolve_two_excitations, free_fermion_densities, ground_orbitals,
                             propagate_step, pumped_charge, pumped_charge_double_loop, rm_schedule, step_count)
from rmpump.model import ChainSpec, DisorderRealization, ParamPoint, build_single_particle
from rmpump.schedules import Trajectory, generate_uniform_onsite, named

STATIC = Trajectory("piecewise", 0.0, 0.0, 1.0, knots=((0.0, 5.0, 1.0), (1.0, 5.0, 1.0)))


def _random_hermitian(seed, n):
    r = np.random.default_rng(seed)
    A = r.normal(size=(n, n)) + 1j * r.normal(size=(n, n))
    return A + A.conj().T


def test_zero_hamiltonian_is_identity():
    psi = np.arange(5) + 1j
    np.testing.assert_allclose(propagate_step(np.zeros((5, 5)), 0.3, psi), psi, atol=1e-15)


@given(seed=st.integers(0, 2 ** 31), dt=st.floats(0.001, 1.0))
def test_forward_backward(seed, dt):
    H = _random_hermitian(seed, 8)
    psi = np.random.default_rng(seed + 1).normal(size=8) + 0j
    back = propagate_step(H, -dt, propagate_step(H, dt, psi))
    np.testing.assert_allclose(back, psi, atol=1e-10)


@given(seed=st.integers(0, 2 ** 31), dt=st.floats(0.001, 0.5))
def test_half_steps_compose(seed, dt):
    H = _random_hermitian(seed, 6)
    psi = np.eye(6)[:, 0].astype(complex)
    two = propagate_step(H, dt / 2, propagate_step(H, dt / 2, psi))
    np.testing.assert_allclose(two, propagate_step(H, dt, psi), atol=1e-12)
    np.testing.assert_allclose(propagate_step(H, dt, psi), expm(-2j * np.pi * H * dt) @ psi, atol=1e-12)


def test_frozen_without_couplings():
    traj = Trajectory("ellipse", 0.0, 0.0, 1.0)
    r = evolve_single_excitation(ChainSpec(9, 0.0, "open"), traj, None, 5, 2)
    np.testing.assert_allclose(r.populations[:, 4], 1.0, atol=1e-14)
    np.testing.assert_allclose(r.delta_x, 0.0, atol=1e-12)


def test_clean_pump_moves_two_sites_per_cycle():
    traj, J = named("C4")
    r = evolve_single_excitation(ChainSpec(41, J, "open"), traj, None, 19, 4)
    # mean displacement per cycle over the four cycles
    assert abs(np.mean(r.delta_x) - 2.0) <= 0.1, r.delta_x
    assert np.all(r.delta_x > 1.8)
    assert r.norm_drift <= 1e-9
    assert not r.edge_contaminated


def test_taylor_matches_exact_stepper():
    traj, J = named("C4")
    ch = ChainSpec(21, J, "open")
    a = evolve_single_excitation(ch, traj, None, 9, 1, StepperConfig(method="taylor"))
    b = evolve_single_excitation(ch, traj, None, 9, 1, StepperConfig(method="eigh"))
    np.testing.assert_allclose(a.populations, b.populations, atol=1e-8)


def test_stepper_against_dense_exponential():
    # a fixed Hamiltonian propagated by the kernel equals expm
    ch = ChainSpec(12, 2.0, "open")
    dis = generate_uniform_onsite(ch, 3.0, seed=2)
    sched = rm_schedule(ch, STATIC, dis)
    psi0 = np.zeros(12, complex)
    psi0[3] = 1
    r = evolve_state(sched, psi0, 1)
    H = build_single_particle(ch, ParamPoint(5.0, 1.0), dis)
    np.testing.assert_allclose(r.final_state, expm(-2j * np.pi * H * 1.0) @ psi0, atol=1e-10)


def test_step_count_respects_phase_bound():
    traj, J = named("C_on")
    sched = rm_schedule(ChainSpec(42, J, "periodic"), traj)
    st_ = StepperConfig()
    n = step_count(sched, traj.T, st_)
    assert traj.T / n * sched.norm_bound(sched.coef(np.linspace(0, traj.T, 257))) <= st_.max_phase + 1e-12


def test_strong_disorder_stops_transport():
    traj, J = named("C4")
    ch = ChainSpec(41, J, "open")
    dx = [np.mean(evolve_single_excitation(ch, traj, generate_uniform_onsite(ch, 36.0, seed=1, stream=i),
                                           19, 4).delta_x) for i in range(20)]
    assert abs(np.mean(dx)) <= 0.3


@pytest.mark.slow
def test_same_parity_pair_moves_together():
    traj, J = named("C4")
    r = evolve_two_excitations(ChainSpec(28, J, "open"), traj, None, (9, 11), 1)
    np.testing.assert_allclose(r.populations.sum(axis=1), 2.0, atol=1e-9)
    assert r.delta_x[0] == pytest.approx(4.0, abs=0.2)


@given(i=st.integers(1, 12), j=st.integers(1, 12), seed=st.integers(0, 1000))
def test_pair_densities_match_slater(i, j, seed):
    if i == j:
        j = i % 12 + 1
    traj, J = named("C4")
    ch = ChainSpec(12, J, "open")
    dis = generate_uniform_onsite(ch, 4.0, seed=seed)
    hc = evolve_two_excitations(ch, traj, dis, (i, j), 1)
    ff = free_fermion_densities(ch, traj, dis, (i, j), 1)
    assert np.max(np.abs(hc.populations - ff)) <= 1e-8


def test_static_half_filling():
    r = evolve_half_filling(ChainSpec(20, 2.0, "periodic"), STATIC, None, record_every=8)
    assert abs(r.pumped) <= 1e-9
    assert np.max(np.ptp(r.densities, axis=0)) <= 1e-9
    assert r.ortho_drift <= 1e-9


def test_ground_orbitals_refuse_degeneracy():
    with pytest.raises(ValueError):
        ground_orbitals(build_single_particle(ChainSpec(8, 1.0, "periodic"), ParamPoint(0, 0)), 4)


def test_clean_on_pump_quantized():
    traj, J = named("C_on")
    ch = ChainSpec(42, J, "periodic")
    r = evolve_half_filling(ch, traj)
    assert r.pumped == pytest.approx(1.0, abs=0.02)
    assert r.subspace_fidelity() >= 0.999
    assert r.ortho_drift <= 1e-9


def test_reverse_pumps_back():
    traj, J = named("C_on")
    assert pumped_charge(ChainSpec(42, J, "periodic"), traj.reversed()) == pytest.approx(-1.0, abs=0.02)


def test_clean_double_loop_cancels():
    traj, J = named("C_dl")
    ch = ChainSpec(42, J, "periodic")
    assert abs(pumped_charge_double_loop(ch, traj, method="sum")) <= 0.1


def test_convergence_gate():
    traj, J = named("C_on")
    ch = ChainSpec(42, J, "periodic")
    assert convergence_gap(lambda s: pumped_charge(ch, traj, None, s)) <= 1e-3


def test_disorder_realization_shape_checked():
    traj, J = named("C4")
    with pytest.raises(ValueError):
        evolve_single_excitation(ChainSpec(9, J, "open"), traj,
                                 DisorderRealization(np.zeros(8), np.zeros(8)), 3, 1)
