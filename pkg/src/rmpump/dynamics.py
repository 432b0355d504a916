"""Time evolution of one excitation, two hard-core excitations and the half-filled Fermi sea.

Every step applies the exact exponential of the Hamiltonian sampled at the
step midpoint. Nearest-neighbour chains go through a compiled Taylor
propagator (:mod:`rmpump._kernels`) whose order is chosen from a norm bound so
the truncation error stays below double precision; ``method="eigh"`` switches
to a dense eigendecomposition per step, which is slower but serves as a
reference.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse.linalg as spla

from . import _kernels
from .model import (ChainSpec, DisorderRealization, ParamPoint, bonds_to_dense, build_single_particle,
                    build_two_excitation, chain_bands, pair_basis)
from .schedules import Trajectory
from .spectral import check_hermitian

EDGE_THRESHOLD = 0.01


@dataclass(frozen=True)
class StepperConfig:
    """Time-step control.

    Parameters
    ----------
    steps_per_period : int
        Minimum number of steps per period.
    max_phase : float
        Upper bound on ``dt * f_max`` with ``f_max`` a norm bound of the
        Hamiltonian [MHz]; more steps are taken when needed.
    norm_tol : float
        Allowed drift of norms or orbital overlaps before a run is flagged.
    reortho_tol : float
        Orbital overlap drift that triggers a QR re-orthonormalization.
    method : str
        ``"taylor"`` (compiled banded propagator) or ``"eigh"`` (dense).
    """

    steps_per_period: int = 512
    max_phase: float = 0.02
    norm_tol: float = 1e-9
    reortho_tol: float = 1e-8
    method: str = "taylor"

    def __post_init__(self):
        if self.steps_per_period < 64:
            raise ValueError("steps_per_period must be >= 64")
        if not 0 < self.max_phase <= 0.02:
            raise ValueError("max_phase must lie in (0, 0.02]")
        if self.method not in ("taylor", "eigh"):
            raise ValueError("method must be 'taylor' or 'eigh'")

    def refined(self, factor: int = 2) -> "StepperConfig":
        return StepperConfig(self.steps_per_period * factor, self.max_phase / factor,
                             self.norm_tol, self.reortho_tol, self.method)


@dataclass(eq=False)
class EvolutionResult:
    """Recorded populations and centre of mass of an evolution.

    ``com`` uses 1-based site labels, ``delta_x[m]`` is the CoM shift during
    cycle ``m + 1``.
    """

    times: np.ndarray
    populations: np.ndarray
    com: np.ndarray
    delta_x: np.ndarray
    final_state: np.ndarray
    norm_drift: float
    edge_population: float
    n_steps: int

    @property
    def edge_contaminated(self) -> bool:
        return self.edge_population > EDGE_THRESHOLD


@dataclass(eq=False)
class SlaterResult:
    """Half-filling run: orbitals, current series and recorded densities."""

    times: np.ndarray
    current: np.ndarray
    step_times: np.ndarray
    densities: np.ndarray
    orbitals: np.ndarray
    initial_orbitals: np.ndarray
    ortho_drift: float
    n_reortho: int

    @property
    def pumped(self) -> float:
        """``2*pi * int <J> dt``; the current is in cyclic MHz, so this is ``dQ/d``."""
        return float(2 * np.pi * np.trapezoid(self.current, self.step_times))

    def subspace_fidelity(self) -> float:
        """``|det(X0^dagger X)|``: 1 when the final span equals the initial one."""
        return float(abs(np.linalg.det(self.initial_orbitals.conj().T @ self.orbitals)))


# ---------------------------------------------------------------------------
# banded schedules


@dataclass(eq=False)
class BandedSchedule:
    """Nearest-neighbour Hamiltonian ``H(t) = H0 + sum_r c_r(t) B_r``.

    ``diag_basis[r]`` and ``bond_basis[r]`` hold the on-site and bond parts of
    ``B_r``; ``coef(t)`` returns an array of shape ``(len(t), R)``.
    """

    L: int
    periodic: bool
    diag0: np.ndarray
    bond0: np.ndarray
    diag_basis: np.ndarray
    bond_basis: np.ndarray
    coef: Callable[[np.ndarray], np.ndarray]
    period: float

    def bands(self, t: float):
        c = self.coef(np.atleast_1d(float(t)))[0]
        return self.diag0 + c @ self.diag_basis, self.bond0 + c @ self.bond_basis

    def dense(self, t: float) -> np.ndarray:
        d, b = self.bands(t)
        return bonds_to_dense(_Geom(self.L, self.periodic), d, b)

    def norm_bound(self, coefs: np.ndarray) -> float:
        """Gershgorin bound on ``||H||``, maximized over the coefficient rows in ``coefs``."""
        out = 0.0
        for a in range(0, len(coefs), 8192):
            c = coefs[a:a + 8192]
            d = np.abs(self.diag0 + c @ self.diag_basis)
            b = np.abs(self.bond0 + c @ self.bond_basis)
            row = d.copy()
            nb = b.shape[1]
            row[:, :nb] += b
            row[:, (np.arange(nb) + 1) % self.L] += b
            out = max(out, float(np.max(row)))
        return out


@dataclass(frozen=True)
class _Geom:
    L: int
    periodic: bool

    @property
    def n_bonds(self):
        return self.L if self.periodic else self.L - 1


def rm_schedule(chain: ChainSpec, traj: Trajectory, dis: Optional[DisorderRealization] = None) -> BandedSchedule:
    """Rice-Mele chain along ``traj`` as a two-coefficient banded schedule."""
    onsite0, bond0 = chain_bands(chain, ParamPoint(0.0, 0.0), dis)
    s = chain.stagger
    nb = chain.n_bonds
    diag_basis = np.stack([s, np.zeros(chain.L)])
    bond_basis = np.stack([np.zeros(nb), s[:nb]])

    def coef(t):
        D, d = traj.arrays(t)
        return np.stack([np.broadcast_to(D, np.shape(t)), np.broadcast_to(d, np.shape(t))], axis=-1)

    return BandedSchedule(chain.L, chain.periodic, onsite0, bond0, diag_basis, bond_basis, coef, traj.T)


def step_count(sched: BandedSchedule, duration: float, stepper: StepperConfig,
               min_steps: int = 0, multiple: int = 1) -> int:
    """Steps for ``duration`` honouring the per-period minimum and the phase bound."""
    probe = sched.coef(np.linspace(0.0, duration, 4097))
    fmax = sched.norm_bound(probe)
    n_periods = duration / sched.period
    n = max(int(math.ceil(stepper.steps_per_period * n_periods - 1e-9)),
            int(math.ceil(duration * fmax / stepper.max_phase)), min_steps, 1)
    return int(math.ceil(n / multiple) * multiple)


def _orbitals_to_real(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=complex)
    return np.ascontiguousarray(np.concatenate([X.real, X.imag], axis=1))


def _real_to_orbitals(Z: np.ndarray) -> np.ndarray:
    M = Z.shape[1] // 2
    return Z[:, :M] + 1j * Z[:, M:]


def _ortho_drift(X: np.ndarray) -> float:
    G = X.conj().T @ X
    return float(np.max(np.abs(G - np.eye(G.shape[0]))))


def integrate(sched: BandedSchedule, X0: np.ndarray, n_steps: int, dt: float,
              stepper: StepperConfig = StepperConfig(), want_current: bool = False,
              record_every: int = 0, chunk: int = 4096, t0: float = 0.0):
    """Propagate orbitals ``X0`` (``L x M``) through ``n_steps`` steps of ``dt``.

    Returns ``(X, current, densities, n_reortho, max_drift)``. ``current[i]`` is
    the current at ``t0 + i*dt`` (``n_steps + 1`` values when requested);
    ``densities`` holds the site densities (summed over orbitals) every
    ``record_every`` steps including the initial state.
    """
    X = np.array(X0, dtype=complex, copy=True)
    if X.ndim == 1:
        X = X[:, None]
    nrec = (n_steps // record_every + 1) if record_every > 0 else 0
    dens = np.zeros((max(nrec, 1), sched.L))
    cur = np.zeros(n_steps + 1 if want_current else 1)
    n_reortho, max_drift, rec = 0, 0.0, 0
    M = X.shape[1]
    done = 0
    while done < n_steps or (done == 0 and n_steps == 0):
        m = min(chunk, n_steps - done)
        if record_every > 0:
            m = max(record_every, (m // record_every) * record_every) if m >= record_every else m
        tm = t0 + (done + 0.5 + np.arange(m)) * dt
        te = t0 + (done + np.arange(m + 1)) * dt
        cm = np.ascontiguousarray(sched.coef(tm), dtype=float)
        ce = np.ascontiguousarray(sched.coef(te), dtype=float) if want_current else cm[:1]
        sub_dens = np.zeros(((m // record_every + 1) if record_every > 0 else 1, sched.L))
        sub_cur = np.zeros(m + 1 if want_current else 1)
        stride = record_every if record_every > 0 else 0
        if stepper.method == "taylor":
            theta = 2 * np.pi * dt * sched.norm_bound(cm)
            nterms = _kernels.taylor_order(theta)
            Z = _orbitals_to_real(X)
            _kernels.evolve_banded(Z, dt, nterms, sched.periodic, sched.diag0, sched.bond0,
                                   sched.diag_basis, sched.bond_basis, cm, ce, want_current,
                                   stride, sub_dens, sub_cur)
            X = _real_to_orbitals(Z)
        else:
            X = _dense_chunk(sched, X, cm, ce, dt, want_current, stride, sub_dens, sub_cur)
        # stitch outputs: the first entries duplicate the previous chunk's last ones
        if want_current:
            cur[done:done + m + 1] = sub_cur
        if record_every > 0:
            k = m // record_every + 1
            dens[rec:rec + k] = sub_dens[:k]
            rec += k - 1
        done += m
        drift = _ortho_drift(X)
        max_drift = max(max_drift, drift)
        if M > 1 and drift > stepper.reortho_tol:
            X, _ = np.linalg.qr(X)
            n_reortho += 1
        if n_steps == 0:
            break
    return X, cur, dens[:nrec] if record_every > 0 else dens[:0], n_reortho, max_drift


def _dense_chunk(sched, X, cm, ce, dt, want_current, stride, dens, cur):
    g = _Geom(sched.L, sched.periodic)
    from .model import current_expectation

    def bands(c):
        return sched.diag0 + c @ sched.diag_basis, sched.bond0 + c @ sched.bond_basis

    rec = 0
    if stride:
        dens[0] = np.sum(np.abs(X) ** 2, axis=1)
        rec = 1
    if want_current:
        cur[0] = current_expectation(bands(ce[0])[1], X, sched.periodic)
    for i in range(len(cm)):
        d, b = bands(cm[i])
        X = propagate_step(bonds_to_dense(g, d, b), dt, X)
        if want_current:
            cur[i + 1] = current_expectation(bands(ce[i + 1])[1], X, sched.periodic)
        if stride and (i + 1) % stride == 0:
            dens[rec] = np.sum(np.abs(X) ** 2, axis=1)
            rec += 1
    return X


def propagate_step(H_mid: np.ndarray, dt: float, state: np.ndarray) -> np.ndarray:
    """Apply ``exp(-2j*pi*H_mid*dt)`` through the eigendecomposition of ``H_mid``.

    ``dt`` may be negative (backward propagation); ``state`` is a vector or a
    matrix of column vectors.
    """
    H_mid = np.asarray(H_mid)
    check_hermitian(H_mid)
    w, v = np.linalg.eigh(H_mid)
    phase = np.exp(-2j * np.pi * w * dt)
    state = np.asarray(state, dtype=complex)
    return v @ (phase[:, None] * (v.conj().T @ state)) if state.ndim == 2 else v @ (phase * (v.conj().T @ state))


# ---------------------------------------------------------------------------
# single excitation


def _com(populations: np.ndarray) -> np.ndarray:
    sites = np.arange(1, populations.shape[1] + 1)
    return populations @ sites


def _record_stride(n_per_period: int, target: int = 256) -> int:
    """Largest divisor of ``n_per_period`` giving at least ``target`` records per period."""
    best = 1
    for s in range(1, n_per_period + 1):
        if n_per_period % s == 0 and n_per_period // s >= target:
            best = s
    return best


def evolve_state(sched: BandedSchedule, psi0: np.ndarray, n_cycles: int,
                 stepper: StepperConfig = StepperConfig(), min_steps_per_period: int = 0,
                 records_per_period: Optional[int] = None) -> EvolutionResult:
    """Evolve one normalized state of a banded schedule over ``n_cycles`` periods.

    With ``records_per_period`` the populations are stored exactly at
    ``k*T/records_per_period``, so runs with different step sizes share a grid.
    """
    if n_cycles < 1:
        raise ValueError("n_cycles must be >= 1")
    if records_per_period:
        n_per = step_count(sched, sched.period, stepper, min_steps=min_steps_per_period,
                           multiple=records_per_period)
        stride = n_per // records_per_period
    else:
        n_per = step_count(sched, sched.period, stepper, min_steps=min_steps_per_period)
        stride = _record_stride(n_per)
    dt = sched.period / n_per
    n = n_per * n_cycles
    psi0 = np.asarray(psi0, dtype=complex)
    X, _, dens, _, _ = integrate(sched, psi0[:, None], n, dt, stepper, record_every=stride)
    times = np.arange(len(dens)) * stride * dt
    com = _com(dens)
    per = n_per // stride
    delta_x = np.diff(com[::per])
    norm_drift = float(np.max(np.abs(dens.sum(axis=1) - np.vdot(psi0, psi0).real)))
    edge = float(np.max(dens[:, [0, -1]])) if not sched.periodic else 0.0
    return EvolutionResult(times, dens, com, delta_x, X[:, 0], norm_drift, edge, n)


def evolve_single_excitation(chain: ChainSpec, traj: Trajectory, dis: Optional[DisorderRealization] = None,
                             init_site: int = 1, n_cycles: int = 1,
                             stepper: StepperConfig = StepperConfig()) -> EvolutionResult:
    """Evolve a single excitation starting on ``init_site`` (1-based)."""
    if not 1 <= init_site <= chain.L:
        raise ValueError(f"init_site must lie in 1..{chain.L}")
    psi0 = np.zeros(chain.L, dtype=complex)
    psi0[init_site - 1] = 1.0
    return evolve_state(rm_schedule(chain, traj, dis), psi0, n_cycles, stepper)


# ---------------------------------------------------------------------------
# two hard-core excitations


def evolve_two_excitations(chain: ChainSpec, traj: Trajectory, dis: Optional[DisorderRealization] = None,
                           init_pair: tuple[int, int] = (1, 2), n_cycles: int = 1,
                           stepper: StepperConfig = StepperConfig()) -> EvolutionResult:
    """Evolve two hard-core excitations on sites ``init_pair`` (1-based) in the pair basis.

    Each step exponentiates the midpoint pair-sector Hamiltonian (dense
    eigendecomposition for small sectors, Krylov action otherwise).
    """
    i, j = sorted(init_pair)
    if i == j:
        raise ValueError("the two excitations must start on distinct sites")
    if not (1 <= i and j <= chain.L):
        raise ValueError(f"initial sites must lie in 1..{chain.L}")
    basis = pair_basis(chain.L)
    dim = len(basis)
    psi = np.zeros(dim, dtype=complex)
    psi[int(np.flatnonzero((basis[:, 0] == i - 1) & (basis[:, 1] == j - 1))[0])] = 1.0
    sched = rm_schedule(chain, traj, dis)
    n_per = step_count(sched, traj.T, stepper)
    stride = _record_stride(n_per, 64)
    dt = traj.T / n_per
    n = n_per * n_cycles
    occ = np.zeros((dim, chain.L))
    occ[np.arange(dim), basis[:, 0]] = 1.0
    occ[np.arange(dim), basis[:, 1]] = 1.0
    dens = [np.abs(psi) ** 2 @ occ]
    dense = dim <= 400
    for s in range(n):
        p = traj.point((s + 0.5) * dt)
        if dense:
            psi = propagate_step(build_two_excitation(chain, p, dis), dt, psi)
        else:
            H = build_two_excitation(chain, p, dis, sparse=True)
            psi = spla.expm_multiply(-2j * np.pi * dt * H, psi)
        if (s + 1) % stride == 0:
            dens.append(np.abs(psi) ** 2 @ occ)
    dens = np.array(dens)
    com = _com(dens)
    per = n_per // stride
    edge = float(np.max(dens[:, [0, -1]])) if not chain.periodic else 0.0
    drift = float(np.max(np.abs(dens.sum(axis=1) - 2.0)))
    return EvolutionResult(np.arange(len(dens)) * stride * dt, dens, com, np.diff(com[::per]), psi,
                           drift, edge, n)


def free_fermion_densities(chain: ChainSpec, traj: Trajectory, dis: Optional[DisorderRealization],
                           sites, n_cycles: int = 1, stepper: StepperConfig = StepperConfig(),
                           method: str = "eigh") -> np.ndarray:
    """Site densities of a Slater determinant of orbitals started on ``sites`` (1-based).

    Recorded on the same grid as :func:`evolve_two_excitations`. For open
    chains this equals the hard-core boson density exactly.
    """
    sched = rm_schedule(chain, traj, dis)
    n_per = step_count(sched, traj.T, stepper)
    stride = _record_stride(n_per, 64)
    X0 = np.zeros((chain.L, len(sites)), dtype=complex)
    for c, s in enumerate(sites):
        X0[s - 1, c] = 1.0
    st = StepperConfig(stepper.steps_per_period, stepper.max_phase, stepper.norm_tol,
                       stepper.reortho_tol, method)
    _, _, dens, _, _ = integrate(sched, X0, n_per * n_cycles, traj.T / n_per, st, record_every=stride)
    return dens


# ---------------------------------------------------------------------------
# half filling


def ground_orbitals(H: np.ndarray, N: int, tol: float = 1e-9) -> np.ndarray:
    """The ``N`` lowest eigenvectors; refuses a degenerate Fermi level."""
    w, v = np.linalg.eigh(H)
    if N < len(w) and w[N] - w[N - 1] <= tol * max(1.0, np.max(np.abs(w))):
        raise ValueError("degenerate Fermi level: half-filled ground state is not unique")
    return v[:, :N]


def evolve_half_filling(chain: ChainSpec, traj: Trajectory, dis: Optional[DisorderRealization] = None,
                        stepper: StepperConfig = StepperConfig(), n_cycles: int = 1,
                        record_every: Optional[int] = None) -> SlaterResult:
    """Evolve the half-filled ground state at ``t = 0`` and record the current.

    Orbitals are propagated by the same step unitaries; a QR pass restores
    orthonormality whenever the overlap drift exceeds ``stepper.reortho_tol``.
    """
    if not chain.periodic or chain.L % 2:
        raise ValueError("half-filling runs need a periodic chain with an even number of sites")
    N = chain.L // 2
    X0 = ground_orbitals(build_single_particle(chain, traj.point(0.0), dis), N)
    sched = rm_schedule(chain, traj, dis)
    n_per = step_count(sched, traj.T, stepper)
    n = n_per * n_cycles
    dt = traj.T / n_per
    stride = record_every if record_every is not None else 0
    X, cur, dens, nre, drift = integrate(sched, X0, n, dt, stepper, want_current=True, record_every=stride)
    step_times = np.arange(n + 1) * dt
    times = np.arange(len(dens)) * stride * dt if stride else np.zeros(0)
    return SlaterResult(times, cur, step_times, dens, X, X0, drift, nre)


def pumped_charge(chain: ChainSpec, traj: Trajectory, dis: Optional[DisorderRealization] = None,
                  stepper: StepperConfig = StepperConfig()) -> float:
    """Pumped charge over one cycle in units of ``d`` (``dQ/d``)."""
    return evolve_half_filling(chain, traj, dis, stepper).pumped


def pumped_charge_double_loop(chain: ChainSpec, traj: Trajectory, dis: Optional[DisorderRealization] = None,
                              stepper: StepperConfig = StepperConfig(), method: str = "sum") -> float:
    """Pumped charge of a double-loop trajectory.

    ``method="sum"`` adds the charges of the outer and inner loops, each pumped
    from its own ground state over its own sub-period; ``method="direct"``
    evolves through the whole composite cycle once.
    """
    if method == "direct" or traj.variant != "double-loop":
        return pumped_charge(chain, traj, dis, stepper)
    if method != "sum":
        raise ValueError("method must be 'sum' or 'direct'")
    return float(sum(pumped_charge(chain, loop, dis, stepper) for loop in traj.loops()))


def convergence_gap(fn: Callable[[StepperConfig], float], stepper: StepperConfig = StepperConfig()) -> float:
    """``|fn(refined) - fn(stepper)|`` for a stepper with doubled resolution."""
    return abs(fn(stepper.refined()) - fn(stepper))
