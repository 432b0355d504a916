"""Frequency-modulation synthesis of a time-dependent Rice-Mele chain on tunable qubits.

A static nearest-neighbour coupling ``g`` between qubits whose frequencies
oscillate as ``omega_j(t) = omega_bar + Delta_j(t) + A_j(t) sin(2 pi mu t + phi0)``
acts, after averaging over the carrier, like the coupling
``g * J0((eta_j A_j - eta_{j+1} A_{j+1}) / mu)``. This module solves for the
envelopes ``A_j(t)`` that produce prescribed bonds, checks the averaging
conditions, simulates the modulated chain directly and converts frequencies
to Z-pulse amplitudes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import j0, j1, jv

from .dynamics import BandedSchedule, EvolutionResult, StepperConfig, evolve_state, rm_schedule
from .model import ChainSpec, DisorderRealization, ParamPoint, chain_bands
from .schedules import Trajectory

J0_ZERO = 2.404825557695773   # first zero of J0
J0_MIN_ARG = 3.831705970207512  # first zero of J1: J0 attains its minimum here
J0_MIN = float(j0(J0_MIN_ARG))  # about -0.4028

DEFAULT_G = 7.2          # MHz
DEFAULT_OMEGA_BAR = 4800.0  # MHz
DEFAULT_EC = 0.208       # GHz
DEFAULT_EJJ = 21.9       # GHz


@dataclass(frozen=True)
class ModulationSpec:
    """Carrier ``mu`` [MHz], common phase ``phi0`` [rad], frame ``omega_bar`` [MHz], reference qubit (1-based)."""

    mu: float
    phi0: float = 0.0
    omega_bar: float = DEFAULT_OMEGA_BAR
    ref: Optional[int] = None

    def __post_init__(self):
        if not (np.isfinite(self.mu) and self.mu > 0):
            raise ValueError(f"carrier frequency mu must be positive, got {self.mu}")


@dataclass(frozen=True)
class TransmonCalib:
    """Flux-tunable transmon parameters, scalar or one value per qubit.

    ``E_JJ`` and ``E_C`` in GHz; ``k`` [1/V] and ``b`` map a Z-pulse amplitude
    ``V`` to the reduced flux ``pi*Phi/Phi0 = k*V + b``; ``eta`` is the
    modulation scale factor.
    """

    E_JJ: Union[float, Sequence[float]] = DEFAULT_EJJ
    E_C: Union[float, Sequence[float]] = DEFAULT_EC
    k: Union[float, Sequence[float]] = 1.0
    b: Union[float, Sequence[float]] = 0.0
    eta: Union[float, Sequence[float]] = 1.0

    def __post_init__(self):
        if np.any(np.asarray(self.E_JJ) <= 0) or np.any(np.asarray(self.E_C) <= 0):
            raise ValueError("E_JJ and E_C must be positive")
        if np.any(np.asarray(self.k) == 0):
            raise ValueError("flux slope k must be nonzero")
        eta = np.asarray(self.eta, dtype=float)
        if np.any(eta < 0.5) or np.any(eta > 1.5):
            raise ValueError("eta must lie in [0.5, 1.5]")

    def per_qubit(self, name: str, L: int) -> np.ndarray:
        v = np.asarray(getattr(self, name), dtype=float)
        if v.ndim == 0:
            return np.full(L, float(v))
        if v.shape != (L,):
            raise ValueError(f"calibration field {name} has {v.size} values for {L} qubits")
        return v


# ---------------------------------------------------------------------------
# Bessel-function building blocks


def effective_coupling(g, A_j, A_j1, eta_j=1.0, eta_j1=1.0, mu: float = 80.0):
    """Carrier-averaged coupling ``g * J0((eta_j A_j - eta_j1 A_j1) / mu)`` [MHz]."""
    if not mu > 0:
        raise ValueError("mu must be positive")
    return g * j0((np.multiply(eta_j, A_j) - np.multiply(eta_j1, A_j1)) / mu)


def bessel_j0_inverse(y, branch: str = "first", tol: float = 1e-15):
    """Inverse of ``J0`` on its monotone decreasing stretch.

    ``branch="first"`` accepts ``0 < y <= 1`` and returns ``x`` in
    ``[0, 2.4048)``; ``branch="extended"`` continues past the first zero and
    accepts ``J0(3.8317) <= y <= 1``, returning ``x`` in ``[0, 3.8317]``.
    Bisection followed by two Newton polishes.
    """
    y = np.asarray(y, dtype=float)
    if branch == "first":
        lo_ok = np.all(y > 0)
        hi = J0_ZERO
    elif branch == "extended":
        lo_ok = np.all(y >= J0_MIN)
        hi = J0_MIN_ARG
    else:
        raise ValueError("branch must be 'first' or 'extended'")
    if not (lo_ok and np.all(y <= 1.0)) or not np.all(np.isfinite(y)):
        bad = y[~((y <= 1.0) & (y > (0 if branch == "first" else J0_MIN - 1e-300)))]
        raise ValueError(f"J0 inverse ({branch} branch) undefined for y = {bad.ravel()[:3]}")
    a = np.zeros_like(y)
    b = np.full_like(y, hi)
    for _ in range(64):
        m = 0.5 * (a + b)
        above = j0(m) > y
        a = np.where(above, m, a)
        b = np.where(above, b, m)
        if np.max(b - a) < tol:
            break
    x = 0.5 * (a + b)
    for _ in range(2):
        d = j1(x)
        step = np.where(np.abs(d) > 1e-8, (j0(x) - y) / np.where(np.abs(d) > 1e-8, d, 1.0), 0.0)
        x = np.clip(x + step, 0.0, hi)  # J0' = -J1
    x = np.where(y == 1.0, 0.0, x)  # exact at the maximum, where bisection stalls at ~1e-16
    return x if x.ndim else float(x)


def sideband_coefficient(s: int, A_j, A_j1, mu: float, phi0: float = 0.0):
    """Weight of the ``s``-th carrier harmonic on the bond ``(j, j+1)``.

    ``J_s((A_j - A_j1)/mu) * exp(i s (pi/2 + phi0))``, the resummed form of
    :func:`sideband_double_sum`.
    """
    x = (np.asarray(A_j, dtype=float) - np.asarray(A_j1, dtype=float)) / mu
    return jv(s, x) * np.exp(1j * s * (np.pi / 2 + phi0))


def sideband_double_sum(s: int, A_j, A_j1, mu: float, phi0: float = 0.0, m_max: int = 40):
    """Truncated ``sum_{m+n=s} i^(m+n) J_m(A_j/mu) J_n(-A_j1/mu) exp(i s phi0)``."""
    a = np.asarray(A_j, dtype=float) / mu
    b = -np.asarray(A_j1, dtype=float) / mu
    total = 0.0
    for m in range(-m_max, m_max + 1):
        n = s - m
        if abs(n) > m_max:
            continue
        total = total + jv(m, a) * jv(n, b)
    return (1j ** s) * total * np.exp(1j * s * phi0)


# ---------------------------------------------------------------------------
# synthesis


def bond_targets(chain: ChainSpec, traj: Trajectory, t, dis: Optional[DisorderRealization] = None):
    """Target on-site energies ``(n_t, L)`` and bonds ``(n_t, L-1)`` of the RM chain at times ``t``."""
    sched = rm_schedule(chain, traj, dis)
    c = sched.coef(np.asarray(t, dtype=float))
    return sched.diag0 + c @ sched.diag_basis, sched.bond0 + c @ sched.bond_basis


def solve_amplitudes(targets: np.ndarray, g, mu: float, eta=1.0, ref: Optional[int] = None,
                     negative: str = "refuse") -> np.ndarray:
    """Modulation envelopes ``A_j(t)`` [MHz] realizing the bond ``targets`` on an open chain.

    Parameters
    ----------
    targets : ndarray, shape (n_t, L-1)
        Desired bond amplitudes [MHz] at each sample.
    g : float or ndarray
        Bare couplings [MHz], per bond if an array.
    mu : float
        Carrier frequency [MHz].
    eta : float or ndarray
        Per-qubit scale factors.
    ref : int, optional
        1-based reference qubit with ``A_ref = 0``; the middle qubit by default.
    negative : {"refuse", "extended", "gauge"}
        Treatment of targets with ``target/g <= 0``. ``refuse`` raises,
        ``extended`` continues the inverse past the first zero of ``J0`` (down
        to ``J0 = -0.4028``), ``gauge`` realizes ``|target|``.

    Notes
    -----
    Moving away from the reference, each step adds or subtracts
    ``mu * J0^-1(target/g)``; the sign is fixed per bond to whichever keeps the
    new envelope smaller in peak magnitude.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    n_t, nb = targets.shape
    L = nb + 1
    g = np.broadcast_to(np.asarray(g, dtype=float), (nb,))
    eta = np.broadcast_to(np.asarray(eta, dtype=float), (L,))
    if not mu > 0:
        raise ValueError("mu must be positive")
    ref = (L + 1) // 2 if ref is None else int(ref)
    if not 1 <= ref <= L:
        raise ValueError(f"reference qubit {ref} outside 1..{L}")
    ratio = targets / g
    if np.any(ratio > 1.0 + 1e-12):
        raise ValueError(f"target bond exceeds the bare coupling (max ratio {ratio.max():.4f})")
    ratio = np.minimum(ratio, 1.0)
    if negative == "refuse":
        if np.any(ratio <= 0):
            raise ValueError("non-positive target bond; enable negative='extended' or 'gauge'")
        x = bessel_j0_inverse(ratio, "first")
    elif negative == "extended":
        x = bessel_j0_inverse(ratio, "extended")
    elif negative == "gauge":
        if np.any(np.abs(ratio) == 0):
            raise ValueError("zero target bond cannot be realized on the first J0 branch")
        x = bessel_j0_inverse(np.abs(ratio), "first")
    else:
        raise ValueError("negative must be 'refuse', 'extended' or 'gauge'")
    A = np.zeros((n_t, L))
    r = ref - 1
    for b in range(r, nb):          # rightwards: qubit b -> b+1
        cands = [(eta[b] * A[:, b] - sgn * mu * x[:, b]) / eta[b + 1] for sgn in (1.0, -1.0)]
        A[:, b + 1] = min(cands, key=lambda a: float(np.max(np.abs(a))))
    for b in range(r - 1, -1, -1):  # leftwards: qubit b+1 -> b
        cands = [(eta[b + 1] * A[:, b + 1] + sgn * mu * x[:, b]) / eta[b] for sgn in (1.0, -1.0)]
        A[:, b] = min(cands, key=lambda a: float(np.max(np.abs(a))))
    return A


@dataclass(eq=False)
class PulseProgram:
    """Sampled modulation program for ``L`` qubits.

    ``Delta`` and ``A`` are the slow envelopes [MHz]; ``omega`` the full
    qubit frequencies [MHz]; ``times`` in us at ``sample_rate`` samples/us.
    """

    times: np.ndarray
    omega: np.ndarray
    A: np.ndarray
    Delta: np.ndarray
    spec: ModulationSpec
    sample_rate: float
    period: float
    targets: np.ndarray = field(default=None)

    @property
    def L(self) -> int:
        return self.omega.shape[1]

    def detuning(self, t) -> np.ndarray:
        """``omega_j(t) - omega_bar`` at arbitrary times, shape ``(len(t), L)``.

        Envelopes are interpolated linearly between samples; the carrier is
        evaluated exactly.
        """
        t = np.atleast_1d(np.asarray(t, dtype=float))
        D = np.stack([np.interp(t, self.times, self.Delta[:, j]) for j in range(self.L)], axis=1)
        A = np.stack([np.interp(t, self.times, self.A[:, j]) for j in range(self.L)], axis=1)
        return D + A * np.sin(2 * np.pi * self.spec.mu * t + self.spec.phi0)[:, None]

    def amplitude_violation(self) -> float:
        """``max(|omega - omega_bar - Delta| - |A|)``; non-positive for a valid program."""
        return float(np.max(np.abs(self.omega - self.spec.omega_bar - self.Delta) - np.abs(self.A)))

    def zpa(self, calib: TransmonCalib) -> np.ndarray:
        return zpa_from_frequency(calib, self.omega)

    def export(self, path, calib: Optional[TransmonCalib] = None, comment: str = "") -> None:
        """Columnar text: time, per-qubit frequency and (with ``calib``) per-qubit Zpa."""
        cols = ["time_us"] + [f"freq_q{j + 1}_MHz" for j in range(self.L)]
        data = [self.times[:, None], self.omega]
        if calib is not None:
            cols += [f"zpa_q{j + 1}" for j in range(self.L)]
            data.append(self.zpa(calib))
        with open(path, "w", encoding="utf-8") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            fh.write(",".join(cols) + "\n")
            np.savetxt(fh, np.hstack(data), delimiter=",", fmt="%.12g")


def synthesize_waveforms(Delta: np.ndarray, A: np.ndarray, spec: ModulationSpec,
                         sample_rate: float, times: np.ndarray, period: Optional[float] = None) -> PulseProgram:
    """Assemble ``omega_j(t) = omega_bar + Delta_j(t) + A_j(t) sin(2 pi mu t + phi0)``.

    ``Delta`` and ``A`` are sampled on ``times``; the sample rate must be at
    least ``20*mu`` samples per us.
    """
    if sample_rate < 20 * spec.mu:
        raise ValueError(f"sample rate {sample_rate} /us undersamples the carrier (need >= {20 * spec.mu})")
    Delta = np.asarray(Delta, dtype=float)
    A = np.asarray(A, dtype=float)
    if Delta.shape != A.shape or Delta.shape[0] != len(times):
        raise ValueError("Delta, A and times have inconsistent shapes")
    carrier = np.sin(2 * np.pi * spec.mu * np.asarray(times) + spec.phi0)[:, None]
    omega = spec.omega_bar + Delta + A * carrier
    T = float(times[-1] - times[0]) if period is None else period
    return PulseProgram(np.asarray(times, dtype=float), omega, A, Delta, spec, float(sample_rate), T)


def build_program(chain: ChainSpec, traj: Trajectory, spec: ModulationSpec,
                  dis: Optional[DisorderRealization] = None, g=DEFAULT_G, eta=1.0,
                  sample_rate: Optional[float] = None, n_cycles: int = 1,
                  negative: str = "refuse") -> PulseProgram:
    """Pulse program realizing the disordered RM chain along ``traj`` on an open chain."""
    if chain.periodic:
        raise ValueError("modulation synthesis needs an open chain")
    rate = 20 * spec.mu if sample_rate is None else sample_rate
    n = int(np.ceil(n_cycles * traj.T * rate))
    times = np.linspace(0.0, n_cycles * traj.T, n + 1)
    onsite, bonds = bond_targets(chain, traj, times, dis)
    A = solve_amplitudes(bonds, g, spec.mu, eta, spec.ref, negative)
    prog = synthesize_waveforms(onsite, A, spec, (n / (n_cycles * traj.T)), times, traj.T)
    prog.targets = bonds
    return prog


# ---------------------------------------------------------------------------
# validity checks


@dataclass(frozen=True)
class CheckReport:
    passed: bool
    margin: float
    details: dict = field(default_factory=dict)


def check_nyquist(source, mu: float) -> CheckReport:
    """``mu > 2 max_t |Delta(t)|`` (strict).

    ``source`` is a :class:`Trajectory` (its ``Delta`` component) or an array
    of sampled detunings. Margin ``mu - 2 max|Delta|`` [MHz].
    """
    if isinstance(source, Trajectory):
        dmax = source.max_abs()[0]
    else:
        dmax = float(np.max(np.abs(np.asarray(source, dtype=float)))) if np.size(source) else 0.0
    margin = float(mu - 2 * dmax)
    return CheckReport(bool(margin > 0), margin, {"max_abs_Delta": dmax, "mu": mu})


def cutoff_frequency(x: np.ndarray, dt: float, cutoff_fraction: float = 0.01) -> float:
    """Smallest frequency [MHz] below which ``1 - cutoff_fraction`` of the power of ``x`` lies."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    p = (np.abs(np.fft.rfft(x, axis=0)) ** 2).sum(axis=1)
    if len(x) > 1:
        p[1:] *= 2  # one-sided spectrum
    f = np.fft.rfftfreq(len(x), dt)
    total = p.sum()
    if total <= 0:
        return 0.0
    c = np.cumsum(p) / total
    return float(f[int(np.searchsorted(c, 1 - cutoff_fraction - 1e-12))])


def check_adiabatic(delta, Delta, mu: float, dt: float, cutoff_fraction: float = 0.01,
                    max_ratio: float = 0.05) -> CheckReport:
    """Compare the cutoff frequencies of sampled schedules with the carrier.

    ``delta`` and ``Delta`` are sampled uniformly with spacing ``dt`` [us] over
    whole periods. Passes when both cutoffs are at most ``max_ratio * mu``.
    """
    fd = cutoff_frequency(delta, dt, cutoff_fraction)
    fD = cutoff_frequency(Delta, dt, cutoff_fraction)
    r = max(fd, fD) / mu
    return CheckReport(bool(r <= max_ratio), float(max_ratio - r),
                       {"delta_cutoff": fd, "Delta_cutoff": fD, "delta_ratio": fd / mu, "Delta_ratio": fD / mu})


# ---------------------------------------------------------------------------
# lab-frame simulation


def lab_schedule(program: PulseProgram, g) -> BandedSchedule:
    """Modulated chain in the ``omega_bar`` frame: detunings on the diagonal, static couplings."""
    L = program.L
    nb = L - 1
    gb = np.broadcast_to(np.asarray(g, dtype=float), (nb,)).copy()
    return BandedSchedule(L, False, np.zeros(L), gb, np.eye(L), np.zeros((L, nb)),
                          program.detuning, program.period)


def simulate_lab_frame(program: PulseProgram, g, init_site: int, stepper: StepperConfig = StepperConfig(),
                       n_cycles: int = 1, records_per_period: int = 128) -> EvolutionResult:
    """Evolve a single excitation under the full modulated Hamiltonian.

    Steps are at most ``1/(20 mu)`` long so every carrier period is resolved.
    """
    if program.sample_rate < 20 * program.spec.mu:
        raise ValueError("program is undersampled for its carrier")
    psi0 = np.zeros(program.L, dtype=complex)
    psi0[init_site - 1] = 1.0
    min_steps = int(np.ceil(program.period * 20 * program.spec.mu))
    return evolve_state(lab_schedule(program, g), psi0, n_cycles, stepper,
                        min_steps_per_period=min_steps, records_per_period=records_per_period)


@dataclass(frozen=True)
class FloquetComparison:
    """Lab-frame versus target-frame discrepancies for one run.

    ``com_error`` and ``population_error`` are maxima over the comparison grid,
    which is stroboscopic (whole carrier periods) when ``stroboscopic`` is set.
    ``micromotion_error`` is the population discrepancy on a dense grid that
    also samples inside carrier periods.
    """

    com_error: float
    population_error: float
    micromotion_error: float
    stroboscopic: bool
    nyquist: CheckReport
    adiabatic: CheckReport
    lab: EvolutionResult = field(repr=False)
    target: EvolutionResult = field(repr=False)


def _stroboscopic_records(T: float, mu: float) -> Optional[int]:
    n = T * mu
    return int(round(n)) if abs(n - round(n)) < 1e-9 * max(1.0, n) and round(n) >= 1 else None


def compare_frames(chain: ChainSpec, traj: Trajectory, spec: ModulationSpec, init_site: int,
                   dis: Optional[DisorderRealization] = None, g=DEFAULT_G, eta=1.0,
                   negative: str = "extended", stepper: StepperConfig = StepperConfig(),
                   n_cycles: int = 1, dense_records: int = 128) -> FloquetComparison:
    """Lab-frame versus target-frame single-excitation evolution.

    The carrier-averaged Hamiltonian describes the modulated chain at whole
    carrier periods; in between, the populations carry a micromotion of
    relative size ``g/mu``. When the cycle holds a whole number of carrier
    periods, the main comparison is made on that stroboscopic grid; otherwise
    it falls back to the dense grid.
    """
    prog = build_program(chain, traj, spec, dis, g, eta, n_cycles=n_cycles, negative=negative)
    psi0 = np.zeros(chain.L, dtype=complex)
    psi0[init_site - 1] = 1.0
    target = rm_schedule(chain, traj, dis)

    def run(rp):
        lab = simulate_lab_frame(prog, g, init_site, stepper, n_cycles, rp)
        tgt = evolve_state(target, psi0, n_cycles, stepper, records_per_period=rp)
        return lab, tgt

    lab_d, tgt_d = run(dense_records)
    dense_pop = float(np.max(np.abs(lab_d.populations - tgt_d.populations)))
    rp = _stroboscopic_records(traj.T, spec.mu) if spec.phi0 == 0.0 else None
    lab, tgt = run(rp) if rp else (lab_d, tgt_d)
    t = np.linspace(0.0, traj.T, 513)
    D, d = traj.arrays(t)
    return FloquetComparison(float(np.max(np.abs(lab.com - tgt.com))),
                             float(np.max(np.abs(lab.populations - tgt.populations))),
                             dense_pop, rp is not None,
                             check_nyquist(traj, spec.mu),
                             check_adiabatic(d[:-1], D[:-1], spec.mu, t[1] - t[0]), lab, tgt)


# ---------------------------------------------------------------------------
# Z-pulse transduction


def zpa_from_frequency(calib: TransmonCalib, omega) -> np.ndarray:
    """Z-pulse amplitude for qubit frequencies ``omega`` [MHz] on the ``k V + b`` in ``[0, pi/2]`` branch.

    ``omega`` has shape ``(..., L)`` for per-qubit calibrations.
    """
    omega = np.asarray(omega, dtype=float) / 1000.0
    L = omega.shape[-1] if omega.ndim else 1
    EJ, EC = calib.per_qubit("E_JJ", L), calib.per_qubit("E_C", L)
    k, b = calib.per_qubit("k", L), calib.per_qubit("b", L)
    c = (omega + EC) ** 2 / (8 * EJ * EC)
    if np.any(omega + EC < 0) or np.any(c > 1.0 + 1e-15):
        raise ValueError("frequency outside the transducible range")
    return (np.arccos(np.clip(c, 0.0, 1.0)) - b) / k


def frequency_from_zpa(calib: TransmonCalib, V) -> np.ndarray:
    """Qubit frequency [MHz] for Z-pulse amplitude ``V``: ``sqrt(8 E_JJ E_C |cos(kV+b)|) - E_C``."""
    V = np.asarray(V, dtype=float)
    L = V.shape[-1] if V.ndim else 1
    EJ, EC = calib.per_qubit("E_JJ", L), calib.per_qubit("E_C", L)
    k, b = calib.per_qubit("k", L), calib.per_qubit("b", L)
    return 1000.0 * (np.sqrt(8 * EJ * EC * np.abs(np.cos(k * V + b))) - EC)
