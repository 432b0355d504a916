"""Instantaneous eigenstructure: eigensystems, gaps, IPR, polarization, Wannier states."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla
from scipy.optimize import minimize_scalar

from .model import (LATTICE_CONSTANT, ChainSpec, DisorderRealization, ParamPoint,
                    bloch_energies, build_single_particle)
from .schedules import Trajectory

GAP_TOL = 1e-3
HERMITIAN_TOL = 1e-12


class GapClosedError(ValueError):
    """Raised when a band gap falls below the gapped-state tolerance."""


def hermiticity_error(H: np.ndarray) -> float:
    """``max|H - H^dagger| / max(1, max|H|)``."""
    H = np.asarray(H)
    scale = max(1.0, float(np.max(np.abs(H)))) if H.size else 1.0
    return float(np.max(np.abs(H - H.conj().T))) / scale if H.size else 0.0


def check_hermitian(H: np.ndarray, tol: float = HERMITIAN_TOL) -> None:
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {H.shape}")
    err = hermiticity_error(H)
    if err > tol:
        raise ValueError(f"matrix is not Hermitian (relative deviation {err:.3e})")


@dataclass(frozen=True, eq=False)
class EigenSystem:
    values: np.ndarray
    vectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.values) @ self.vectors.conj().T


def eigh(H: np.ndarray) -> EigenSystem:
    """Ascending eigenvalues and orthonormal eigenvectors of a Hermitian matrix."""
    H = np.asarray(H)
    check_hermitian(H)
    w, v = np.linalg.eigh(H)
    return EigenSystem(w, v)


@dataclass(frozen=True, eq=False)
class GapReport:
    """Minimum instantaneous gap [MHz], where it occurs, and the sampled series."""

    min_gap: float
    t_star: float
    times: np.ndarray
    gaps: np.ndarray


def _half_gap(chain: ChainSpec, traj: Trajectory, dis, t: float) -> float:
    N = chain.L // 2
    H = build_single_particle(chain, traj.point(t), dis)
    e = sla.eigvalsh(H, subset_by_index=[N - 1, N], check_finite=False)
    return 0.5 * float(e[1] - e[0])


def min_instantaneous_gap(chain: ChainSpec, traj: Trajectory,
                          dis: Optional[DisorderRealization] = None,
                          n_time: int = 256, refine: bool = True) -> GapReport:
    """Minimum over one period of the half-filling excitation gap.

    The reported gap is the lowest empty level measured from midgap,
    ``(eps_{N+1} - eps_N) / 2`` with ``N = L/2``; it does not depend on a global
    energy shift. The sampled minimum is polished by a bounded 1D search
    between the neighbouring samples.
    """
    if chain.L % 2:
        raise ValueError("the half-filling gap needs an even number of sites")
    if n_time < 64:
        raise ValueError("n_time must be >= 64")
    times = np.linspace(0.0, traj.T, n_time, endpoint=False)
    gaps = np.array([_half_gap(chain, traj, dis, t) for t in times])
    i = int(np.argmin(gaps))
    g, ts = float(gaps[i]), float(times[i])
    if refine and g > 0:
        dt = traj.T / n_time
        lo, hi = ts - dt, ts + dt
        res = minimize_scalar(lambda t: _half_gap(chain, traj, dis, t % traj.T),
                              bounds=(lo, hi), method="bounded", options={"xatol": 1e-9 * traj.T})
        if res.fun < g:
            g, ts = float(res.fun), float(res.x % traj.T)
    return GapReport(g, ts, times, gaps)


def ipr(state: np.ndarray, tol: float = 1e-8) -> float:
    """Real-space inverse participation ratio ``sum_j |psi_j|**4``."""
    p = np.abs(np.asarray(state)) ** 2
    norm = float(np.sum(p))
    if abs(norm - 1.0) > tol:
        raise ValueError(f"state is not normalized (norm**2 = {norm:.12f})")
    return float(np.sum(p * p))


def ipr_spectrum(H: np.ndarray) -> np.ndarray:
    """IPR of every eigenstate of ``H``, ordered by energy."""
    _, v = np.linalg.eigh(H)
    p = np.abs(v) ** 2
    return np.sum(p * p, axis=0)


def mean_ipr(chain: ChainSpec, p: ParamPoint, realizations) -> tuple[float, float]:
    """Ensemble mean and standard error of the spectrum-averaged IPR."""
    vals = np.array([ipr_spectrum(build_single_particle(chain, p, d)).mean() for d in realizations])
    se = float(vals.std(ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else 0.0
    return float(vals.mean()), se


# ---------------------------------------------------------------------------
# Bloch-band geometry


def _bloch_batch(Delta, delta, J, k, d=LATTICE_CONSTANT):
    """Batched Bloch matrices, shape ``Delta.shape + k.shape + (2, 2)``."""
    Delta = np.asarray(Delta, dtype=float)[..., None]
    delta = np.asarray(delta, dtype=float)[..., None]
    f = (J + delta) + (J - delta) * np.exp(-1j * k * d)
    h = np.empty(np.broadcast(Delta, f).shape + (2, 2), dtype=complex)
    h[..., 0, 0] = Delta
    h[..., 1, 1] = -Delta
    h[..., 0, 1] = f
    h[..., 1, 0] = np.conj(f)
    return h


def _kgrid(n_k: int, shift: float = 0.0, d=LATTICE_CONSTANT) -> np.ndarray:
    return -np.pi / d + 2 * np.pi / d * (np.arange(n_k) + shift) / n_k


def band_gap(p: ParamPoint, J: float, n_k: int = 256) -> float:
    """Direct band gap ``min_k 2E(k)`` of the clean chain [MHz]."""
    e = bloch_energies(p, J, _kgrid(n_k))
    return float(np.min(e[:, 1] - e[:, 0]))


def lower_band_states(Delta, delta, J: float, n_k: int, k_shift: float = 0.0):
    """Lower-band eigenvectors on the k grid (offset by ``k_shift`` spacings), plus the band gaps."""
    k = _kgrid(n_k, k_shift)
    w, v = np.linalg.eigh(_bloch_batch(Delta, delta, J, k))
    return v[..., :, 0], w[..., 1] - w[..., 0]


def _wilson_phase(u: np.ndarray, intracell: bool = False) -> np.ndarray:
    """``Im log`` of the closed product of overlaps around the k loop (last-but-one axis)."""
    nxt = np.roll(u, -1, axis=-2)
    if intracell:
        n_k = u.shape[-2]
        dk = 2 * np.pi / (LATTICE_CONSTANT * n_k)
        nxt = nxt.copy()
        nxt[..., 1] *= np.exp(-1j * dk)
    links = np.sum(u.conj() * nxt, axis=-1)
    links = links / np.abs(links)
    return np.angle(np.prod(links, axis=-1))


def _wrap(x, d=LATTICE_CONSTANT):
    """Reduce to ``(-d/2, d/2]``."""
    return d / 2 - np.mod(d / 2 - x, d)


def polarization(p: ParamPoint, J: float, n_k: int = 256) -> float:
    """Lower-band polarization in units of sites, in ``(-d/2, d/2]``.

    Computed from the Wilson loop ``W = prod_k <u_k|u_{k+dk}>`` of the
    cell-periodic Bloch vectors as ``P = (d/2pi) Im log W``. This is the
    displacement of the band's carriers counted with charge ``-1``
    (equivalently minus the Wannier-centre motion), the convention under
    which the change of P over a cycle agrees with the pumped charge and the
    Chern number.
    """
    if n_k < 64:
        raise ValueError("n_k must be >= 64")
    u, gaps = lower_band_states(p.Delta, p.delta, J, n_k)
    if np.min(gaps) < GAP_TOL:
        raise GapClosedError(f"band gap {np.min(gaps):.2e} MHz below tolerance at {p}")
    return float(_wrap(LATTICE_CONSTANT / (2 * np.pi) * _wilson_phase(u)))


def wannier_center(p: ParamPoint, J: float, n_k: int = 256) -> float:
    """Lower-band Wannier centre [sites] measured from the ``+Delta`` site of its cell.

    Uses links that include the intracell offset of the second sublattice, so
    the result is the real-space charge centre modulo ``d``.
    """
    u, gaps = lower_band_states(p.Delta, p.delta, J, n_k)
    if np.min(gaps) < GAP_TOL:
        raise GapClosedError(f"band gap {np.min(gaps):.2e} MHz below tolerance at {p}")
    return float(-LATTICE_CONSTANT / (2 * np.pi) * _wilson_phase(u, intracell=True))


def delta_polarization(traj: Trajectory, J: float, n_t: int = 256, n_k: int = 256,
                       return_series: bool = False):
    """Change of :func:`polarization` over one cycle, in units of ``d``.

    ``P(t)`` is unwrapped by nearest-image continuity between consecutive
    samples. A raw step larger than ``d/4`` is treated as ambiguous.
    """
    d = LATTICE_CONSTANT
    t = np.linspace(0.0, traj.T, n_t + 1)
    D, dl = traj.arrays(t)
    u, gaps = lower_band_states(D, dl, J, n_k)
    if np.min(gaps) < GAP_TOL:
        i = np.unravel_index(np.argmin(gaps), gaps.shape)[0]
        raise GapClosedError(f"gap closes on the path near t = {t[i]:.6g} us")
    P = _wrap(d / (2 * np.pi) * _wilson_phase(u))
    steps = _wrap(np.diff(P))
    if np.max(np.abs(steps)) > d / 4:
        raise ValueError("polarization unwrapping is ambiguous; increase n_t")
    total = float(np.sum(steps)) / d
    if return_series:
        return total, t, P[0] + np.concatenate([[0.0], np.cumsum(steps)])
    return total


def wannier_state(p: ParamPoint, J: float, band: int = 0, home: int = 0, n_k: int = 64) -> np.ndarray:
    """Wannier state of ``band`` (0 lower, 1 upper) in cell ``home`` on a ring of ``n_k*d`` sites.

    Bloch vectors are gauged by making the first non-negligible component real
    and positive at the first k, then parallel transported along k; the
    residual Berry phase is spread evenly over the loop to close the gauge.
    """
    k = _kgrid(n_k)
    w, v = np.linalg.eigh(_bloch_batch(p.Delta, p.delta, J, k))
    if np.min(w[:, 1] - w[:, 0]) < GAP_TOL:
        raise GapClosedError(f"band gap below tolerance at {p}")
    u = v[:, :, band].copy()
    c = 0 if abs(u[0, 0]) > 1e-8 else 1
    u[0] *= np.exp(-1j * np.angle(u[0, c]))
    for m in range(1, n_k):
        u[m] *= np.exp(-1j * np.angle(np.vdot(u[m - 1], u[m])))
    mismatch = np.angle(np.vdot(u[-1], u[0]))
    u *= np.exp(1j * mismatch * np.arange(n_k) / n_k)[:, None]
    cells = np.arange(n_k)
    phase = np.exp(1j * np.outer(cells - home, k) * LATTICE_CONSTANT)  # (cell, k)
    psi = phase @ u / n_k
    out = psi.reshape(-1)
    return out / np.linalg.norm(out)
