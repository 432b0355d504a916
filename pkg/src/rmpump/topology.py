"""Chern number of the lower Rice-Mele band over the (k, t) torus."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import GAP_TOL, GapClosedError, lower_band_states
from .schedules import Trajectory


@dataclass(frozen=True, eq=False)
class BerryGrid:
    """Lower-band states on an ``n_t x n_k`` grid and the plaquette field strengths [rad]."""

    states: np.ndarray
    field: np.ndarray

    @property
    def total(self) -> float:
        return float(self.field.sum() / (2 * np.pi))


def _link(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    z = np.sum(a.conj() * b, axis=-1)
    return z / np.abs(z)


def berry_grid(traj: Trajectory, J: float, n_k: int = 32, n_t: int = 32,
               k_shift: float = 0.0, t_shift: float = 0.0) -> BerryGrid:
    """Lattice field strengths from link variables on the discretized torus.

    ``k_shift`` and ``t_shift`` offset the grid origin in units of one grid
    spacing, which must leave the integer total unchanged.
    """
    if n_k < 16 or n_t < 16:
        raise ValueError("n_k and n_t must be >= 16")
    t = (np.arange(n_t) + t_shift) * traj.T / n_t
    D, d = traj.arrays(t)
    u, gaps = lower_band_states(D, d, J, n_k, k_shift)
    if np.min(gaps) < GAP_TOL:
        raise GapClosedError(f"band gap {np.min(gaps):.2e} MHz below tolerance on the torus")
    uk = np.roll(u, -1, axis=1)   # k + dk
    ut = np.roll(u, -1, axis=0)   # t + dt
    ukt = np.roll(uk, -1, axis=0)
    loop = _link(u, uk) * _link(uk, ukt) * np.conj(_link(ut, ukt)) * np.conj(_link(u, ut))
    # orientation: t as the first coordinate, k as the second
    return BerryGrid(u, -np.angle(loop))


def chern_number(traj: Trajectory, J: float, n_k: int = 32, n_t: int = 32, tol: float = 1e-6) -> int:
    """Integer Chern number of the lower band over one pump cycle.

    Counterclockwise traversal of the ``(Delta, delta)`` plane around the
    gapless origin gives ``+1``.
    """
    total = berry_grid(traj, J, n_k, n_t).total
    nu = int(np.rint(total))
    if abs(total - nu) > tol:
        raise ValueError(f"lattice Chern sum {total:.9f} is not an integer; refine the grid")
    return nu
