"""Compiled inner loops for banded (nearest-neighbour) chains.

The state is stored as a real ``(L, 2M)`` array: columns ``[:M]`` hold real
parts and ``[M:]`` imaginary parts of ``M`` orbitals. Each step applies
``exp(-2j*pi*dt*H)`` through a Taylor series whose order is fixed beforehand
from a norm bound, so the truncation error sits below double precision.
"""
from __future__ import annotations

import math

import numba
import numpy as np


def taylor_order(theta: float, tol: float = 1e-16) -> int:
    """Smallest order ``m`` with ``theta**m / m! <= tol`` (and at least 4)."""
    m, term = 0, 1.0
    while term > tol or m < 4:
        m += 1
        term *= theta / m
    return m


@numba.njit(cache=True, fastmath=True)
def _apply_step(diag, up, dn, Z, a, nterms, T, U, periodic):
    L, M2 = Z.shape
    M = M2 // 2
    for j in range(L):
        for n in range(M2):
            T[j, n] = Z[j, n]
    for m in range(1, nterms + 1):
        for j in range(L):
            jp = j + 1
            jm = j - 1
            if jp == L:
                jp = 0
            if jm < 0:
                jm = L - 1
            d = diag[j]
            bu = up[j]
            bd = dn[j]
            for n in range(M2):
                U[j, n] = d * T[j, n] + bu * T[jp, n] + bd * T[jm, n]
        c = a / m
        for j in range(L):
            for n in range(M):
                tr = c * U[j, M + n]
                ti = -c * U[j, n]
                T[j, n] = tr
                T[j, M + n] = ti
                Z[j, n] += tr
                Z[j, M + n] += ti


@numba.njit(cache=True)
def _fill_bands(coef, diag0, bond0, diag_basis, bond_basis, diag, up, dn, periodic):
    L = diag.shape[0]
    nb = bond0.shape[0]
    R = coef.shape[0]
    for j in range(L):
        v = diag0[j]
        for r in range(R):
            v += coef[r] * diag_basis[r, j]
        diag[j] = v
        up[j] = 0.0
        dn[j] = 0.0
    for b in range(nb):
        v = bond0[b]
        for r in range(R):
            v += coef[r] * bond_basis[r, b]
        # bond b couples rows b and b+1 (mod L)
        up[b] = v
        k = b + 1
        if k == L:
            k = 0
        dn[k] = v


@numba.njit(cache=True)
def _current(bonds, Z):
    # -2/L sum_b g_b sum_n Im(conj(X[b+1, n]) X[b, n])
    L, M2 = Z.shape
    M = M2 // 2
    nb = bonds.shape[0]
    s = 0.0
    for b in range(nb):
        k = b + 1
        if k == L:
            k = 0
        acc = 0.0
        for n in range(M):
            xr = Z[b, n]
            xi = Z[b, M + n]
            yr = Z[k, n]
            yi = Z[k, M + n]
            acc += yr * xi - yi * xr
        s += bonds[b] * acc
    return -2.0 * s / L


@numba.njit(cache=True)
def _density(Z, out):
    L, M2 = Z.shape
    for j in range(L):
        s = 0.0
        for n in range(M2):
            s += Z[j, n] * Z[j, n]
        out[j] = s


@numba.njit(cache=True)
def evolve_banded(Z, dt, nterms, periodic, diag0, bond0, diag_basis, bond_basis,
                  coef_mid, coef_end, want_current, record_every, dens_out, cur_out):
    """Advance ``Z`` through ``len(coef_mid)`` steps in place.

    ``coef_mid[i]`` expands the step-``i`` midpoint Hamiltonian on the bases;
    ``coef_end[i]`` gives the Hamiltonian at the grid time ``i*dt`` (used only
    for the current). Densities are stored every ``record_every`` steps,
    starting with the initial state.
    """
    L, M2 = Z.shape
    n = coef_mid.shape[0]
    nb = bond0.shape[0]
    diag = np.empty(L)
    up = np.empty(L)
    dn = np.empty(L)
    bonds = np.empty(nb)
    T = np.empty_like(Z)
    U = np.empty_like(Z)
    a = 2.0 * math.pi * dt
    rec = 0
    if record_every > 0:
        _density(Z, dens_out[rec])
        rec += 1
    if want_current:
        _fill_bands(coef_end[0], diag0, bond0, diag_basis, bond_basis, diag, up, dn, periodic)
        for b in range(nb):
            bonds[b] = up[b]
        cur_out[0] = _current(bonds, Z)
    for i in range(n):
        _fill_bands(coef_mid[i], diag0, bond0, diag_basis, bond_basis, diag, up, dn, periodic)
        _apply_step(diag, up, dn, Z, a, nterms, T, U, periodic)
        if want_current:
            _fill_bands(coef_end[i + 1], diag0, bond0, diag_basis, bond_basis, diag, up, dn, periodic)
            for b in range(nb):
                bonds[b] = up[b]
            cur_out[i + 1] = _current(bonds, Z)
        if record_every > 0 and (i + 1) % record_every == 0:
            _density(Z, dens_out[rec])
            rec += 1
    return rec
