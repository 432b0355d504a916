"""Rice-Mele chain Hamiltonians: real-space, Bloch, hard-core pair sector, current.

Conventions used throughout the package:

* every frequency is cyclic (f = omega / 2pi) in MHz, times are in microseconds,
  and propagators carry the phase ``2*pi*f*t``;
* sites are labelled ``j = 1..L`` in user-facing arguments, site ``j`` carries the
  stagger sign ``(-1)**(j-1)``; arrays are 0-based, so ``stagger[i] = (-1)**i``;
* bond ``j`` joins sites ``j`` and ``j+1``; a periodic chain has the extra bond
  ``L`` joining site ``L`` back to site ``1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional

import numpy as np
import scipy.sparse as sp

LATTICE_CONSTANT = 2
MAX_PAIR_SITES = 64


@dataclass(frozen=True)
class ChainSpec:
    """Geometry of the chain and the base hopping ``J`` [MHz]."""

    L: int
    J: float
    boundary: str = "open"
    d: int = LATTICE_CONSTANT

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 2:
            raise ValueError(f"L must be an integer >= 2, got {self.L!r}")
        if self.boundary not in ("open", "periodic"):
            raise ValueError(f"boundary must be 'open' or 'periodic', got {self.boundary!r}")
        if self.boundary == "periodic" and self.L % 2:
            raise ValueError("a periodic Rice-Mele chain needs an even number of sites")
        if self.d != LATTICE_CONSTANT:
            raise ValueError("the Rice-Mele lattice constant is fixed to d = 2")
        if not np.isfinite(self.J):
            raise ValueError("J must be finite")

    @property
    def periodic(self) -> bool:
        return self.boundary == "periodic"

    @property
    def n_bonds(self) -> int:
        return self.L if self.periodic else self.L - 1

    @property
    def stagger(self) -> np.ndarray:
        return np.where(np.arange(self.L) % 2 == 0, 1.0, -1.0)


@dataclass(frozen=True)
class ParamPoint:
    """A point ``(Delta, delta)`` of the pumping plane [MHz]."""

    Delta: float
    delta: float

    def __post_init__(self):
        if not (np.isfinite(self.Delta) and np.isfinite(self.delta)):
            raise ValueError(f"non-finite parameter point {self!r}")


@dataclass(frozen=True, eq=False)
class DisorderRealization:
    """Per-site offsets ``V_j`` and per-bond offsets ``W_j`` [MHz].

    ``onsite`` is added to ``Delta`` and ``hopping`` to ``delta`` before the
    stagger sign is applied, so a bond carries ``J + (-1)**(j-1) * (delta + W_j)``.
    """

    onsite: np.ndarray
    hopping: np.ndarray
    seed: Optional[int] = None
    kind: str = "clean"
    params: dict = field(default_factory=dict)

    @classmethod
    def clean(cls, chain: ChainSpec) -> "DisorderRealization":
        return cls(np.zeros(chain.L), np.zeros(chain.n_bonds))

    def check(self, chain: ChainSpec) -> None:
        if np.shape(self.onsite) != (chain.L,):
            raise ValueError(f"on-site disorder has shape {np.shape(self.onsite)}, chain needs ({chain.L},)")
        if np.shape(self.hopping) != (chain.n_bonds,):
            raise ValueError(f"hopping disorder has shape {np.shape(self.hopping)}, chain needs ({chain.n_bonds},)")
        if not (np.all(np.isfinite(self.onsite)) and np.all(np.isfinite(self.hopping))):
            raise ValueError("disorder contains non-finite values")


def _disorder(chain: ChainSpec, dis: Optional[DisorderRealization]) -> DisorderRealization:
    if dis is None:
        return DisorderRealization.clean(chain)
    dis.check(chain)
    return dis


def chain_bands(chain: ChainSpec, p: ParamPoint, dis: Optional[DisorderRealization] = None):
    """Return ``(onsite, bonds)``: the diagonal and the bond amplitudes of the chain."""
    dis = _disorder(chain, dis)
    s = chain.stagger
    onsite = s * (p.Delta + dis.onsite)
    bonds = chain.J + s[: chain.n_bonds] * (p.delta + dis.hopping)
    return onsite, bonds


def bonds_to_dense(chain: ChainSpec, onsite: np.ndarray, bonds: np.ndarray) -> np.ndarray:
    L = chain.L
    h = np.diag(np.asarray(onsite, dtype=float))
    j = np.arange(chain.n_bonds)
    k = (j + 1) % L
    np.add.at(h, (j, k), bonds)
    np.add.at(h, (k, j), bonds)
    return h


def build_single_particle(chain: ChainSpec, p: ParamPoint,
                          dis: Optional[DisorderRealization] = None) -> np.ndarray:
    """Dense single-particle Hamiltonian [MHz], real symmetric, ``L x L``."""
    onsite, bonds = chain_bands(chain, p, dis)
    return bonds_to_dense(chain, onsite, bonds)


def build_bloch(p: ParamPoint, J: float, k: float, d: int = LATTICE_CONSTANT) -> np.ndarray:
    """Two-band Bloch Hamiltonian of the clean chain.

    The unit cell holds the ``+Delta`` site and its right neighbour; the
    intracell bond is ``J + delta`` and the intercell bond ``J - delta``.
    """
    f = (J + p.delta) + (J - p.delta) * np.exp(-1j * k * d)
    return np.array([[p.Delta, f], [np.conj(f), -p.Delta]], dtype=complex)


def bloch_energies(p: ParamPoint, J: float, k, d: int = LATTICE_CONSTANT) -> np.ndarray:
    """Closed-form band energies ``(-E(k), +E(k))``, stacked along the last axis."""
    k = np.asarray(k, dtype=float)
    f = (J + p.delta) + (J - p.delta) * np.exp(-1j * k * d)
    e = np.sqrt(p.Delta ** 2 + np.abs(f) ** 2)
    return np.stack([-e, e], axis=-1)


def pair_basis(L: int) -> np.ndarray:
    """Ordered pairs ``(i, j)``, ``i < j``, of occupied sites (0-based), lexicographic."""
    if L > MAX_PAIR_SITES:
        raise ValueError(f"two-excitation sector is limited to L <= {MAX_PAIR_SITES}, got {L}")
    return np.array(list(combinations(range(L), 2)), dtype=np.int64).reshape(-1, 2)


def _pair_operators(chain: ChainSpec):
    """Sparse pair-sector images of the on-site diagonal and of each bond."""
    if chain.L < 3:
        raise ValueError("two-excitation sector needs L >= 3")
    basis = pair_basis(chain.L)
    index = {tuple(b): n for n, b in enumerate(basis)}
    rows, cols, which = [], [], []
    for n, (a, b) in enumerate(basis):
        occ = (a, b)
        for q, site in enumerate(occ):
            other = occ[1 - q]
            for bond in range(chain.n_bonds):
                i, j = bond, (bond + 1) % chain.L
                if site == i:
                    dest = j
                elif site == j:
                    dest = i
                else:
                    continue
                if dest == other:
                    continue  # hard-core: no double occupancy
                m = index[tuple(sorted((dest, other)))]
                rows.append(m)
                cols.append(n)
                which.append(bond)
    return basis, np.array(rows), np.array(cols), np.array(which)


def build_two_excitation(chain: ChainSpec, p: ParamPoint,
                         dis: Optional[DisorderRealization] = None,
                         sparse: bool = False):
    """Hard-core two-excitation Hamiltonian on the pair basis of :func:`pair_basis`."""
    onsite, bonds = chain_bands(chain, p, dis)
    basis, rows, cols, which = _pair_operators(chain)
    dim = len(basis)
    diag = onsite[basis[:, 0]] + onsite[basis[:, 1]]
    h = sp.coo_matrix((bonds[which], (rows, cols)), shape=(dim, dim)).tocsr()
    h = h + sp.diags(diag)
    return h.tocsr() if sparse else h.toarray()


def current_operator(chain: ChainSpec, p: ParamPoint,
                     dis: Optional[DisorderRealization] = None,
                     include_bond_disorder: bool = True) -> np.ndarray:
    """Average current density ``(i/L) sum_j g_j |j+1><j| + h.c.``.

    ``g_j`` is the instantaneous bond amplitude. With ``include_bond_disorder``
    switched off the clean amplitudes ``J + (-1)**(j-1) delta`` are used instead.
    The operator counts carriers moving towards lower site index as positive, so
    that its time integral over a pump cycle equals the Chern number.
    """
    dis = _disorder(chain, dis)
    if not include_bond_disorder:
        dis = DisorderRealization(dis.onsite, np.zeros(chain.n_bonds))
    _, g = chain_bands(chain, p, dis)
    L = chain.L
    out = np.zeros((L, L), dtype=complex)
    j = np.arange(chain.n_bonds)
    np.add.at(out, ((j + 1) % L, j), 1j * g / L)
    return out + out.conj().T


def current_expectation(bonds: np.ndarray, orbitals: np.ndarray, periodic: bool) -> float:
    """Expectation of :func:`current_operator` summed over the columns of ``orbitals``."""
    X = orbitals if orbitals.ndim == 2 else orbitals[:, None]
    nb = len(bonds)
    nxt = np.roll(X, -1, axis=0)[:nb]
    z = np.sum(nxt.conj() * X[:nb], axis=1)
    return float(-2.0 * np.sum(bonds * z.imag) / X.shape[0])
