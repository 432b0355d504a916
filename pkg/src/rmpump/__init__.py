"""Thouless pumping in the disordered Rice-Mele chain and its Floquet realization on qubit lattices."""

__version__ = "0.1.0"
