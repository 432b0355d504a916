"""Pumping trajectories in the (Delta, delta) plane and disorder generators."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from .model import ChainSpec, DisorderRealization, ParamPoint

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0

VARIANTS = ("ellipse", "flipped-ellipse", "half-ellipse", "double-loop",
            "biased-circle", "piecewise")


@dataclass(frozen=True)
class Trajectory:
    """Closed path ``t -> (Delta(t), delta(t))`` with period ``T`` [us].

    Parameters
    ----------
    variant : str
        One of ``ellipse``, ``flipped-ellipse``, ``half-ellipse``, ``double-loop``,
        ``biased-circle`` or ``piecewise``.
    Delta0, delta0 : float
        Semi-axes [MHz].
    T : float
        Period [us].
    Delta1 : float
        Inner-loop amplitude of the double loop [MHz].
    delta_c : float
        Centre offset of the biased circle along delta [MHz].
    tau1, tau2 : float, optional
        Sub-periods of the double loop; default ``T/2`` each.
    orientation : int
        ``+1`` or ``-1``; multiplies the delta component of the loop variants.
    reverse : bool
        Traverse the path backwards in time.
    knots : tuple
        ``((t, Delta, delta), ...)`` for ``piecewise``, linear between knots,
        with ``t`` in units of the period (0 to 1).
    """

    variant: str
    Delta0: float
    delta0: float
    T: float
    Delta1: float = 0.0
    delta_c: float = 0.0
    tau1: Optional[float] = None
    tau2: Optional[float] = None
    orientation: int = 1
    reverse: bool = False
    knots: tuple = ()
    name: str = ""

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown trajectory variant {self.variant!r}; expected one of {VARIANTS}")
        if not (np.isfinite(self.T) and self.T > 0):
            raise ValueError(f"period T must be positive, got {self.T!r}")
        if self.orientation not in (1, -1):
            raise ValueError("orientation must be +1 or -1")
        if self.variant == "double-loop":
            t1, t2 = self.taus
            if t1 <= 0 or t2 <= 0 or abs(t1 + t2 - self.T) > 1e-12 * self.T:
                raise ValueError("double loop needs tau1, tau2 > 0 with tau1 + tau2 = T")
        if self.variant == "piecewise":
            k = np.asarray(self.knots, dtype=float)
            if k.ndim != 2 or k.shape[1] != 3 or len(k) < 2:
                raise ValueError("piecewise trajectory needs at least two (t, Delta, delta) knots")
            if abs(k[0, 0]) > 0 or abs(k[-1, 0] - 1.0) > 0 or np.any(np.diff(k[:, 0]) <= 0):
                raise ValueError("piecewise knot times must increase strictly from 0 to 1")
            if np.any(np.abs(k[0, 1:] - k[-1, 1:]) > 1e-12):
                raise ValueError("piecewise trajectory is not closed")

    @property
    def taus(self) -> tuple[float, float]:
        t1 = self.T / 2 if self.tau1 is None else self.tau1
        t2 = self.T - t1 if self.tau2 is None else self.tau2
        return t1, t2

    def with_period(self, T: float) -> "Trajectory":
        """Same path at a new period; double-loop sub-periods scale along."""
        if self.variant == "double-loop":
            t1, t2 = self.taus
            s = T / self.T
            return replace(self, T=T, tau1=t1 * s, tau2=t2 * s)
        return replace(self, T=T)

    def reversed(self) -> "Trajectory":
        return replace(self, reverse=not self.reverse)

    def arrays(self, t) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized ``(Delta(t), delta(t))`` [MHz]; ``t`` wraps modulo ``T``."""
        t = np.asarray(t, dtype=float)
        if np.any(t < 0):
            raise ValueError("trajectory time must be non-negative")
        tm = np.mod(t, self.T)
        if self.reverse:
            tm = np.mod(self.T - tm, self.T)
        phi = 2 * np.pi * tm / self.T
        o = self.orientation
        v = self.variant
        if v in ("ellipse", "biased-circle"):
            return self.Delta0 * np.cos(phi), self.delta_c + o * self.delta0 * np.sin(phi)
        if v == "flipped-ellipse":
            return self.Delta0 * np.cos(phi), self.delta_c - o * self.delta0 * np.sin(phi)
        if v == "half-ellipse":
            return self.Delta0 * np.cos(phi), self.delta_c + o * self.delta0 * np.abs(np.sin(phi))
        if v == "double-loop":
            return self._double_loop(tm)
        k = np.asarray(self.knots, dtype=float)
        x = tm / self.T
        return np.interp(x, k[:, 0], k[:, 1]), np.interp(x, k[:, 0], k[:, 2])

    def _double_loop(self, t):
        t1, t2 = self.taus
        w1, w2 = 2 * np.pi / t1, 2 * np.pi / t2
        a = 0.75 * t1
        b = a + t2
        o = self.orientation
        D0, D1, d0 = self.Delta0, self.Delta1, self.delta0
        Delta = np.where(t <= a, D0 * np.cos(w1 * t),
                         np.where(t <= b, -D1 * np.sin(w2 * (t - a)), D0 * np.sin(w1 * (t - b))))
        delta = np.where(t <= a, d0 * np.sin(w1 * t),
                         np.where(t <= b, -d0 * np.cos(w2 * (t - a)), -d0 * np.cos(w1 * (t - b))))
        return Delta, self.delta_c + o * delta

    def point(self, t: float) -> ParamPoint:
        D, d = self.arrays(t)
        return ParamPoint(float(D), float(d))

    def max_abs(self, n: int = 4096) -> tuple[float, float]:
        """Sampled ``(max|Delta|, max|delta|)`` over one period."""
        D, d = self.arrays(np.linspace(0.0, self.T, n + 1))
        return float(np.max(np.abs(D))), float(np.max(np.abs(d)))

    def loops(self) -> list["Trajectory"]:
        """Elementary closed loops: the outer and inner ellipses of a double loop."""
        if self.variant != "double-loop":
            return [self]
        t1, t2 = self.taus
        outer = Trajectory("ellipse", self.Delta0, self.delta0, t1, delta_c=self.delta_c,
                           orientation=self.orientation, reverse=self.reverse, name=f"{self.name}:outer")
        inner = Trajectory("ellipse", self.Delta1, self.delta0, t2, delta_c=self.delta_c,
                           orientation=-self.orientation, reverse=self.reverse, name=f"{self.name}:inner")
        return [outer, inner]


def sample(traj: Trajectory, t: float) -> ParamPoint:
    """Parameter point at time ``t`` [us]."""
    return traj.point(t)


# name: (variant, Delta0, delta0, J, T, extras)
_PRESETS = {
    "C1": ("flipped-ellipse", 10.0, 2.5, 2.0, 0.65, {}),
    "C2": ("half-ellipse", 10.0, 2.5, 2.0, 0.65, {"orientation": -1}),
    "C3": ("half-ellipse", 10.0, 2.5, 2.0, 0.65, {}),
    "C4": ("ellipse", 10.0, 2.5, 2.0, 0.65, {}),
    "C_on": ("ellipse", 10.0, 2.5, 2.0, 8.0, {}),
    "C_hop": ("ellipse", 5.0, 1.25, 1.0, 16.0, {}),
    "C_sl": ("biased-circle", 5.0, 1.0, 1.8, 200.0, {"delta_c": 1.2}),
    "C_dl": ("double-loop", 10.0, 2.5, 2.0, 8.0, {"Delta1": 5.0}),
}


def preset_names() -> tuple[str, ...]:
    return tuple(_PRESETS)


def named(name: str, T: Optional[float] = None, **overrides) -> tuple[Trajectory, float]:
    """Named trajectory and its base hopping ``J`` [MHz].

    ``overrides`` replace any :class:`Trajectory` field (e.g. ``Delta0=50``).
    """
    try:
        variant, D0, d0, J, T0, extra = _PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown trajectory {name!r}; known: {', '.join(_PRESETS)}") from None
    kw = dict(variant=variant, Delta0=D0, delta0=d0, T=T0, name=name, **extra)
    J = overrides.pop("J", J)
    kw.update(overrides)
    traj = Trajectory(**kw)
    if T is not None:
        traj = traj.with_period(T)
    return traj, float(J)


def winding_about(traj: Trajectory, point: ParamPoint = ParamPoint(0.0, 0.0),
                  n_samples: int = 4096, tol: float = 1e-9) -> int:
    """Signed winding number of the sampled path around ``point``."""
    D, d = traj.arrays(np.linspace(0.0, traj.T, n_samples + 1))
    x, y = D - point.Delta, d - point.delta
    r = np.hypot(x, y)
    if np.min(r) <= tol:
        raise ValueError("path passes through the reference point")
    ang = np.unwrap(np.arctan2(y, x))
    return int(np.rint((ang[-1] - ang[0]) / (2 * np.pi)))


# ---------------------------------------------------------------------------
# disorder

DISORDER_KINDS = ("clean", "uniform-onsite", "uniform-hopping", "quasiperiodic-intracell")


def substream(master: int, index: int) -> np.random.Generator:
    """Independent Philox generator for realization ``index`` of a master seed."""
    ss = np.random.SeedSequence(int(master), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))


def _rng(seed, stream):
    if isinstance(seed, np.random.Generator):
        return seed
    return substream(seed, stream)


def generate_uniform_onsite(chain: ChainSpec, V: float, seed: int = 0, stream: int = 0) -> DisorderRealization:
    """``V_j`` i.i.d. uniform on ``[-V, V]``, no bond disorder."""
    if not V >= 0:
        raise ValueError(f"V must be >= 0, got {V}")
    v = _rng(seed, stream).uniform(-V, V, chain.L)
    return DisorderRealization(v, np.zeros(chain.n_bonds), seed=seed if isinstance(seed, int) else None,
                               kind="uniform-onsite", params={"V": V, "stream": stream})


def generate_uniform_hopping(chain: ChainSpec, W: float, seed: int = 0, stream: int = 0) -> DisorderRealization:
    """``W_j`` i.i.d. uniform on ``[-W, W]`` for every bond, no on-site disorder."""
    if not W >= 0:
        raise ValueError(f"W must be >= 0, got {W}")
    w = _rng(seed, stream).uniform(-W, W, chain.n_bonds)
    return DisorderRealization(np.zeros(chain.L), w, seed=seed if isinstance(seed, int) else None,
                               kind="uniform-hopping", params={"W": W, "stream": stream})


def generate_quasiperiodic_intracell(chain: ChainSpec, Wp: float, beta_policy: Union[str, float] = "random",
                                     seed: int = 0, stream: int = 0, alpha: float = GOLDEN) -> DisorderRealization:
    """Quasi-periodic modulation ``Wp*cos(2*pi*alpha*k + beta)`` on intracell bonds.

    Intracell bonds are the even 0-based bonds ``j = 2k`` (first, third, ...
    bond in 1-based labels). ``beta_policy`` is a number for a fixed phase or
    ``"random"`` for a phase drawn uniformly from ``[-pi, pi)`` per realization.
    """
    if not Wp >= 0:
        raise ValueError(f"Wp must be >= 0, got {Wp}")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if beta_policy == "random":
        beta = float(_rng(seed, stream).uniform(-np.pi, np.pi))
    else:
        beta = float(beta_policy)
    w = np.zeros(chain.n_bonds)
    k = np.arange(len(w[0::2]))
    w[0::2] = Wp * np.cos(2 * np.pi * alpha * k + beta)
    return DisorderRealization(np.zeros(chain.L), w, seed=seed if isinstance(seed, int) else None,
                               kind="quasiperiodic-intracell",
                               params={"Wp": Wp, "alpha": alpha, "beta": beta, "stream": stream})


@dataclass(frozen=True)
class DisorderConfig:
    """Disorder family, strength [MHz] and seeding for an ensemble."""

    kind: str = "clean"
    strength: float = 0.0
    alpha: float = GOLDEN
    beta: Union[str, float] = "random"
    seed: int = 0

    def __post_init__(self):
        if self.kind not in DISORDER_KINDS:
            raise ValueError(f"unknown disorder kind {self.kind!r}; expected one of {DISORDER_KINDS}")
        if not (np.isfinite(self.strength) and self.strength >= 0):
            raise ValueError(f"disorder strength must be >= 0, got {self.strength}")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if not (self.beta == "random" or isinstance(self.beta, (int, float))):
            raise ValueError("beta must be 'random' or a number")

    def realize(self, chain: ChainSpec, index: int, strength: Optional[float] = None) -> DisorderRealization:
        """Realization ``index`` of the ensemble, drawn from ``substream(seed, index)``."""
        s = self.strength if strength is None else strength
        if self.kind == "clean":
            return DisorderRealization.clean(chain)
        if self.kind == "uniform-onsite":
            return generate_uniform_onsite(chain, s, self.seed, index)
        if self.kind == "uniform-hopping":
            return generate_uniform_hopping(chain, s, self.seed, index)
        return generate_quasiperiodic_intracell(chain, s, self.beta, self.seed, index, self.alpha)
