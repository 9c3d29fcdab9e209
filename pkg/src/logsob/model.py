"""Static model definitions shared by every other module.

The trap is the even anharmonic potential

    W(x) = (1/2l) * sum_j x_j^(2l),    integer l >= 2,

with mechanical energy E(q, p) = |p|^2/2 + W(q).  The forcing applied to
the auxiliary oscillator is

    f(y, ydot) = g1(y) * g2(ydot) * exp(-ydot),

where g1, g2 are C-infinity cutoffs built from the standard smooth step
s(u) = h(u)/(h(u) + h(1-u)), h(u) = exp(-1/u) for u > 0 (0 otherwise):

    g1 = 1 on |y| <= 1/2, 0 on |y| >= 1   (profile 1 - s(2|y| - 1))
    g2 = 0 for y <= 0,    1 for y >= 1    (profile s(y))

Both cutoffs accept a transition-width fraction in (0, 1]; the default 1
uses the full layers above, smaller values shrink the transition layer
symmetrically inside them (the plateaus only grow, so the support and
plateau constraints hold for every admissible width).

All kernels are numba-jitted scalar functions so the ODE right-hand side
can call them from compiled code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

__all__ = [
    "ModelParams",
    "PhasePoint",
    "potential_W",
    "mech_energy",
    "cutoff_g1",
    "cutoff_g2",
    "forcing_f",
    "forcing_many",
    "smooth_step",
]


@dataclass(frozen=True)
class ModelParams:
    """Model parameters.

    l : anharmonicity exponent, integer >= 2
    d : spatial dimension (classical part only; the grid solver is 1-D)
    hbar : semiclassical parameter in (0, 1]
    cutoff_width : fraction of the nominal transition layers used by g1, g2
    """

    l: int = 2
    d: int = 1
    hbar: float = 1.0e-3
    cutoff_width: float = 1.0

    def __post_init__(self):
        if not isinstance(self.l, (int, np.integer)) or isinstance(self.l, bool):
            raise ValueError(f"l must be an integer, got {self.l!r}")
        if self.l < 2:
            raise ValueError(f"l must be >= 2, got {self.l}")
        if not isinstance(self.d, (int, np.integer)) or self.d < 1:
            raise ValueError(f"d must be an integer >= 1, got {self.d!r}")
        if not (0.0 < self.hbar <= 1.0):
            raise ValueError(f"hbar must lie in (0, 1], got {self.hbar}")
        if not (0.0 < self.cutoff_width <= 1.0):
            raise ValueError(
                f"cutoff_width must lie in (0, 1], got {self.cutoff_width}"
            )


@dataclass(frozen=True)
class PhasePoint:
    """Point (q, p) in phase space; q and p are length-d arrays."""

    q: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.q, dtype=float))
        p = np.atleast_1d(np.asarray(self.p, dtype=float))
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)
        if q.shape != p.shape or q.ndim != 1:
            raise ValueError("q and p must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise ValueError("phase point entries must be finite")

    @property
    def d(self) -> int:
        return self.q.size


# --- jitted scalar kernels ---------------------------------------------------

@njit(cache=True)
def _h_bump(u):
    # exp(-1/u) extended by 0 for u <= 0; C-infinity on the real line
    if u <= 0.0:
        return 0.0
    return math.exp(-1.0 / u)


@njit(cache=True)
def _smooth_step(u):
    # 0 for u <= 0, 1 for u >= 1, strictly increasing in between
    if u <= 0.0:
        return 0.0
    if u >= 1.0:
        return 1.0
    a = _h_bump(u)
    return a / (a + _h_bump(1.0 - u))


@njit(cache=True)
def _g1(y, width):
    # falls from 1 to 0 on a layer centered at 3/4 inside [1/2, 1]
    ay = abs(y)
    lo = 0.75 - 0.25 * width
    return 1.0 - _smooth_step((ay - lo) / (0.5 * width))


@njit(cache=True)
def _g2(y, width):
    # rises from 0 to 1 on a layer centered at 1/2 inside [0, 1]
    lo = 0.5 - 0.5 * width
    return _smooth_step((y - lo) / width)


@njit(cache=True)
def _forcing(y, v, width):
    g1 = _g1(y, width)
    if g1 == 0.0:
        return 0.0
    g2 = _g2(v, width)
    if g2 == 0.0:
        return 0.0
    return g1 * g2 * math.exp(-v)


@njit(cache=True)
def _potential_W_1d(y, l):
    return 0.5 * y ** (2 * l) / l


@njit(cache=True)
def _forcing_many(ys, vs, width, out):
    for i in range(ys.shape[0]):
        out[i] = _forcing(ys[i], vs[i], width)


# --- public API --------------------------------------------------------------

def smooth_step(u: float) -> float:
    """The C-infinity step s(u): 0 for u <= 0, 1 for u >= 1."""
    return _smooth_step(float(u))


def potential_W(q, params: ModelParams) -> float:
    """Trap potential W(q) = (1/2l) * sum_j q_j^(2l)."""
    q = np.atleast_1d(np.asarray(q, dtype=float))
    return float(np.sum(q ** (2 * params.l)) / (2 * params.l))


def mech_energy(z: PhasePoint, params: ModelParams) -> float:
    """Mechanical energy E(q, p) = |p|^2/2 + W(q)."""
    return float(0.5 * np.dot(z.p, z.p) + potential_W(z.q, params))


def cutoff_g1(y: float, params: ModelParams) -> float:
    """Position cutoff: 1 on |y| <= 1/2, 0 on |y| >= 1, C-infinity."""
    return _g1(float(y), params.cutoff_width)


def cutoff_g2(y: float, params: ModelParams) -> float:
    """Velocity cutoff: 0 for y <= 0, 1 for y >= 1, nondecreasing."""
    return _g2(float(y), params.cutoff_width)


def forcing_f(y: float, ydot: float, params: ModelParams) -> float:
    """Kick forcing f(y, ydot) = g1(y) g2(ydot) exp(-ydot).

    Nonnegative; vanishes for |y| >= 1 or ydot <= 0, so the power
    ydot * f(y, ydot) fed into the energy balance is never negative.
    """
    return _forcing(float(y), float(ydot), params.cutoff_width)


def forcing_many(ys: np.ndarray, vs: np.ndarray, params: ModelParams) -> np.ndarray:
    """Vectorized forcing_f over matching 1-D arrays."""
    ys = np.ascontiguousarray(ys, dtype=float)
    vs = np.ascontiguousarray(vs, dtype=float)
    out = np.empty_like(ys)
    _forcing_many(ys, vs, params.cutoff_width, out)
    return out
