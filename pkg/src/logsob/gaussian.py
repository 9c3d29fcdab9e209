"""Closed-form Gaussian propagation under the quadratic Hamiltonian.

A coherent state centered at z = (q, p) is the phase-space translate of
the ground Gaussian by the unitary shift operator

    [T(z) psi](x) = e^{-ipq/2h} e^{ipx/h} psi(x - q),

which gives, with width parameter Theta,

    phi_z(x) = (pi*h)^{-1/4} exp( (i/h) [ Theta (x-q)^2 / 2
                                          + p (x-q) + p q / 2 ] ),

Theta = i initially.  Under the time-dependent quadratic approximation
of the Hamiltonian around the classical trajectory the state stays in
this family with an extra scalar phase and a norm factor:

    psi_t(x) = (pi*h)^{-1/4} Q_t^{-1/2}
               exp( (i/h) [ Theta_t (x-q_t)^2 / 2 + p_t (x-q_t)
                            + S_t + q_0 p_0 / 2 ] ),

where (P_t, Q_t) = F_t (i, 1) under the variational flow (momentum row
first), Theta_t = P_t / Q_t, and S_t is the classical action along the
trajectory.  Q_t never vanishes (Im Theta > 0 is conserved), and the
branch of Q^{-1/2} is fixed by tracking arg Q continuously from
arg Q_0 = 0.

Phase-space expectations in the evolved state reduce to a Gaussian
average over the initial frame:

    <a> = pi^{-d} int a( sqrt(h) F_t zeta + z_t ) e^{-|zeta|^2} d zeta,

evaluated with tensor Gauss-Hermite quadrature; the formula is exact
for every polynomial the rule integrates exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .classical import ClassicalTrajectory
from .errors import OutOfRange, SingularWidth
from .flow import FlowMatrixPath
from .model import ModelParams, PhasePoint

__all__ = [
    "GaussianState",
    "QuadratureRule",
    "coherent_state",
    "evolve_gaussian",
    "expectation_observable",
    "predicted_sobolev_lower",
]


@dataclass(frozen=True)
class GaussianState:
    """Squeezed Gaussian in the trajectory-centered closed form.

    F is the active-coordinate 2x2 flow block (momentum row first) that
    produced this state; arg_Q is the continuously tracked argument of
    Q = F22 + i F21 fixing the square-root branch.
    """

    hbar: float
    t: float
    q: float
    p: float
    Q: complex
    P: complex
    S: float
    phase_ref: float
    arg_Q: float
    F: np.ndarray

    @property
    def Theta(self) -> complex:
        return self.P / self.Q

    @property
    def center(self) -> PhasePoint:
        return PhasePoint(q=[self.q], p=[self.p])

    @property
    def norm_factor(self) -> float:
        """Prefactor modulus (pi*hbar)^{-1/4} |Q|^{-1/2}; with
        Im(conj(Q) P) = 1 this keeps the L2 norm at exactly 1."""
        return (math.pi * self.hbar) ** -0.25 * abs(self.Q) ** -0.5

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """Complex amplitudes at positions x."""
        x = np.asarray(x, dtype=float)
        h = self.hbar
        pref = self.norm_factor * np.exp(-0.5j * self.arg_Q)
        dx = x - self.q
        phase = 0.5 * self.Theta * dx * dx + self.p * dx \
            + self.S + self.phase_ref
        return pref * np.exp(1j * phase / h)


def coherent_state(z: PhasePoint, hbar: float) -> GaussianState:
    """Ground coherent state centered at z (1-D)."""
    if not (0.0 < hbar <= 1.0):
        raise ValueError(f"hbar must lie in (0, 1], got {hbar}")
    if z.d != 1:
        raise ValueError("coherent_state is implemented for d = 1")
    q, p = float(z.q[0]), float(z.p[0])
    return GaussianState(
        hbar=hbar, t=0.0, q=q, p=p,
        Q=1.0 + 0.0j, P=1.0j, S=0.0, phase_ref=0.5 * q * p,
        arg_Q=0.0, F=np.eye(2),
    )


def _wrap_angle(a: float) -> float:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def evolve_gaussian(state0: GaussianState, traj: ClassicalTrajectory,
                    path: FlowMatrixPath, t: float) -> GaussianState:
    """Propagate state0 to time t under the quadratic approximation.

    traj supplies the center z_t and path the flow block, action and the
    unwrapped arg Q record; both must cover [0, t] and start at the
    state's center.
    """
    if t < 0 or t > path.t_max * (1 + 1e-12) or t > traj.t_max * (1 + 1e-12):
        raise OutOfRange(f"t={t} outside covered range")
    if abs(state0.q - traj.z0.q[0]) > 1e-12 or abs(state0.p - traj.z0.p[0]) > 1e-12:
        raise ValueError("state0 must be centered at the trajectory start")
    u = path._res.eval(min(t, path.t_max))
    y, v = float(u[0]), float(u[1])
    F = np.array([[u[2], u[3]], [u[4], u[5]]])
    S = float(u[6])
    Q = complex(u[5], u[4])   # F22 + i F21
    P = complex(u[3], u[2])   # F12 + i F11
    aq = abs(Q)
    if not np.isfinite(aq) or aq < 1e-8:
        raise SingularWidth(f"|Q| = {aq:.3e} at t={t}")
    arg_Q = _arg_Q_tracked(path, t, Q)
    return GaussianState(
        hbar=state0.hbar, t=float(t), q=y, p=v,
        Q=Q, P=P, S=S, phase_ref=state0.phase_ref,
        arg_Q=arg_Q, F=F,
    )


def _arg_Q_tracked(path: FlowMatrixPath, t: float, Q: complex) -> float:
    """arg Q at t, continued from the accepted-sample unwrap.

    arg Q advances by well under pi per accepted step (steps resolve the
    oscillation period), so sample-anchored unwrapping is unambiguous.
    """
    unw = getattr(path, "_argQ_unwrapped", None)
    if unw is None:
        us = path._res.us
        raw = np.angle(us[:, 5] + 1j * us[:, 4])
        unw = np.unwrap(raw)
        path._argQ_unwrapped = unw
    k = path._res.segment_of(t)
    base = unw[k]
    return base + _wrap_angle(float(np.angle(Q)) - _wrap_angle(base))


@dataclass(frozen=True)
class QuadratureRule:
    """Tensor Gauss-Hermite rule with the given 1-axis order."""

    order: int = 24

    def __post_init__(self):
        if not isinstance(self.order, (int, np.integer)) or self.order < 1:
            raise ValueError(f"order must be a positive integer, got {self.order}")


@lru_cache(maxsize=32)
def _gh_nodes(order: int):
    x, w = np.polynomial.hermite.hermgauss(order)
    return x, w


def expectation_observable(a, state: GaussianState,
                           rule: QuadratureRule = QuadratureRule()) -> float:
    """Phase-space expectation <a> in the evolved state.

    a must accept vectorized (q, p) arrays.  The Gaussian average is
    taken over the initial frame and pushed through sqrt(hbar) F zeta
    + z_t; exact whenever a composed with that affine map is a
    polynomial of degree <= 2*order - 1 per axis.
    """
    if rule.order < 1:
        raise ValueError("rule order must be >= 1")
    x, w = _gh_nodes(rule.order)
    sh = math.sqrt(state.hbar)
    zp, zq = np.meshgrid(x, x, indexing="ij")
    F = state.F
    ps = sh * (F[0, 0] * zp + F[0, 1] * zq) + state.p
    qs = sh * (F[1, 0] * zp + F[1, 1] * zq) + state.q
    vals = a(qs, ps)
    return float(np.einsum("i,j,ij->", w, w, vals) / math.pi)


def predicted_sobolev_lower(t: float, r: int, fit: dict) -> float:
    """Lower-bound curve C1~ [log(2+t)]^r from fitted classical constants.

    fit must provide C1 (energy growth floor) and Cprime, the norm
    bridge constants per r (Cprime[0] = 1: the r = 0 norm is the plain
    L2 norm).  The prediction is sqrt(C1^r / 2) / Cprime_r, the floor
    that survives halving the expectation by the quadrature remainder.
    """
    if r < 0 or int(r) != r:
        raise ValueError(f"r must be a nonnegative integer, got {r}")
    if t < 2:
        raise ValueError(f"t must be >= 2, got {t}")
    C1 = float(fit["C1"])
    cp = fit["Cprime"]
    Cp_r = float(cp[str(r)] if isinstance(cp, dict) else cp[r])
    c1t = C1 ** (0.5 * r) / (math.sqrt(2.0) * Cp_r)
    return c1t * math.log(2.0 + t) ** r
