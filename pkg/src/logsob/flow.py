"""Variational (tangent) flow along the classical trajectory.

The Gaussian propagation below needs the linearization F_t of the
unforced Hamiltonian flow transported along the driven trajectory y(t).
In block form, with momentum components listed before position ones,

    dF/dt = [[0, -Y(t)], [I, 0]] F,      F_0 = identity,

where Y(t) is the position-space Hessian of the trap evaluated at the
moving center: Y_jj = (2l-1) q_j(t)^(2l-2).  On the canonical runs only
the first coordinate moves, so F_t is block diagonal: one nontrivial
2x2 block for coordinate 1 and free-flow blocks [[1,0],[t,1]] for the
others (their centers sit at the origin where the Hessian vanishes).

The 2x2 block is integrated jointly with (y, ydot) by the shared
dense-output integrator, so the matrix ODE sees exactly the trajectory
it linearizes.  The same joint solve accumulates the classical action
integral S(t) = int (ydot^2/2 - W(y) + beta*y) dt used by the Gaussian
phase (the Lagrangian of the quantum coupling -beta x).

An alternative Hessian factor (2l-2) is selectable for comparison runs;
the finite-difference linearization test singles out (2l-1) as the
factor that reproduces the actual flow Jacobian.
"""

from __future__ import annotations

import math

import numpy as np

from . import integrator
from .errors import HorizonExceedsPath, OutOfRange, SymplecticityLoss
from .model import ModelParams, PhasePoint

__all__ = [
    "hessian_M",
    "integrate_F",
    "FlowMatrixPath",
    "sup_norm_F",
    "ehrenfest_horizon",
]


def hessian_M(z: PhasePoint, params: ModelParams) -> np.ndarray:
    """Phase-space Hessian of H(q,p) = |p|^2/2 + W(q) at z, shape (2d, 2d).

    Momentum block (first d rows) is the identity, position block is
    diag((2l-1) q_j^(2l-2)), cross blocks vanish.
    """
    d = z.d
    l = params.l
    out = np.zeros((2 * d, 2 * d))
    out[:d, :d] = np.eye(d)
    np.fill_diagonal(out[d:, d:], (2 * l - 1) * z.q ** (2 * l - 2))
    return out


def _opnorm_2x2(a, b, c, dd) -> float:
    """Largest singular value of [[a, b], [c, dd]] in closed form."""
    fro2 = a * a + b * b + c * c + dd * dd
    det = a * dd - b * c
    disc = fro2 * fro2 - 4.0 * det * det
    if disc < 0.0:
        disc = 0.0
    return math.sqrt(0.5 * (fro2 + math.sqrt(disc)))


class FlowMatrixPath:
    """Dense-output path t -> F_t together with the action record.

    Samples live at the accepted steps of the joint solve; F at
    arbitrary t comes from the step interpolant.  Blocks for coordinates
    j >= 2 are the closed-form free flow and are materialized on demand.
    """

    def __init__(self, params: ModelParams, result: integrator.IntegrationResult,
                 hessian_factor: int):
        self.params = params
        self._res = result
        self.hessian_factor = hessian_factor
        us = result.us
        # per-sample invariant checks are cheap and vectorized
        det = us[:, 2] * us[:, 5] - us[:, 3] * us[:, 4]
        self.max_det_defect = float(np.max(np.abs(det - 1.0)))
        if self.max_det_defect > 1e-6:
            k = int(np.argmax(np.abs(det - 1.0)))
            raise SymplecticityLoss(
                f"|det F - 1| = {self.max_det_defect:.3e} at t={result.ts[k]:.6f}; "
                "tighten tol")

    @property
    def t(self) -> np.ndarray:
        return self._res.ts

    @property
    def t_max(self) -> float:
        return self._res.t_max

    def center_at(self, t: float) -> tuple[float, float]:
        u = self._res.eval(t)
        return float(u[0]), float(u[1])

    def block_at(self, t: float) -> np.ndarray:
        """The active-coordinate 2x2 block [[F11,F12],[F21,F22]] at t."""
        u = self._res.eval(t)
        return np.array([[u[2], u[3]], [u[4], u[5]]])

    def action_at(self, t: float) -> float:
        """S(t) = int_0^t (ydot^2/2 - W(y) + beta y) ds."""
        return float(self._res.eval(t)[6])

    def matrix_at(self, t: float) -> np.ndarray:
        """Full 2d x 2d matrix in (p, q) block order."""
        d = self.params.d
        F = np.zeros((2 * d, 2 * d))
        b = self.block_at(t)
        F[0, 0] = b[0, 0]
        F[0, d] = b[0, 1]
        F[d, 0] = b[1, 0]
        F[d, d] = b[1, 1]
        for j in range(1, d):
            F[j, j] = 1.0
            F[d + j, d + j] = 1.0
            F[d + j, j] = t
        return F

    _REFINE = 8  # interpolated points per accepted step for norm scans

    def _fine_grid(self) -> tuple[np.ndarray, np.ndarray]:
        """Fixed refinement of the sample grid with per-point opnorms.

        Accepted steps can span a few hundredths of a time unit, enough
        for |F_t| to move at the 1e-3 level inside one step; sup queries
        therefore scan this denser deterministic grid.  Built lazily,
        cached on the path.
        """
        cached = getattr(self, "_fine", None)
        if cached is not None:
            return cached
        ts = self._res.ts
        frac = np.arange(1, self._REFINE) / self._REFINE
        interior = (ts[:-1, None] + np.diff(ts)[:, None] * frac).ravel()
        tf = np.unique(np.concatenate([ts, interior]))
        us = self._res.eval_many(tf)
        n = len(tf)
        out = np.empty(n)
        for i in range(n):
            s = _opnorm_2x2(us[i, 2], us[i, 3], us[i, 4], us[i, 5])
            if self.params.d > 1:
                s = max(s, _opnorm_2x2(1.0, 0.0, tf[i], 1.0))
            out[i] = s
        self._fine = (tf, out)
        return self._fine

    def opnorm_samples(self, T: float) -> tuple[np.ndarray, np.ndarray]:
        """(times, operator norms) on the refined grid with t <= T.

        For d >= 2 the norm of the free block [[1,0],[t,1]] is included;
        it is dominated by the active block in practice but not by
        construction, so both are evaluated.
        """
        tf, norms = self._fine_grid()
        k = np.searchsorted(tf, T, side="right")
        return tf[:k], norms[:k]


def integrate_F(traj, t_max: float, tol: float = 1e-11,
                hessian_factor: int | None = None) -> FlowMatrixPath:
    """Solve the variational flow along traj's dynamics up to t_max.

    The (y, ydot) equations are re-solved jointly with the four matrix
    entries and the action, under the same forcing switch as traj, so
    the linearization is evaluated on the trajectory itself rather than
    on a separately interpolated record.

    hessian_factor defaults to 2l-1 (the trap Hessian); 2l-2 is accepted
    for comparison runs.
    """
    if t_max <= 0:
        raise ValueError(f"t_max must be positive, got {t_max}")
    if t_max > traj.t_max * (1 + 1e-12):
        raise OutOfRange(
            f"trajectory covers [0, {traj.t_max}], requested t_max={t_max}")
    params = traj.params
    if hessian_factor is None:
        hessian_factor = 2 * params.l - 1
    if hessian_factor not in (2 * params.l - 1, 2 * params.l - 2):
        raise ValueError(f"hessian_factor must be {2*params.l-1} or "
                         f"{2*params.l-2}, got {hessian_factor}")
    u0 = np.array([traj.z0.q[0], traj.z0.p[0],
                   1.0, 0.0, 0.0, 1.0, 0.0])
    status, res = integrator.integrate(
        mode=1, l=params.l, hessc=float(hessian_factor),
        forcing_on=traj.forcing_on, width=params.cutoff_width,
        u0=u0, t_end=t_max, rtol=tol, atol=tol * 1e-2,
    )
    if status != integrator.STATUS_OK:
        raise SymplecticityLoss(
            f"flow integration failed with status {status} near t={res.t_max}")
    return FlowMatrixPath(params, res, hessian_factor)


def sup_norm_F(path: FlowMatrixPath, T: float) -> float:
    """|F|_T = sup over [0, T] of the operator norm of F_t.

    Evaluated as the max over accepted samples up to T plus the endpoint
    value at T itself.
    """
    if T < 0 or T > path.t_max * (1 + 1e-12):
        raise OutOfRange(f"T={T} outside path range [0, {path.t_max}]")
    _, norms = path.opnorm_samples(T)
    b = path.block_at(min(T, path.t_max))
    end = _opnorm_2x2(b[0, 0], b[0, 1], b[1, 0], b[1, 1])
    if path.params.d > 1:
        end = max(end, _opnorm_2x2(1.0, 0.0, T, 1.0))
    if norms.size == 0:
        return end
    return max(float(np.max(norms)), end)


def ehrenfest_horizon(path: FlowMatrixPath, hbar: float, kappa: float) -> float:
    """Largest T in the path range with sqrt(hbar) * |F|_T <= kappa.

    The running sup of the sampled norms is monotone, so the horizon is
    located on the sample grid (norm variation within one step is far
    below the crossing scale).
    """
    if not (0.0 < kappa <= 1.0):
        raise ValueError(f"kappa must lie in (0, 1], got {kappa}")
    if not (0.0 < hbar <= 1.0):
        raise ValueError(f"hbar must lie in (0, 1], got {hbar}")
    ts, norms = path.opnorm_samples(path.t_max)
    running = np.maximum.accumulate(norms)
    thresh = kappa / math.sqrt(hbar)
    bad = np.nonzero(running > thresh)[0]
    if bad.size == 0:
        raise HorizonExceedsPath(
            f"sqrt(hbar)|F|_T = {math.sqrt(hbar)*running[-1]:.3e} <= kappa="
            f"{kappa} over the whole path; extend the run")
    k = int(bad[0])
    return float(ts[k - 1]) if k > 0 else 0.0
