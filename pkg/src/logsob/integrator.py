"""Adaptive 8th-order Runge-Kutta integration with on-demand dense output.

The stepper is the classic 13-stage eighth-order pair with embedded 5th
and 3rd order error estimates and a 7th-degree continuous extension
(three extra stages).  The Butcher tableau is taken from
scipy.integrate (dop853 coefficients) and passed into jitted kernels as
plain arrays, so results are reproducible bit for bit run to run.

Dense output is not stored during integration.  Each accepted step keeps
only (t, u, h); the interpolation polynomial of any step is rebuilt on
demand by recomputing the stage values from that triple, which is
deterministic and therefore reproduces the exact polynomial the error
control saw.  This keeps memory at ~40 bytes/step for million-step runs
while still allowing event refinement and forcing lookups anywhere.

Two right-hand sides share the machinery, selected by `mode`:

    mode 0: u = (y, v)                      forced oscillator
    mode 1: u = (y, v, F11, F12, F21, F22, S)

In mode 1 the 2x2 block of the linearized flow for the active coordinate
rides along (rows ordered momentum first), plus the running action
integral S(t) = int (p q' - H) ds used for the Gaussian phase.
"""

from __future__ import annotations

import numpy as np
from numba import njit
from scipy.integrate._ivp import dop853_coefficients as _dc

from .model import _forcing, _potential_W_1d

__all__ = ["IntegrationResult", "integrate", "dense_eval", "refine_crossing"]

# Tableau as contiguous float64 arrays; baked into call sites, not globals,
# so the jitted functions stay cacheable.
_A = np.ascontiguousarray(_dc.A, dtype=np.float64)
_B = np.ascontiguousarray(_dc.B, dtype=np.float64)
_C = np.ascontiguousarray(_dc.C, dtype=np.float64)
_E3 = np.ascontiguousarray(_dc.E3, dtype=np.float64)
_E5 = np.ascontiguousarray(_dc.E5, dtype=np.float64)
_D = np.ascontiguousarray(_dc.D, dtype=np.float64)

_N_STAGES = 12          # stages of the propagating method
_N_EXTENDED = 16        # including the three dense-output stages
_ERR_EXP = -1.0 / 8.0   # error estimator order 7
_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0

STATUS_OK = 0
STATUS_STEP_UNDERFLOW = 1
STATUS_NONFINITE = 2
STATUS_MAX_STEPS = 3


@njit(cache=True)
def _rhs(mode, l, hessc, f_on, width, u, du):
    y = u[0]
    v = u[1]
    acc = -(y ** (2 * l - 1))
    if f_on == 1:
        fval = _forcing(y, v, width)
        acc += fval
    else:
        fval = 0.0
    du[0] = v
    du[1] = acc
    if mode == 1:
        ups = hessc * y ** (2 * l - 2)
        du[2] = -ups * u[4]
        du[3] = -ups * u[5]
        du[4] = u[2]
        du[5] = u[3]
        du[6] = 0.5 * v * v - _potential_W_1d(y, l) + fval * y


@njit(cache=True)
def _stages12(mode, l, hessc, f_on, width, y, h, A, C, B, K, y_new):
    """Fill K[0..12] for one step from state y over width h; set y_new."""
    n = y.shape[0]
    ytmp = np.empty(n)
    _rhs(mode, l, hessc, f_on, width, y, K[0])
    for s in range(1, _N_STAGES):
        for i in range(n):
            acc = 0.0
            for j in range(s):
                acc += A[s, j] * K[j, i]
            ytmp[i] = y[i] + h * acc
        _rhs(mode, l, hessc, f_on, width, ytmp, K[s])
    for i in range(n):
        acc = 0.0
        for j in range(_N_STAGES):
            acc += B[j] * K[j, i]
        y_new[i] = y[i] + h * acc
    _rhs(mode, l, hessc, f_on, width, y_new, K[_N_STAGES])


@njit(cache=True)
def _error_norm(K, h, y, y_new, rtol, atol):
    n = y.shape[0]
    err5_2 = 0.0
    err3_2 = 0.0
    for i in range(n):
        e5 = 0.0
        e3 = 0.0
        for j in range(_N_STAGES + 1):
            e5 += _E5_G[j] * K[j, i]
            e3 += _E3_G[j] * K[j, i]
        sc = atol + rtol * max(abs(y[i]), abs(y_new[i]))
        e5 /= sc
        e3 /= sc
        err5_2 += e5 * e5
        err3_2 += e3 * e3
    if err5_2 == 0.0 and err3_2 == 0.0:
        return 0.0
    denom = err5_2 + 0.01 * err3_2
    return abs(h) * err5_2 / np.sqrt(denom * n)


# _error_norm needs the E arrays; keep them as jit-visible module constants
# (read-only, never mutated, identical across processes).
_E3_G = _E3
_E5_G = _E5


@njit(cache=True)
def _initial_step(mode, l, hessc, f_on, width, u0, f0, t_end, rtol, atol):
    n = u0.shape[0]
    d0 = 0.0
    d1 = 0.0
    for i in range(n):
        sc = atol + rtol * abs(u0[i])
        d0 += (u0[i] / sc) ** 2
        d1 += (f0[i] / sc) ** 2
    d0 = np.sqrt(d0 / n)
    d1 = np.sqrt(d1 / n)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    u1 = np.empty(n)
    f1 = np.empty(n)
    for i in range(n):
        u1[i] = u0[i] + h0 * f0[i]
    _rhs(mode, l, hessc, f_on, width, u1, f1)
    d2 = 0.0
    for i in range(n):
        sc = atol + rtol * abs(u0[i])
        d2 += ((f1[i] - f0[i]) / sc) ** 2
    d2 = np.sqrt(d2 / n) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / 8.0)
    return min(min(100.0 * h0, h1), t_end)


@njit(cache=True)
def _integrate_loop(mode, l, hessc, f_on, width, u0, t_end, rtol, atol,
                    max_steps, A, C, B):
    n = u0.shape[0]
    cap = 65536
    ts = np.empty(cap + 1)
    hs = np.empty(cap)
    us = np.empty((cap + 1, n))
    ts[0] = 0.0
    us[0, :] = u0

    K = np.empty((_N_EXTENDED, n))
    y = u0.copy()
    y_new = np.empty(n)
    f0 = np.empty(n)
    _rhs(mode, l, hessc, f_on, width, y, f0)
    h = _initial_step(mode, l, hessc, f_on, width, u0, f0, t_end, rtol, atol)

    t = 0.0
    nstep = 0
    rejected = False
    status = STATUS_OK
    while t < t_end:
        if nstep >= max_steps:
            status = STATUS_MAX_STEPS
            break
        if h < 1e-14 * max(1.0, abs(t)):
            status = STATUS_STEP_UNDERFLOW
            break
        last = False
        if t + h >= t_end:
            h = t_end - t
            last = True
        _stages12(mode, l, hessc, f_on, width, y, h, A, C, B, K, y_new)
        ok = True
        for i in range(n):
            if not np.isfinite(y_new[i]):
                ok = False
        if not ok:
            status = STATUS_NONFINITE
            break
        err = _error_norm(K, h, y, y_new, rtol, atol)
        if err < 1.0:
            if err == 0.0:
                factor = _MAX_FACTOR
            else:
                factor = min(_MAX_FACTOR, _SAFETY * err ** _ERR_EXP)
            if rejected:
                factor = min(1.0, factor)
            rejected = False
            # grow storage if needed
            if nstep >= cap:
                newcap = cap * 2
                ts2 = np.empty(newcap + 1)
                hs2 = np.empty(newcap)
                us2 = np.empty((newcap + 1, n))
                ts2[: cap + 1] = ts[: cap + 1]
                hs2[:cap] = hs[:cap]
                us2[: cap + 1, :] = us[: cap + 1, :]
                ts = ts2
                hs = hs2
                us = us2
                cap = newcap
            hs[nstep] = h
            t_next = t_end if last else t + h
            nstep += 1
            ts[nstep] = t_next
            us[nstep, :] = y_new
            for i in range(n):
                y[i] = y_new[i]
            t = t_next
            if last:
                break
            h = h * factor
        else:
            rejected = True
            h = h * max(_MIN_FACTOR, _SAFETY * err ** _ERR_EXP)
    return status, nstep, ts[: nstep + 1], hs[:nstep], us[: nstep + 1, :]


@njit(cache=True)
def _dense_coeffs(mode, l, hessc, f_on, width, u_old, h, A, C, B, D):
    """Rebuild the 7-coefficient interpolation stack of one accepted step."""
    n = u_old.shape[0]
    K = np.empty((_N_EXTENDED, n))
    y_new = np.empty(n)
    _stages12(mode, l, hessc, f_on, width, u_old, h, A, C, B, K, y_new)
    ytmp = np.empty(n)
    for s in range(_N_STAGES + 1, _N_EXTENDED):
        for i in range(n):
            acc = 0.0
            for j in range(s):
                acc += A[s, j] * K[j, i]
            ytmp[i] = u_old[i] + h * acc
        _rhs(mode, l, hessc, f_on, width, ytmp, K[s])
    F = np.empty((7, n))
    for i in range(n):
        delta = y_new[i] - u_old[i]
        F[0, i] = delta
        F[1, i] = h * K[0, i] - delta
        F[2, i] = 2.0 * delta - h * (K[_N_STAGES, i] + K[0, i])
    for r in range(4):
        for i in range(n):
            acc = 0.0
            for j in range(_N_EXTENDED):
                acc += D[r, j] * K[j, i]
            F[3 + r, i] = h * acc
    return F


@njit(cache=True)
def _dense_eval(F, u_old, x, out):
    """Evaluate the step polynomial at fraction x in [0, 1] of the step."""
    n = u_old.shape[0]
    for i in range(n):
        acc = 0.0
        for m in range(6, -1, -1):
            acc += F[m, i]
            if (6 - m) % 2 == 0:
                acc *= x
            else:
                acc *= 1.0 - x
        out[i] = u_old[i] + acc


@njit(cache=True)
def _dense_eval_comp(F, u_old, x, comp):
    acc = 0.0
    for m in range(6, -1, -1):
        acc += F[m, comp]
        if (6 - m) % 2 == 0:
            acc *= x
        else:
            acc *= 1.0 - x
    return u_old[comp] + acc


@njit(cache=True)
def _bisect_component(F, u_old, comp, target, xa, xb):
    """Root of u[comp](x) = target on [xa, xb] by bisection to ~1e-14."""
    fa = _dense_eval_comp(F, u_old, xa, comp) - target
    for _ in range(60):
        xm = 0.5 * (xa + xb)
        fm = _dense_eval_comp(F, u_old, xm, comp) - target
        if fa * fm <= 0.0:
            xb = xm
        else:
            xa = xm
            fa = fm
        if xb - xa < 1e-14:
            break
    return 0.5 * (xa + xb)


class IntegrationResult:
    """Accepted-step record of one adaptive integration.

    Attributes
    ----------
    ts : (m+1,) times of accepted states, ts[0] = 0
    us : (m+1, n) states at those times
    hs : (m,) step sizes actually used (us[i] -> us[i+1] over hs[i])
    """

    def __init__(self, mode, l, hessc, f_on, width, ts, us, hs):
        self.mode = mode
        self.l = l
        self.hessc = hessc
        self.f_on = f_on
        self.width = width
        self.ts = ts
        self.us = us
        self.hs = hs
        self._seg_cache_idx = -1
        self._seg_cache_F = None

    @property
    def t_max(self) -> float:
        return float(self.ts[-1])

    @property
    def n_steps(self) -> int:
        return len(self.hs)

    def segment_of(self, t: float) -> int:
        """Index i with ts[i] <= t <= ts[i+1] (clamped to valid range)."""
        i = int(np.searchsorted(self.ts, t, side="right") - 1)
        return min(max(i, 0), self.n_steps - 1)

    def _segment_coeffs(self, i: int):
        if i != self._seg_cache_idx:
            self._seg_cache_F = _dense_coeffs(
                self.mode, self.l, self.hessc, self.f_on, self.width,
                self.us[i], self.hs[i], _A, _C, _B, _D,
            )
            self._seg_cache_idx = i
        return self._seg_cache_F

    def eval(self, t: float) -> np.ndarray:
        """Dense state at time t in [0, t_max]."""
        i = self.segment_of(t)
        F = self._segment_coeffs(i)
        x = (t - self.ts[i]) / self.hs[i]
        out = np.empty(self.us.shape[1])
        _dense_eval(F, self.us[i], min(max(x, 0.0), 1.0), out)
        return out

    def eval_many(self, t: np.ndarray) -> np.ndarray:
        """Dense states at an array of times (grouped by segment)."""
        t = np.asarray(t, dtype=float)
        out = np.empty((t.size, self.us.shape[1]))
        order = np.argsort(t, kind="stable")
        for j in order:
            out[j] = self.eval(float(t[j]))
        return out


def integrate(mode: int, l: int, hessc: float, forcing_on: bool, width: float,
              u0: np.ndarray, t_end: float, rtol: float, atol: float,
              max_steps: int = 50_000_000) -> tuple[int, IntegrationResult]:
    """Run the adaptive integrator from t=0 to t_end.

    Returns (status, result); status is one of the STATUS_* codes and the
    result holds every accepted step.  Callers map nonzero statuses onto
    their own error types.
    """
    u0 = np.ascontiguousarray(u0, dtype=np.float64)
    status, nstep, ts, hs, us = _integrate_loop(
        mode, l, hessc, 1 if forcing_on else 0, width, u0, float(t_end),
        float(rtol), float(atol), max_steps, _A, _C, _B,
    )
    res = IntegrationResult(mode, l, hessc, 1 if forcing_on else 0, width,
                            ts.copy(), us.copy(), hs.copy())
    return int(status), res


def dense_eval(res: IntegrationResult, t) -> np.ndarray:
    """Module-level convenience wrapper around IntegrationResult.eval."""
    return res.eval(float(t))


def refine_crossing(res: IntegrationResult, seg: int, comp: int,
                    target: float) -> tuple[float, np.ndarray]:
    """Locate u[comp] = target inside accepted step `seg`.

    The endpoints must bracket the target.  Returns (t_root, state at
    root); time resolution ~1e-14 relative to the step, well inside the
    1e-10 event tolerance used by passage detection.
    """
    F = res._segment_coeffs(seg)
    x = _bisect_component(F, res.us[seg], comp, target, 0.0, 1.0)
    t_root = res.ts[seg] + x * res.hs[seg]
    out = np.empty(res.us.shape[1])
    _dense_eval(F, res.us[seg], x, out)
    return float(t_root), out
