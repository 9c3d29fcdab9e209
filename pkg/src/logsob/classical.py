"""Forced anharmonic oscillator: integration, passage events, energy ledger.

The auxiliary oscillator is

    y'' + y^(2l-1) = f(y, y'),

whose energy E = y'^2/2 + y^(2l)/(2l) can only grow (dE/dt = y' f >= 0).
The forcing is supported on |y| < 1, y' > 0, so energy changes only while
the oscillator traverses the kick region left to right.  Passage times
t_1 < t_2 < ... are the upward crossings y(t_n) = -1, +1 (alternating,
starting at -1); the plateaus [t_2n, t_2n+1] carry constant energy E_n
and the kick windows [t_2n+1, t_2n+2] connect E_n to E_n+1.

t = 0 sits exactly on the cutoff boundary g1(1) = 0 and is not an event;
the index convention puts t_0 := 0 so that E_0 is the initial energy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from . import integrator
from .errors import (
    EventOrderingViolation,
    InsufficientData,
    NonFiniteState,
    OutOfRange,
    PlateauViolation,
    QuadratureFailure,
    StepSizeUnderflow,
)
from .model import ModelParams, PhasePoint, forcing_f, forcing_many

__all__ = [
    "ClassicalTrajectory",
    "PassageEvent",
    "EnergyLedger",
    "GrowthReport",
    "integrate_forced",
    "detect_passages",
    "energy_ledger",
    "beta_of_t",
    "period_oracle",
    "period_prefactor",
    "growth_report",
    "export_trajectory_csv",
    "export_passages_csv",
]


@dataclass
class PassageEvent:
    """One upward crossing of |y| = 1.

    E_before / E_after are the plateau energies on either side of the
    kick window this event borders (nan if the run ends mid-window).
    """

    n: int
    t: float
    sign: int
    E_before: float
    E_after: float


@dataclass
class EnergyLedger:
    """Plateau energies E_n = E(t_2n) with t_0 = 0."""

    E_n: np.ndarray
    t_even: np.ndarray

    def increments(self) -> np.ndarray:
        return np.diff(self.E_n)

    def __len__(self) -> int:
        return len(self.E_n)


class ClassicalTrajectory:
    """Dense-output solution of the forced oscillator on [0, t_max].

    samples rows are (t, y, ydot, E) at every accepted integrator step;
    dense evaluation anywhere in range goes through the stored per-step
    data (see integrator module).  passages is filled by
    detect_passages and starts out None.
    """

    def __init__(self, params: ModelParams, z0: PhasePoint, tol: float,
                 result: integrator.IntegrationResult, forcing_on: bool):
        self.params = params
        self.z0 = z0
        self.tol = tol
        self.forcing_on = forcing_on
        self._res = result
        self.passages: list[PassageEvent] | None = None
        self._E_plat: np.ndarray | None = None

    # -- raw sample access ---------------------------------------------------

    @property
    def t(self) -> np.ndarray:
        return self._res.ts

    @property
    def y(self) -> np.ndarray:
        return self._res.us[:, 0]

    @property
    def ydot(self) -> np.ndarray:
        return self._res.us[:, 1]

    @property
    def E(self) -> np.ndarray:
        l = self.params.l
        return 0.5 * self.ydot**2 + self.y ** (2 * l) / (2 * l)

    @property
    def t_max(self) -> float:
        return self._res.t_max

    @property
    def samples(self) -> np.ndarray:
        return np.column_stack([self.t, self.y, self.ydot, self.E])

    # -- dense evaluation ----------------------------------------------------

    def state_at(self, t: float) -> tuple[float, float]:
        """(y, ydot) at any t in [0, t_max]."""
        if t < 0.0 or t > self.t_max:
            raise OutOfRange(f"t={t} outside [0, {self.t_max}]")
        u = self._res.eval(t)
        return float(u[0]), float(u[1])

    def states_at(self, ts: np.ndarray) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)
        if ts.size and (ts.min() < 0.0 or ts.max() > self.t_max):
            raise OutOfRange("query times outside trajectory range")
        return self._res.eval_many(ts)

    def energy_at(self, t: float) -> float:
        y, v = self.state_at(t)
        l = self.params.l
        return 0.5 * v * v + y ** (2 * l) / (2 * l)


def integrate_forced(params: ModelParams, z0: PhasePoint, t_max: float,
                     tol: float = 1e-10, forcing: bool = True,
                     ) -> ClassicalTrajectory:
    """Integrate the forced oscillator from z0 over [0, t_max].

    tol is the relative local-error tolerance per step and must lie in
    [1e-13, 1e-6]; the absolute tolerance is tied to it (atol = tol/100)
    so plateau energy drift stays within ~100*tol*E.
    """
    if t_max <= 0:
        raise ValueError(f"t_max must be positive, got {t_max}")
    if not (1e-13 <= tol <= 1e-6):
        raise ValueError(f"tol must lie in [1e-13, 1e-6], got {tol}")
    if z0.d != 1:
        raise ValueError("the auxiliary oscillator is one dimensional; "
                         "pass a 1-D phase point")
    u0 = np.array([z0.q[0], z0.p[0]], dtype=float)
    status, res = integrator.integrate(
        mode=0, l=params.l, hessc=0.0, forcing_on=forcing,
        width=params.cutoff_width, u0=u0, t_end=t_max,
        rtol=tol, atol=tol * 1e-2,
    )
    if status == integrator.STATUS_STEP_UNDERFLOW:
        raise StepSizeUnderflow(f"step size underflow before t={res.t_max}")
    if status == integrator.STATUS_NONFINITE:
        raise NonFiniteState(f"state overflow near t={res.t_max}")
    if status != integrator.STATUS_OK:
        raise NonFiniteState(f"integration aborted with status {status}")
    return ClassicalTrajectory(params, z0, tol, res, forcing)


def _plateau_energies(traj: ClassicalTrajectory,
                      t_odd: list[float], t_evn: list[float]) -> np.ndarray:
    """Energy of each forcing-off plateau, from accepted samples.

    Plateau n spans [t_evn[n-1], t_odd[n]] (with t_evn[-1] -> 0 and a
    missing closing event -> t_max).  The median of the accepted-step
    energies inside is used: samples carry only the integrator's local
    error, whereas the step interpolant evaluated at an event time is
    one order less accurate and would pollute the small increments.
    """
    ts = traj.t
    E_s = traj.E
    n_plat = len(t_evn) + 1
    out = np.empty(n_plat)
    for n in range(n_plat):
        t0 = 0.0 if n == 0 else t_evn[n - 1]
        t1 = t_odd[n] if n < len(t_odd) else traj.t_max
        i0 = np.searchsorted(ts, t0, side="right")
        i1 = np.searchsorted(ts, t1, side="left")
        if i1 > i0:
            out[n] = float(np.median(E_s[i0:i1]))
        else:
            out[n] = traj.energy_at(0.5 * (t0 + t1))
    return out


def detect_passages(traj: ClassicalTrajectory) -> list[PassageEvent]:
    """Find all upward crossings of y = -1 and y = +1.

    Roots are refined on the per-step interpolation polynomial to a time
    tolerance far below 1e-10.  Events must alternate in sign; a failure
    signals that the integrator tolerance was too loose.  The result is
    stored on the trajectory and returned.
    """
    res = traj._res
    ys = res.us[:, 0]
    found: list[tuple[float, int, float]] = []  # (t, sign, ydot)
    for c in (-1.0, 1.0):
        d = ys - c
        prod = d[:-1] * d[1:]
        for i in np.nonzero(prod < 0.0)[0]:
            t_root, u = integrator.refine_crossing(res, int(i), 0, c)
            if u[1] > 0.0:
                found.append((t_root, int(c), float(u[1])))
        # samples landing exactly on the crossing (t=0 excluded: not an event)
        for i in np.nonzero(d[1:] == 0.0)[0] + 1:
            if res.us[i, 1] > 0.0:
                found.append((float(res.ts[i]), int(c), float(res.us[i, 1])))
    found.sort(key=lambda e: e[0])
    signs = [s for (_, s, _) in found]
    for a, b in zip(signs[:-1], signs[1:]):
        if a == b:
            raise EventOrderingViolation(
                "consecutive passage events share sign; tighten tol")

    t_odd = [t for (t, s, _) in found if s < 0]
    t_evn = [t for (t, s, _) in found if s > 0]
    E_plat = _plateau_energies(traj, t_odd, t_evn)

    # both endpoints of kick window n carry (E_n, E_n+1)
    events: list[PassageEvent] = []
    i_odd = i_evn = 0
    for k, (t_k, sign, _) in enumerate(found):
        if sign < 0:
            n = i_odd
            i_odd += 1
        else:
            n = i_evn
            i_evn += 1
        E_b = E_plat[n]
        E_a = E_plat[n + 1] if n + 1 < len(E_plat) else math.nan
        events.append(PassageEvent(n=k + 1, t=t_k, sign=sign,
                                   E_before=E_b, E_after=E_a))
    traj.passages = events
    traj._E_plat = E_plat
    return events


def energy_ledger(traj: ClassicalTrajectory) -> EnergyLedger:
    """Extract plateau energies E_n (plateau n starts at t_2n, t_0 = 0).

    Verifies the plateau property on every forcing-off interval: the
    peak-to-peak spread of accepted-step energies there must stay within
    100*tol*max(E_n, 1), otherwise the forcing leaked into a plateau or
    the integration drifted.
    """
    if traj.passages is None:
        detect_passages(traj)
    events = traj.passages
    t_odd = [ev.t for ev in events if ev.sign < 0]
    t_evn = [ev.t for ev in events if ev.sign > 0]
    E_n = traj._E_plat
    t_even = np.concatenate([[0.0], t_evn])

    ts = traj.t
    E_s = traj.E
    tol = traj.tol
    for n in range(len(E_n)):
        t0 = t_even[n]
        t1 = t_odd[n] if n < len(t_odd) else traj.t_max
        i0 = np.searchsorted(ts, t0, side="right")
        i1 = np.searchsorted(ts, t1, side="left")
        if i1 > i0:
            seg = E_s[i0:i1]
            dev = float(np.max(seg) - np.min(seg))
            if dev > 100.0 * tol * max(E_n[n], 1.0):
                raise PlateauViolation(
                    f"energy drifted by {dev:.3e} on plateau {n} "
                    f"[{t0:.6f}, {t1:.6f}] (E_n={E_n[n]:.6f})")
    return EnergyLedger(E_n=np.asarray(E_n, dtype=float), t_even=t_even)


def beta_of_t(traj: ClassicalTrajectory, t: float) -> float:
    """Forcing record beta(t) = f(y(t), y'(t)) from the dense output."""
    if t < 0.0 or t > traj.t_max:
        raise OutOfRange(f"t={t} outside [0, {traj.t_max}]")
    if not traj.forcing_on:
        return 0.0
    y, v = traj.state_at(t)
    return forcing_f(y, v, traj.params)


_PERIOD_INTEGRAL_CACHE: dict[int, float] = {}


def _period_integral(l: int) -> float:
    """I_l = int_0^1 (1 - u^(2l))^(-1/2) du by adaptive quadrature.

    The substitution u = 1 - s^2 removes the endpoint singularity; the
    transformed integrand is smooth on [0, 1].
    """
    if l in _PERIOD_INTEGRAL_CACHE:
        return _PERIOD_INTEGRAL_CACHE[l]

    def g(s: float) -> float:
        u = 1.0 - s * s
        return 2.0 * s / math.sqrt(1.0 - u ** (2 * l))

    val, err = quad(g, 0.0, 1.0, epsabs=0.0, epsrel=1e-12, limit=200)
    if not math.isfinite(val) or err > 1e-10 * abs(val):
        raise QuadratureFailure(
            f"period integral for l={l} did not converge (err={err:.2e})")
    _PERIOD_INTEGRAL_CACHE[l] = val
    return val


def period_prefactor(params: ModelParams) -> float:
    """c_l in T(E) = c_l * E^(-(l-1)/(2l))."""
    l = params.l
    return 2.0 * math.sqrt(2.0) * (2 * l) ** (1.0 / (2 * l)) * _period_integral(l)


def period_oracle(E: float, params: ModelParams) -> float:
    """Exact period of the unforced oscillator y'' + y^(2l-1) = 0 at energy E.

    Quadrature of 4 * int_0^ymax dy / sqrt(2(E - y^(2l)/2l)) with
    ymax = (2lE)^(1/2l); rescaling y = ymax*u reduces it to an
    E-independent integral times the power-law prefactor.
    """
    if E <= 0:
        raise ValueError(f"E must be positive, got {E}")
    l = params.l
    return period_prefactor(params) * E ** (-(l - 1) / (2.0 * l))


@dataclass
class GrowthReport:
    """Fitted growth-law bands and bracket violation counts."""

    l: int
    n_windows: int
    # E(t) / log^2(2+t) band over samples with t in [t_lo, t_max]
    C1: float
    C2: float
    fit_window: tuple[float, float]
    # E_n / log^2(2+n) band, n >= 1
    a_n: float
    b_n: float
    # t_2n * log^((l-1)/l)(2+n) / n band, n >= 1
    a_t: float
    b_t: float
    # increment lower constants: min dE * exp(sqrt(2 E_{n+1})) and
    # min dE * exp(sqrt(2 K E_n)), K = 1 + 4l
    c_lower: float
    c_lower_K: float
    upper_violations: int
    ratio_violations: int
    period_violations: int
    velocity_violations: int

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["fit_window"] = list(self.fit_window)
        return d


def _band(x: np.ndarray) -> tuple[float, float]:
    return float(np.min(x)), float(np.max(x))


def growth_report(ledger: EnergyLedger, traj: ClassicalTrajectory | None,
                  t_lo: float | None = None) -> GrowthReport:
    """Fit the growth-law bands and count bracket violations.

    traj=None restricts the report to the ledger-only quantities (the
    E_n and passage-time bands); sample-based fields come out as nan.
    """
    if len(ledger) < 50:
        raise InsufficientData(
            f"need >= 50 ledger entries, got {len(ledger)}")
    E_n = ledger.E_n
    t2n = ledger.t_even
    n_idx = np.arange(1, len(E_n))
    logn = np.log(2.0 + n_idx)

    a_n, b_n = _band(E_n[1:] / logn**2)

    l = traj.params.l if traj is not None else None
    if l is None:
        # exponent unknown without params; ledger-only callers pass l via E_n
        # fits that do not need it.  Use l=2 convention for the time band.
        l = 2
    ex = (l - 1) / l
    a_t, b_t = _band(t2n[1:] * logn**ex / n_idx)

    dE = np.diff(E_n)
    c_lower = float(np.min(dE * np.exp(np.sqrt(2.0 * E_n[1:]))))
    K = 1 + 4 * l
    c_lower_K = float(np.min(dE * np.exp(np.sqrt(2.0 * K * E_n[:-1]))))
    upper = 2.0 * math.exp(math.sqrt(1.0 / l)) * np.exp(-np.sqrt(2.0 * E_n[:-1]))
    upper_violations = int(np.sum(dE > upper))
    ratio = E_n[1:] / E_n[:-1]
    ratio_violations = int(np.sum((ratio < 1.0 - 1e-12) | (ratio > K)))

    if traj is not None:
        t = traj.t
        E = traj.E
        if t_lo is None:
            t_lo = min(100.0, 0.1 * traj.t_max)
        mask = t >= t_lo
        if not np.any(mask):
            raise InsufficientData(f"no samples beyond t_lo={t_lo}")
        ratio_E = E[mask] / np.log(2.0 + t[mask]) ** 2
        C1, C2 = _band(ratio_E)
        fit_window = (float(t_lo), traj.t_max)

        # passage-gap bracket: T(E_{n+1})/2 <= t_{2n+2} - t_{2n} <= T(E_n)
        T_of = period_oracle
        pv = 0
        for n in range(len(E_n) - 1):
            gap = t2n[n + 1] - t2n[n]
            hi = T_of(E_n[n], traj.params)
            lo = 0.5 * T_of(E_n[n + 1], traj.params)
            if not (lo <= gap <= hi):
                pv += 1

        # velocity bracket on kick windows, checked at accepted samples
        vv = _velocity_violations(traj, ledger)
    else:
        C1 = C2 = math.nan
        fit_window = (math.nan, math.nan)
        pv = -1
        vv = -1

    return GrowthReport(
        l=l, n_windows=len(dE), C1=C1, C2=C2, fit_window=fit_window,
        a_n=a_n, b_n=b_n, a_t=a_t, b_t=b_t,
        c_lower=c_lower, c_lower_K=c_lower_K,
        upper_violations=upper_violations, ratio_violations=ratio_violations,
        period_violations=pv, velocity_violations=vv,
    )


def _velocity_violations(traj: ClassicalTrajectory, ledger: EnergyLedger,
                         rel_slack: float = 1e-9) -> int:
    """Count accepted samples inside kick windows with y' outside
    [sqrt(2 E_n - 1/l), sqrt(2 E_{n+1})]."""
    events = traj.passages
    l = traj.params.l
    t_odd = [ev.t for ev in events if ev.sign < 0]
    t_evn = [ev.t for ev in events if ev.sign > 0]
    ts = traj.t
    vs = traj.ydot
    E_n = ledger.E_n
    bad = 0
    for n, t1 in enumerate(t_odd):
        # kick window n pairs t_odd[n] with t_evn[n] (alternation)
        t2 = t_evn[n] if n < len(t_evn) else None
        if t2 is None or n + 1 >= len(E_n):
            break
        i0 = np.searchsorted(ts, t1, side="right")
        i1 = np.searchsorted(ts, t2, side="left")
        if i1 <= i0:
            continue
        v = vs[i0:i1]
        lo = math.sqrt(max(2.0 * E_n[n] - 1.0 / l, 0.0)) * (1.0 - rel_slack)
        hi = math.sqrt(2.0 * E_n[n + 1]) * (1.0 + rel_slack)
        bad += int(np.sum((v < lo) | (v > hi)))
    return bad


# --- CSV export --------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.17g}"


def export_trajectory_csv(traj: ClassicalTrajectory, path) -> None:
    """One row per accepted step: t,y,ydot,E,beta (17 significant digits)."""
    t = traj.t
    y = traj.y
    v = traj.ydot
    E = traj.E
    if traj.forcing_on:
        b = forcing_many(y, v, traj.params)
    else:
        b = np.zeros_like(y)
    with open(path, "w") as fh:
        fh.write("t,y,ydot,E,beta\n")
        for i in range(len(t)):
            fh.write(f"{_fmt(t[i])},{_fmt(y[i])},{_fmt(v[i])},"
                     f"{_fmt(E[i])},{_fmt(b[i])}\n")


def export_passages_csv(traj: ClassicalTrajectory, path) -> None:
    """One row per passage event: n,t,sign,E_before,E_after."""
    if traj.passages is None:
        detect_passages(traj)
    with open(path, "w") as fh:
        fh.write("n,t,sign,E_before,E_after\n")
        for ev in traj.passages:
            fh.write(f"{ev.n},{_fmt(ev.t)},{ev.sign},"
                     f"{_fmt(ev.E_before)},{_fmt(ev.E_after)}\n")
