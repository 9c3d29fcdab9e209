"""Grid propagation of the driven Schrodinger equation and its quadratic twin.

The full equation on the line is

    i h dpsi/dt = [ -h^2 Delta / 2 + W(x) - beta(t) x ] psi,

with W(x) = x^(2l) / (2l) and beta(t) the forcing record of the
classical run.  The coupling carries a minus sign so the Ehrenfest
force on the packet, -W' + beta, is the same force that drives the
classical trajectory; with the opposite sign the packet and the
moving expansion center drift apart as soon as the forcing fires.
The comparison dynamics replaces W(x) - beta x by its second-order
Taylor polynomial around the moving classical center.
Both are advanced by Strang splitting: half potential multiply, exact
spectral kinetic step exp(-i dt h k^2 / 2), half potential multiply.
Every factor is a unit-modulus multiplier, so each step is exactly
unitary in the discrete L2 norm.

Spectral Sobolev norms use the operator H = 1 - h^2 Delta + W applied
repeatedly: ||psi||_r = sqrt(<psi, H^r psi>) for integer r.

Grid sizing follows the classical trajectory: the domain covers the
largest classical excursion plus a Gaussian tail buffer, and the
spacing resolves the shortest de Broglie wavelength 2 pi h / p_max with
at least 8 points.  The wavenumber band then extends 4x beyond p_max,
which is the headroom the aliasing guard polices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import fft, ifft

from .classical import ClassicalTrajectory
from .errors import (
    AliasingDetected,
    CenterOutOfDomain,
    GridTooLarge,
    HorizonViolated,
    NonFiniteAmplitudes,
    OutOfRange,
)
from .flow import FlowMatrixPath, sup_norm_F
from .gaussian import GaussianState, coherent_state
from .model import ModelParams, PhasePoint, forcing_many

__all__ = [
    "Grid",
    "GridSafety",
    "WaveFunction",
    "ErrorCurves",
    "init_grid",
    "sample_coherent",
    "step_full",
    "step_quadratic",
    "apply_Hl",
    "sobolev_norm",
    "run_comparison",
    "default_dt",
    "relax_ground_state",
    "save_checkpoint",
    "load_checkpoint",
]


@dataclass(frozen=True)
class GridSafety:
    """Sizing factors for init_grid.

    width_bound caps the state's width inflation relative to the initial
    coherent width (max |Q_t| for a quadratic run, a modest constant for
    the trapped full dynamics); the tail buffer is n_sigma * sqrt(hbar)
    * width_bound.  pad is extra dead space outside the buffer, kept out
    of the stability estimate.  c_res * (2 pi hbar / p_max) is the
    spacing cap: at least 1/c_res points per minimal wavelength.
    """

    n_sigma: float = 6.0
    width_bound: float = 4.0
    pad: float = 0.25
    c_res: float = 0.125
    max_N: int = 2 ** 22


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid with spectral wavenumbers."""

    x_min: float
    x_max: float
    N: int
    hbar: float
    x_supp: float   # support radius used for the stability estimate
    p_max: float    # declared classical momentum bound

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.N

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.N)

    @property
    def k(self) -> np.ndarray:
        return 2.0 * math.pi * np.fft.fftfreq(self.N, d=self.dx)


@dataclass
class WaveFunction:
    """Complex amplitudes on a grid at time t."""

    grid: Grid
    amplitudes: np.ndarray
    t: float

    def norm(self) -> float:
        a = self.amplitudes
        return math.sqrt(self.grid.dx * float(np.real(np.vdot(a, a))))

    def copy(self) -> "WaveFunction":
        return WaveFunction(self.grid, self.amplitudes.copy(), self.t)


def _max_energy(traj: ClassicalTrajectory, T: float) -> float:
    ts = traj.t
    k = np.searchsorted(ts, T, side="right")
    k = max(k, 1)
    return float(np.max(traj.E[:k]))


def init_grid(params: ModelParams, traj: ClassicalTrajectory, T: float,
              safety: GridSafety = GridSafety()) -> Grid:
    """Size a grid for propagation over [0, T] along traj.

    Domain: largest classical excursion (2l E)^(1/2l) plus the Gaussian
    buffer n_sigma * sqrt(hbar) * width_bound plus pad, symmetric about
    the origin.  Spacing: c_res * 2 pi hbar / p_max with p_max =
    sqrt(2 E_max); N is rounded up to a power of two.
    """
    if T > traj.t_max * (1 + 1e-12):
        raise OutOfRange(f"trajectory covers [0, {traj.t_max}], requested {T}")
    l = params.l
    h = params.hbar
    E_max = _max_energy(traj, T)
    excursion = (2 * l * E_max) ** (1.0 / (2 * l))
    sigma_buf = math.sqrt(h) * safety.width_bound
    x_supp = excursion + safety.n_sigma * sigma_buf
    edge = x_supp + safety.pad
    # resting orbits have zero classical momentum but the state itself
    # carries the sqrt(hbar) quantum scale; floor the band there
    p_max = max(math.sqrt(2.0 * E_max), math.sqrt(h))
    dx_cap = safety.c_res * 2.0 * math.pi * h / p_max
    N = 1 << max(4, math.ceil(math.log2(2.0 * edge / dx_cap)))
    if N > safety.max_N:
        raise GridTooLarge(
            f"resolution rule needs N={N} > cap {safety.max_N}; "
            "reduce T or raise hbar")
    return Grid(x_min=-edge, x_max=edge, N=N, hbar=h,
                x_supp=x_supp, p_max=p_max)


def sample_coherent(z: PhasePoint, hbar: float, grid: Grid) -> WaveFunction:
    """Coherent state sampled on the grid (shared closed-form phase)."""
    q, p = float(z.q[0]), float(z.p[0])
    margin = 6.0 * math.sqrt(hbar / 2.0)
    if q - margin < grid.x_min or q + margin > grid.x_max:
        raise CenterOutOfDomain(
            f"center q={q} within {margin:.3g} of the domain edge")
    k_band = math.pi * hbar / grid.dx
    if abs(p) + 6.0 * math.sqrt(hbar / 2.0) > 0.9 * k_band:
        raise CenterOutOfDomain(
            f"momentum p={p} too close to the spectral band edge {k_band:.3g}")
    st = coherent_state(z, hbar)
    return WaveFunction(grid, st.evaluate(grid.x).astype(np.complex128), 0.0)


def _potential_full(grid: Grid, l: int, beta: float) -> np.ndarray:
    x = grid.x
    return x ** (2 * l) / (2 * l) - beta * x


def _potential_quad(grid: Grid, l: int, hess_factor: float,
                    q: float, beta: float) -> np.ndarray:
    x = grid.x
    dxq = x - q
    W = q ** (2 * l) / (2 * l)
    W1 = q ** (2 * l - 1)
    Y = hess_factor * q ** (2 * l - 2)
    return (W - beta * q) + (W1 - beta) * dxq + 0.5 * Y * dxq * dxq


def _check_finite(a: np.ndarray, where: str) -> None:
    if not np.all(np.isfinite(a.view(np.float64))):
        raise NonFiniteAmplitudes(f"non-finite amplitudes after {where}")


def step_full(psi: WaveFunction, t: float, dt: float,
              traj: ClassicalTrajectory) -> WaveFunction:
    """One Strang step of the full equation starting at time t.

    beta is evaluated once at the midpoint t + dt/2 and held through
    both potential half-steps.
    """
    from .classical import beta_of_t
    g = psi.grid
    h = g.hbar
    beta = beta_of_t(traj, t + 0.5 * dt)
    V = _potential_full(g, traj.params.l, beta)
    half = np.exp(-0.5j * dt / h * V)
    kin = np.exp(-0.5j * dt * h * g.k ** 2)
    a = half * psi.amplitudes
    a = ifft(kin * fft(a, workers=1), workers=1)
    a = half * a
    _check_finite(a, "step_full")
    return WaveFunction(g, a, t + dt)


def step_quadratic(psi: WaveFunction, t: float, dt: float,
                   traj: ClassicalTrajectory,
                   path: FlowMatrixPath) -> WaveFunction:
    """One Strang step of the quadratic comparison equation.

    The potential is the second-order Taylor polynomial of W - beta x
    around the classical center at the midpoint time; its Hessian factor
    matches the one used by the flow path, so the grid propagation and
    the closed-form Gaussian solve the same equation.
    """
    from .classical import beta_of_t
    g = psi.grid
    h = g.hbar
    tm = t + 0.5 * dt
    beta = beta_of_t(traj, tm)
    qc, _ = path.center_at(min(tm, path.t_max))
    V = _potential_quad(g, traj.params.l, path.hessian_factor, qc, beta)
    half = np.exp(-0.5j * dt / h * V)
    kin = np.exp(-0.5j * dt * h * g.k ** 2)
    a = half * psi.amplitudes
    a = ifft(kin * fft(a, workers=1), workers=1)
    a = half * a
    _check_finite(a, "step_quadratic")
    return WaveFunction(g, a, t + dt)


def _tail_fraction(spec: np.ndarray, k: np.ndarray) -> float:
    """Norm fraction carried by the top 10% of wavenumbers."""
    cut = 0.9 * float(np.max(np.abs(k)))
    tail = np.abs(k) >= cut
    tot = float(np.sum(np.abs(spec) ** 2))
    if tot == 0.0:
        return 0.0
    return math.sqrt(float(np.sum(np.abs(spec[tail]) ** 2)) / tot)


def apply_Hl(psi: WaveFunction, params: ModelParams) -> WaveFunction:
    """Apply H = 1 - hbar^2 Delta + W spectrally/pointwise.

    Raises AliasingDetected when the top decade of wavenumbers carries
    more than 1e-8 of the output norm, which signals that the result is
    no longer resolved on this grid.
    """
    g = psi.grid
    h = g.hbar
    k = g.k
    spec = fft(psi.amplitudes, workers=1)
    lap = ifft((h * k) ** 2 * spec, workers=1)
    W = g.x ** (2 * params.l) / (2 * params.l)
    out = psi.amplitudes + lap + W * psi.amplitudes
    out_spec = fft(out, workers=1)
    frac = _tail_fraction(out_spec, k)
    if frac > 1e-8:
        raise AliasingDetected(
            f"spectral tail fraction {frac:.3e} after applying the operator")
    return WaveFunction(g, out, psi.t)


def sobolev_norm(psi: WaveFunction, r: int, params: ModelParams) -> float:
    """||psi||_r = sqrt(<psi, H^r psi>) for integer r >= 0."""
    if r < 0 or int(r) != r:
        raise ValueError(f"r must be a nonnegative integer, got {r}")
    if r == 0:
        return psi.norm()
    cur = psi
    for _ in range(int(r)):
        cur = apply_Hl(cur, params)
    val = psi.grid.dx * float(np.real(np.vdot(psi.amplitudes, cur.amplitudes)))
    return math.sqrt(max(val, 0.0))


def default_dt(grid: Grid, traj: ClassicalTrajectory, T: float,
               dt_scale: float = 1.0) -> float:
    """Stability-budget step: min(0.5 hbar / V_max, 0.5 dx / p_max).

    V_max is the largest |W - beta x| over the state-support radius
    x_supp (the pad region beyond it holds no amplitude and does not
    constrain dt).  dt_scale < 1 tightens the step for high-accuracy
    oracle comparisons.
    """
    h = grid.hbar
    beta_max = 0.0
    if traj.forcing_on:
        b = forcing_many(traj.y, traj.ydot, traj.params)
        beta_max = float(np.max(b))
    xs = grid.x_supp
    V_max = xs ** (2 * traj.params.l) / (2 * traj.params.l) + beta_max * xs
    dt = min(0.5 * h / V_max, 0.5 * grid.dx / grid.p_max)
    return dt * dt_scale


def _beta_midpoints(traj: ClassicalTrajectory, t0: float, dt: float,
                    n: int) -> np.ndarray:
    """beta at the n midpoint times t0 + (j + 1/2) dt."""
    if not traj.forcing_on:
        return np.zeros(n)
    tm = t0 + dt * (np.arange(n) + 0.5)
    us = traj.states_at(tm)
    return forcing_many(us[:, 0], us[:, 1], traj.params)


def _propagate_full(amps: np.ndarray, grid: Grid, l: int, dt: float,
                    betas: np.ndarray) -> np.ndarray:
    """Advance amplitudes len(betas) Strang steps of the full equation.

    Interior half-steps are fused: exp(-i dt W / h) is precomputed once
    and the beta-linear phase is skipped on forcing-off steps (beta is
    exactly zero on plateaus).
    """
    h = grid.hbar
    x = grid.x
    W = x ** (2 * l) / (2 * l)
    expW_half = np.exp(-0.5j * dt / h * W)
    expW_full = expW_half * expW_half
    kin = np.exp(-0.5j * dt * h * grid.k ** 2)
    n = len(betas)
    a = amps
    for j in range(n):
        b_prev = betas[j - 1] if j > 0 else 0.0
        if j == 0:
            a = expW_half * a
            if betas[0] != 0.0:
                a = a * np.exp(0.5j * dt / h * betas[0] * x)
        else:
            bsum = b_prev + betas[j]
            a = expW_full * a
            if bsum != 0.0:
                a = a * np.exp(0.5j * dt / h * bsum * x)
        a = ifft(kin * fft(a, workers=1), workers=1)
    a = expW_half * a
    if betas[-1] != 0.0:
        a = a * np.exp(0.5j * dt / h * betas[-1] * x)
    _check_finite(a, "full propagation block")
    return a


def _propagate_quad(amps: np.ndarray, grid: Grid, l: int, hess_factor: float,
                    dt: float, betas: np.ndarray,
                    q_mid: np.ndarray) -> np.ndarray:
    """Advance the quadratic-equation amplitudes len(betas) steps.

    The Taylor coefficients move with the center, so the potential
    factor is rebuilt every step; consecutive half-steps still fuse into
    one multiply.
    """
    h = grid.hbar
    kin = np.exp(-0.5j * dt * h * grid.k ** 2)
    n = len(betas)
    a = amps
    V_prev = None
    for j in range(n):
        V = _potential_quad(grid, l, hess_factor, float(q_mid[j]),
                            float(betas[j]))
        if j == 0:
            a = np.exp(-0.5j * dt / h * V) * a
        else:
            a = np.exp(-0.5j * dt / h * (V + V_prev)) * a
        a = ifft(kin * fft(a, workers=1), workers=1)
        V_prev = V
    a = np.exp(-0.5j * dt / h * V_prev) * a
    _check_finite(a, "quadratic propagation block")
    return a


@dataclass
class ErrorCurves:
    """Checkpointed distance between the full and quadratic evolutions.

    Row fields: t, hbar, r, err, norm_full_r, norm_quad_r, bound_rhs.
    """

    rows: list = field(default_factory=list)

    def append(self, **kw) -> None:
        self.rows.append(kw)

    def to_csv(self, path) -> None:
        cols = ["t", "hbar", "r", "err", "norm_full_r", "norm_quad_r",
                "bound_rhs"]
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for row in self.rows:
                out = []
                for c in cols:
                    v = row[c]
                    out.append(str(v) if c == "r" else f"{v:.17g}")
                fh.write(",".join(out) + "\n")


def run_comparison(config, traj: ClassicalTrajectory, path: FlowMatrixPath,
                   hbar: float, gamma: float = 1.0,
                   dt_scale: float = 1.0,
                   checkpoint_times: np.ndarray | None = None,
                   safety: GridSafety | None = None) -> ErrorCurves:
    """Propagate the same coherent state under both equations.

    config supplies l (via traj), t_max, kappa and r_list.  Checkpoints
    default to quarter-second marks up to t_max.  At every checkpoint
    the Ehrenfest condition sqrt(hbar) |F|_t <= kappa is re-checked and
    e_r(t) = ||psi_full - psi_quad||_r is recorded together with the
    theorem's right-hand side gamma sqrt(hbar) |F|_t^3 (1+t)^(r+1)
    (1 + sup_s E(z_s))^(r/2).
    """
    T = float(config.t_max)
    kappa = float(config.kappa)
    r_list = [int(r) for r in config.r_list]
    params_h = ModelParams(l=traj.params.l, d=traj.params.d, hbar=hbar,
                           cutoff_width=traj.params.cutoff_width)
    if checkpoint_times is None:
        checkpoint_times = np.arange(0.0, T + 1e-12, 0.25)
    if safety is None:
        qmax = float(np.max(np.abs(
            path._res.us[:, 4:6])))  # bound on |Q| entries along the path
        safety = GridSafety(width_bound=max(2.0, 1.5 * qmax))
    grid = init_grid(params_h, traj, T, safety)
    dt_cap = default_dt(grid, traj, T, dt_scale)

    z0 = PhasePoint(q=traj.z0.q.copy(), p=traj.z0.p.copy())
    psi_f = sample_coherent(z0, hbar, grid).amplitudes
    psi_q = psi_f.copy()

    curves = ErrorCurves()
    E_sup = 0.0
    t_cur = 0.0
    l = traj.params.l
    for t_ck in checkpoint_times:
        t_ck = float(t_ck)
        if t_ck > 0.0:
            span = t_ck - t_cur
            n = max(1, math.ceil(span / dt_cap - 1e-9))
            dt = span / n
            betas = _beta_midpoints(traj, t_cur, dt, n)
            tm = t_cur + dt * (np.arange(n) + 0.5)
            q_mid = path._res.eval_many(np.minimum(tm, path.t_max))[:, 0]
            psi_f = _propagate_full(psi_f, grid, l, dt, betas)
            psi_q = _propagate_quad(psi_q, grid, l, path.hessian_factor,
                                    dt, betas, q_mid)
            t_cur = t_ck
        FT = sup_norm_F(path, min(t_ck, path.t_max))
        if math.sqrt(hbar) * FT > kappa:
            raise HorizonViolated(
                f"sqrt(hbar)|F|_t = {math.sqrt(hbar)*FT:.4f} > kappa={kappa} "
                f"at t={t_ck} (hbar={hbar})")
        E_sup = max(E_sup, traj.energy_at(min(t_ck, traj.t_max)))
        wf_f = WaveFunction(grid, psi_f, t_ck)
        wf_d = WaveFunction(grid, psi_f - psi_q, t_ck)
        wf_q = WaveFunction(grid, psi_q, t_ck)
        for r in r_list:
            err = sobolev_norm(wf_d, r, params_h)
            nf = sobolev_norm(wf_f, r, params_h)
            nq = sobolev_norm(wf_q, r, params_h)
            rhs = (gamma * math.sqrt(hbar) * FT ** 3
                   * (1.0 + t_ck) ** (r + 1) * (1.0 + E_sup) ** (0.5 * r))
            curves.append(t=t_ck, hbar=hbar, r=r, err=err,
                          norm_full_r=nf, norm_quad_r=nq, bound_rhs=rhs)
    return curves


def relax_ground_state(grid: Grid, params: ModelParams, tau: float,
                       n_steps: int) -> WaveFunction:
    """Imaginary-time split-step relaxation toward the grid ground state.

    Starts from a broad Gaussian and renormalizes every step; tau is the
    total imaginary time.  Used as the stationary-state test fixture.
    """
    h = grid.hbar
    dt = tau / n_steps
    x = grid.x
    W = x ** (2 * params.l) / (2 * params.l)
    half = np.exp(-0.5 * dt / h * W)
    kin = np.exp(-0.5 * dt * h * grid.k ** 2)
    a = np.exp(-x ** 2 / (2.0 * math.sqrt(h))).astype(np.complex128)
    for _ in range(n_steps):
        a = half * a
        a = ifft(kin * fft(a, workers=1), workers=1)
        a = half * a
        nrm = math.sqrt(grid.dx * float(np.real(np.vdot(a, a))))
        a /= nrm
    return WaveFunction(grid, a, 0.0)


def save_checkpoint(base_path, psi: WaveFunction, params: ModelParams,
                    dt: float) -> None:
    """Dump amplitudes (binary) plus a one-line text manifest."""
    np.save(str(base_path) + ".npy", psi.amplitudes)
    g = psi.grid
    line = (f"{psi.t:.17g},{g.hbar:.17g},{params.l},{g.N},"
            f"{g.x_min:.17g},{g.x_max:.17g},{dt:.17g}\n")
    with open(str(base_path) + ".meta", "w") as fh:
        fh.write("t,hbar,l,N,x_min,x_max,dt\n")
        fh.write(line)


def load_checkpoint(base_path) -> tuple[WaveFunction, dict]:
    """Inverse of save_checkpoint."""
    amps = np.load(str(base_path) + ".npy")
    with open(str(base_path) + ".meta") as fh:
        fh.readline()
        vals = fh.readline().strip().split(",")
    meta = {
        "t": float(vals[0]), "hbar": float(vals[1]), "l": int(vals[2]),
        "N": int(vals[3]), "x_min": float(vals[4]), "x_max": float(vals[5]),
        "dt": float(vals[6]),
    }
    grid = Grid(x_min=meta["x_min"], x_max=meta["x_max"], N=meta["N"],
                hbar=meta["hbar"], x_supp=meta["x_max"], p_max=0.0)
    return WaveFunction(grid, amps, meta["t"]), meta
