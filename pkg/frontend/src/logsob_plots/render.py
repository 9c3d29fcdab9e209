"""Renderers: one figure kind per function, manifest constants only.

Uses Figure objects directly (no pyplot) so renders share no global
state and can run in parallel.  Determinism: fixed size and dpi, a
fixed SVG hash salt, no date metadata, bundled fonts.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib
import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.backends.backend_svg import FigureCanvasSVG
from matplotlib.figure import Figure

from .errors import MissingManifest, SchemaMismatch
from .figspec import KINDS, FigureSpec

matplotlib.rcParams["svg.hashsalt"] = "logsob-plots"

_ENVELOPE_STYLE = dict(linestyle="--", linewidth=1.0)


def _load_manifest(spec: FigureSpec) -> dict:
    try:
        doc = json.loads(Path(spec.manifest).read_text())
    except FileNotFoundError:
        raise MissingManifest(f"manifest not found: {spec.manifest}")
    except (OSError, json.JSONDecodeError) as e:
        raise MissingManifest(f"manifest unreadable: {e}")
    constants = doc.get("constants", {})
    missing = [c for c in KINDS[spec.kind][1] if c not in constants]
    if missing:
        raise SchemaMismatch(
            f"manifest lacks constants {missing} required by {spec.kind}")
    return constants


def _load_csv(spec: FigureSpec) -> np.ndarray:
    path = Path(spec.csv)
    if not path.is_file():
        raise SchemaMismatch(f"csv not found: {path}")
    required = KINDS[spec.kind][0]
    text = path.read_text()
    header = text.splitlines()[0].strip() if text.strip() else ""
    cols = tuple(header.split(",")) if header else ()
    if cols != required:
        raise SchemaMismatch(
            f"{spec.kind} expects columns {','.join(required)}; "
            f"file has {header or '(empty)'!r}")
    data = np.genfromtxt(path.open(), delimiter=",", names=True)
    if data.size == 0:
        raise SchemaMismatch(f"{spec.csv} has a header but no data rows")
    return np.atleast_1d(data)


def _fmt(x: float) -> str:
    return f"{float(x):.3g}"


def _new_axes(title: str, xlabel: str, ylabel: str):
    fig = Figure(figsize=(7.0, 4.5), dpi=150)
    ax = fig.add_subplot()
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    return fig, ax


def _render_energy_growth(data, constants):
    fig, ax = _new_axes("Energy growth on the kicked orbit", "t", "E(t)")
    t, E = data["t"], data["E"]
    ax.plot(t, E, color="C0", linewidth=1.2, label="E(t)")
    env = np.log(2.0 + t) ** 2
    for name, color in (("C1", "C2"), ("C2", "C3")):
        c = float(constants[name])
        ax.plot(t, c * env, color=color, **_ENVELOPE_STYLE,
                label=f"{_fmt(c)} [log(2+t)]^2")
    ax.set_xscale("log")
    ax.legend(loc="upper left", fontsize=9)
    return fig


def _render_increment_brackets(data, constants):
    fig, ax = _new_axes("Per-kick energy increments and their brackets",
                        "kick index n", "E_{n+1} - E_n")
    n = data["n"]
    ax.plot(n, data["dE"], ".", color="C0", markersize=3,
            label="measured increment")
    ax.plot(n, data["upper"], color="C3", **_ENVELOPE_STYLE,
            label="upper bracket")
    ax.plot(n, data["lower_c"], color="C2", **_ENVELOPE_STYLE,
            label=f"lower bracket (c = {_fmt(constants['c_frozen'])})")
    ax.set_yscale("log")
    ax.legend(loc="upper right", fontsize=9)
    return fig


def _render_flow_norm(data, constants):
    fig, ax = _new_axes("Variational flow magnitude and its envelope",
                        "T", "sup |F| on [0, T]")
    ax.plot(data["T"], data["supF"], color="C0", linewidth=1.2,
            label="measured sup |F|")
    chat = float(constants["chat_frozen"])
    vs = float(constants["varsigma"])
    ax.plot(data["T"], data["bound_rhs"], color="C3", **_ENVELOPE_STYLE,
            label=f"exp({_fmt(chat)} T [log(2+T)]^{_fmt(vs)})")
    ax.set_yscale("log")
    ax.legend(loc="upper left", fontsize=9)
    return fig


def _render_error_slope(data, constants):
    fig, ax = _new_axes("Full-vs-quadratic error at the final time",
                        "hbar", "error")
    slopes = constants["slopes"]
    t_end = float(np.max(data["t"]))
    final = data[data["t"] == t_end]
    for i, r in enumerate(sorted(set(int(v) for v in final["r"]))):
        rows = final[final["r"] == r]
        order = np.argsort(rows["hbar"])
        hs, es = rows["hbar"][order], rows["err"][order]
        ax.plot(hs, es, "o", color=f"C{i}", label=f"r = {r}")
        s = float(slopes[f"r={r}"])
        # anchor the reference line at the geometric mean point; the
        # slope itself comes from the manifest, never a refit
        h0 = np.exp(np.mean(np.log(hs)))
        e0 = np.exp(np.mean(np.log(es)))
        ax.plot(hs, e0 * (hs / h0) ** s, color=f"C{i}", **_ENVELOPE_STYLE,
                label=f"slope = {s:.2f} (expected 0.5)")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.legend(loc="upper left", fontsize=9)
    return fig


def _render_sobolev_growth(data, constants):
    fig, ax = _new_axes("Sobolev norm growth between its two envelopes",
                        "t", "||psi(t)||_r")
    K1, Crp = constants["K1"], constants["Crprime"]
    lo, hi = (float(v) for v in constants["window"])
    for i, r in enumerate(sorted(set(int(v) for v in data["r"]))):
        rows = data[data["r"] == r]
        order = np.argsort(rows["t"])
        t = rows["t"][order]
        k1 = K1.get(str(r), K1.get(r))
        crp = Crp.get(str(r), Crp.get(r))
        ax.plot(t, rows["norm_r"][order], color=f"C{i}", linewidth=1.2,
                label=f"r = {r}")
        ax.plot(t, rows["lower_bound"][order], color=f"C{i}",
                **_ENVELOPE_STYLE,
                label=f"{_fmt(k1)} [log(2+t)]^{r}")
        ax.plot(t, rows["upper_bound"][order], color=f"C{i}",
                linestyle=":", linewidth=1.0,
                label=f"{_fmt(crp)} (1+t)^{r}")
    ax.axvspan(lo, hi, color="0.9", zorder=0, label="growth window")
    ax.set_yscale("log")
    ax.legend(loc="upper left", fontsize=8, ncols=2)
    return fig


_RENDERERS = {
    "energy-growth": _render_energy_growth,
    "increment-brackets": _render_increment_brackets,
    "flow-norm": _render_flow_norm,
    "error-slope": _render_error_slope,
    "sobolev-growth": _render_sobolev_growth,
}


def render(spec: FigureSpec) -> Path:
    """Render the figure and return the written image path."""
    constants = _load_manifest(spec)
    data = _load_csv(spec)
    fig = _RENDERERS[spec.kind](data, constants)
    fig.set_layout_engine("tight")
    out = Path(spec.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if out.suffix.lower() == ".png":
        FigureCanvasAgg(fig)
        fig.savefig(out, format="png",
                    metadata={"Software": "logsob-plots"})
    else:
        FigureCanvasSVG(fig)
        fig.savefig(out, format="svg", metadata={"Date": None})
    return out
