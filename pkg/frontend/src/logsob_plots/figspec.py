"""Figure declarations: what each kind consumes and displays."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

# kind -> (required CSV columns, required manifest constants)
KINDS: dict[str, tuple[tuple[str, ...], tuple[str, ...]]] = {
    "energy-growth": (
        ("t", "E", "log2_ratio"),
        ("C1", "C2"),
    ),
    "increment-brackets": (
        ("n", "t_2n", "E_n", "dE", "upper", "lower_c", "lower_cK",
         "ratio_next", "gap", "gap_lo", "gap_hi"),
        ("c_frozen", "cK_frozen"),
    ),
    "flow-norm": (
        ("T", "supF", "bound_rhs", "det_defect"),
        ("chat_frozen", "varsigma"),
    ),
    "error-slope": (
        ("t", "hbar", "r", "err", "norm_full_r", "norm_quad_r",
         "bound_rhs"),
        ("slopes",),
    ),
    "sobolev-growth": (
        ("t", "r", "norm_r", "lower_bound", "upper_bound"),
        ("K1", "Crprime", "window"),
    ),
}


@dataclass(frozen=True)
class FigureSpec:
    """One figure to render: inputs, kind, and output image path.

    The output format follows the path suffix (.svg default, .png); the
    annotation payload is read from the manifest at render time.
    """

    kind: str
    csv: Path
    manifest: Path
    out: Path

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(
                f"kind must be one of {sorted(KINDS)}, got {self.kind!r}")
        for name in ("csv", "manifest", "out"):
            object.__setattr__(self, name, Path(getattr(self, name)))
        suffix = self.out.suffix.lower()
        if suffix not in (".svg", ".png"):
            raise ValueError(
                f"out must end in .svg or .png, got {self.out.name!r}")
