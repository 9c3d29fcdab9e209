"""Command-line front end: one figure per invocation.

Exit status: 0 on success, 2 when inputs are missing or mismatched.
"""

from __future__ import annotations

import argparse
import sys

from .errors import PlotError
from .figspec import KINDS, FigureSpec
from .render import render


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="logsob-plot",
        description="render a trend figure from a logsob run directory")
    parser.add_argument("--kind", required=True, choices=sorted(KINDS))
    parser.add_argument("--csv", required=True,
                        help="results CSV emitted by the run")
    parser.add_argument("--manifest", required=True,
                        help="manifest.json of the same run")
    parser.add_argument("--out", required=True,
                        help="output image path (.svg or .png)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = FigureSpec(kind=args.kind, csv=args.csv,
                          manifest=args.manifest, out=args.out)
        out = render(spec)
    except (PlotError, ValueError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
