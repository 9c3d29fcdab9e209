"""Figures from logsob run directories.

Rendering is read-only: every fitted constant on a figure comes from
the run's manifest.json, never from a refit, and identical inputs
produce byte-identical images.
"""

from .errors import MissingManifest, PlotError, SchemaMismatch
from .figspec import KINDS, FigureSpec
from .render import render

__all__ = [
    "FigureSpec",
    "KINDS",
    "MissingManifest",
    "PlotError",
    "SchemaMismatch",
    "render",
]

__version__ = "0.1.0"
