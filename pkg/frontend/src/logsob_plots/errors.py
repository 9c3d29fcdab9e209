class PlotError(Exception):
    """Base class for rendering failures."""


class SchemaMismatch(PlotError):
    """The CSV columns or manifest constants do not match the figure kind."""


class MissingManifest(PlotError):
    """The manifest file is absent or unreadable."""
