"""Exception hierarchy for the simulation package.

Every failure mode that callers are expected to handle gets its own type;
anything else is a plain bug and raises builtins.
"""


class SimulationError(Exception):
    """Base class for all package-specific failures."""


class ConfigError(SimulationError):
    """Invalid run configuration; message names the offending field."""


# --- classical dynamics ---------------------------------------------------

class StepSizeUnderflow(SimulationError):
    """Adaptive integrator cannot meet the tolerance without h -> 0."""


class NonFiniteState(SimulationError):
    """Position or velocity overflowed to inf/nan during integration."""


class EventOrderingViolation(SimulationError):
    """Passage events failed to alternate -1, +1; tolerance too loose."""


class PlateauViolation(SimulationError):
    """Energy varied on a forcing-off plateau beyond tolerance."""


class OutOfRange(SimulationError):
    """Query time outside the covered trajectory/path range."""


class QuadratureFailure(SimulationError):
    """Adaptive quadrature did not converge to the requested accuracy."""


class InsufficientData(SimulationError):
    """Not enough events/samples to fit the requested growth law."""


# --- variational flow ------------------------------------------------------

class SymplecticityLoss(SimulationError):
    """|det F - 1| exceeded its bound; integrator tolerance too loose."""


class HorizonExceedsPath(SimulationError):
    """The Ehrenfest condition still holds at the end of the path."""


# --- Gaussian propagation ---------------------------------------------------

class SingularWidth(SimulationError):
    """Q-block of the flow matrix became numerically singular."""


# --- grid solver -----------------------------------------------------------

class GridTooLarge(SimulationError):
    """Requested grid exceeds the configured memory cap."""


class CenterOutOfDomain(SimulationError):
    """Wavepacket center outside the safe region of the grid."""


class NonFiniteAmplitudes(SimulationError):
    """Wavefunction amplitudes overflowed during stepping."""


class AliasingDetected(SimulationError):
    """Spectral tail guard tripped: top wavenumbers carry real weight."""


class HorizonViolated(SimulationError):
    """sqrt(hbar)*|F|_T exceeded kappa during a comparison run."""
