"""Exception types shared across the package."""


class CalderaError(Exception):
    """Base class for all package-specific errors."""


class OffShellInitialCondition(CalderaError):
    """Initial condition does not lie on the requested energy shell."""


class EnergyDriftExceeded(CalderaError):
    """Integrator energy drift exceeded the configured guard tolerance."""


class StepSizeUnderflow(CalderaError):
    """Adaptive step size shrank below the representable minimum."""


class CriticalPointSearchFailed(CalderaError):
    """Fewer critical points converged than the caldera family requires."""


class ClassificationFailed(CalderaError):
    """Too many grid cells failed to classify."""


class EmptyGrid(CalderaError):
    """Grid contains no energetically allowed cells."""


class NoReturn(CalderaError):
    """Trajectory escaped or timed out before recrossing the section."""


class NewtonDiverged(CalderaError):
    """Newton iteration on the return map failed to converge."""


class ContinuationStalled(CalderaError):
    """Parameter continuation could not proceed even at the minimum step."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial if partial is not None else []


class DegenerateOrbit(CalderaError):
    """Periodic orbit has no usable spatial extent."""


class NoReactiveCells(CalderaError):
    """Branching fraction denominator is empty."""


class InvalidBracket(CalderaError):
    """Bisection bracket does not straddle the transition."""
