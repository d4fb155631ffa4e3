"""Exception hierarchy shared across the package."""


class StochTransportError(Exception):
    """Base class for all errors raised by this package."""


class GridError(StochTransportError, ValueError):
    """Invalid time grid (non-positive horizon, too few steps, off-grid time)."""


class DomainError(StochTransportError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class ResolutionError(StochTransportError, ValueError):
    """Grid or schedule too coarse for the requested computation."""


class UnsupportedOrderError(StochTransportError, ValueError):
    """Hermite rank not supported by the exact simulator."""


class ConvergenceError(StochTransportError, RuntimeError):
    """An iterative solver failed to reach its tolerance."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class StructuralViolationError(StochTransportError, RuntimeError):
    """A quantity violated a structural guarantee it was asserted to satisfy."""


class SampleSizeError(StochTransportError, ValueError):
    """Not enough Monte Carlo samples for the requested statistic."""


class NumericError(StochTransportError, RuntimeError):
    """A numerical result landed outside its validity envelope."""
