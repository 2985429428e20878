"""Exception hierarchy shared by every module."""


class GeometryError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(GeometryError, ValueError):
    """A point, or a stencil around it, leaves the chart's valid region."""


class DegenerateMetricError(GeometryError, ValueError):
    """The metric is not symmetric positive definite at a point."""


class UnsupportedDimensionError(GeometryError, ValueError):
    pass


class ContractViolation(GeometryError, ValueError):
    """An argument breaks a documented precondition (symmetry, unit length, shared frame)."""


class InvalidWarpError(GeometryError, ValueError):
    pass


class UnknownModelError(GeometryError, KeyError):
    pass


class ParameterError(GeometryError, ValueError):
    pass


class SolitonResidualFailed(GeometryError):
    """Ric + Hess f - lambda g does not vanish, so soliton identities are not claimed."""

    def __init__(self, max_residual: float, tolerance: float):
        self.max_residual = max_residual
        self.tolerance = tolerance
        super().__init__(
            f"soliton-residual-failed: max |Ric + Hess f - lambda g| = {max_residual:.3e} "
            f"exceeds {tolerance:.1e}"
        )


class HypothesisViolated(GeometryError):
    """A diagnostic's structural hypothesis (e.g. constant rank) fails on the grid."""


class NotApplicable(GeometryError):
    """The diagnostic is undefined for this input (e.g. phi with scal <= 0)."""
