"""Exception hierarchy shared by the masharp modules."""


class MasharpError(Exception):
    """Base class for all library errors."""


class GeometryError(MasharpError):
    pass


class OutsideDomainError(GeometryError):
    """Raised when a point lies outside the closed domain.

    ``violation`` is the signed amount by which the point is outside
    (positive means outside).
    """

    def __init__(self, point, violation: float):
        self.point = point
        self.violation = float(violation)
        super().__init__(f"point {list(point)} lies outside the domain by {self.violation:.3e}")


class UnboundedDomainError(GeometryError):
    pass


class ResolutionError(MasharpError):
    """Grid too coarse for the requested operation."""


class SpecError(MasharpError):
    """Invalid problem specification (bounds, parameters, expression)."""


class ConvergenceError(MasharpError):
    pass


class DivergenceError(ConvergenceError):
    pass


class TrivialBranchError(ConvergenceError):
    pass


class FitError(MasharpError):
    """Ill-posed least-squares exponent fit."""


class ConfigError(MasharpError):
    """Experiment configuration does not satisfy the schema."""
