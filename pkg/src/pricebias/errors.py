"""Exception hierarchy shared across the package."""


class PriceBiasError(Exception):
    """Base class for all package errors."""


class NoBracket(PriceBiasError):
    """The function does not change sign over the supplied interval."""


class MaxIterations(PriceBiasError):
    """An iterative solver exhausted its iteration budget."""


class NoConvergence(PriceBiasError):
    """A steady-state system could not be solved to tolerance."""


class EvalFailure(PriceBiasError):
    """A function raised or returned a non-finite value at a probe point."""


class ConsistencyViolation(PriceBiasError):
    """Control/treatment metrics disagree with the global metric at equal arguments."""


class AssumptionViolation(PriceBiasError):
    """Model inputs violate a structural assumption (price below cost, bad valuation, ...)."""


class PriceBelowCost(AssumptionViolation):
    pass


class DegenerateDemand(AssumptionViolation):
    """Demand is non-positive or not strictly decreasing at the evaluation point."""


class DegenerateDelta(PriceBiasError):
    """Treatment and control prices coincide, so a finite-difference estimator is undefined."""
