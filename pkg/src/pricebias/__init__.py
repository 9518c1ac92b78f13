"""Interference bias of naive A/B price experiments in a two-sided marketplace.

Submodules: ``numerics`` (root finding, finite differences), ``core``
(generic bias calculus), ``pricing`` (demand systems and sign analysis),
``meanfield`` (logit mean-field market), ``sim`` (finite-market Monte Carlo),
``sweep``/``cli`` (grids and the command line).
"""

from .core import MetricSystem, bias, check_consistency, gte, naive_estimator
from .errors import (
    AssumptionViolation,
    ConsistencyViolation,
    DegenerateDelta,
    DegenerateDemand,
    EvalFailure,
    MaxIterations,
    NoBracket,
    NoConvergence,
    PriceBelowCost,
    PriceBiasError,
)
from .meanfield import MarketParams, ValuationSpec
from .numerics import Tolerances, central_diff, cross_partial_fd, find_root_bracketed, newton_damped
from .pricing import DemandSystem, SignClassification, classify_sign

__version__ = "0.1.0"

__all__ = [
    "AssumptionViolation",
    "ConsistencyViolation",
    "DegenerateDelta",
    "DegenerateDemand",
    "DemandSystem",
    "EvalFailure",
    "MarketParams",
    "MaxIterations",
    "MetricSystem",
    "NoBracket",
    "NoConvergence",
    "PriceBelowCost",
    "PriceBiasError",
    "SignClassification",
    "Tolerances",
    "ValuationSpec",
    "bias",
    "central_diff",
    "check_consistency",
    "classify_sign",
    "cross_partial_fd",
    "find_root_bracketed",
    "gte",
    "naive_estimator",
    "newton_damped",
]
