"""Price experiments on a demand system: GTEs, naive estimators, biases, sign flips.

Control and treatment demands are the group bookings scaled by the group
share, so at equal prices both equal market demand. Profits use a constant
unit cost ``c``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from .core import CONSISTENCY_TOL, MetricSystem
from .errors import ConsistencyViolation, DegenerateDemand, PriceBelowCost
from .numerics import DEFAULT_TOL, central_diff, cross_partial_fd

GroupDemand = Callable[[float, float, float], float]

BOUNDARY_TOL = 1e-12
MARKUP_TOL = 1e-9


class AssumptionWarning(UserWarning):
    """A demand system fails a monotonicity or consistency requirement."""


@dataclass(frozen=True)
class DemandSystem:
    market_demand: Callable[[float], float]
    control_demand: GroupDemand
    treatment_demand: GroupDemand
    cost: float = 0.0
    price_lo: float | None = None
    price_hi: float = 10.0

    def __post_init__(self):
        if self.cost < 0:
            raise ValueError("cost must be non-negative")
        if self.price_lo is None:
            object.__setattr__(self, "price_lo", self.cost)
        if self.price_lo < self.cost:
            raise ValueError("price_lo must not be below cost")

    def demand_metrics(self) -> MetricSystem:
        """Bookings as a generic metric system (group metrics carry their share)."""
        return MetricSystem(
            self.market_demand,
            lambda x0, x1, q: (1.0 - q) * self.control_demand(x0, x1, q),
            lambda x0, x1, q: q * self.treatment_demand(x0, x1, q),
            self.price_lo,
            self.price_hi,
        )

    def profit_metrics(self) -> MetricSystem:
        c = self.cost
        return MetricSystem(
            lambda x: (x - c) * self.market_demand(x),
            lambda x0, x1, q: (1.0 - q) * (x0 - c) * self.control_demand(x0, x1, q),
            lambda x0, x1, q: q * (x1 - c) * self.treatment_demand(x0, x1, q),
            self.price_lo,
            self.price_hi,
        )


@dataclass(frozen=True)
class SignClassification:
    p0: float
    q: float
    demand: float
    gte_demand: float
    bias_demand: float
    estimator_demand: float
    gte_pi: float
    bias_pi: float
    estimator_pi: float
    condition_a: bool
    condition_b: bool
    change_of_sign: bool
    on_boundary: bool
    markup_A: float
    modified_markup_B: float
    inverse_elasticity_bound: float  # -1/e_p, shared right/left side of both markup inequalities
    elasticity: float
    experimental_elasticity: float

    def as_dict(self) -> dict:
        return asdict(self)


def _check_price(sys: DemandSystem, p: float) -> None:
    if p < sys.cost:
        raise PriceBelowCost(f"price {p} is below cost {sys.cost}")


def _require_consistent(sys: DemandSystem, p0: float, q: float) -> None:
    if not 0.0 < q < 1.0:
        raise ValueError(f"treatment fraction must lie in (0, 1), got {q}")
    d = sys.market_demand(p0)
    r = max(abs(sys.control_demand(p0, p0, q) - d), abs(sys.treatment_demand(p0, p0, q) - d))
    if r > CONSISTENCY_TOL * max(1.0, abs(d)):
        raise ConsistencyViolation(f"group demands differ from market demand by {r:.3e} at p={p0}, q={q}")


def profit(sys: DemandSystem, p: float) -> float:
    _check_price(sys, p)
    return (p - sys.cost) * sys.market_demand(p)


def gte_demand(sys: DemandSystem, p0: float, h: float = DEFAULT_TOL.fd_step) -> float:
    """Slope of market demand at ``p0``; warns when it is not strictly negative."""
    d = central_diff(sys.market_demand, p0, h)
    if not d < 0:
        warnings.warn(f"market demand is not strictly decreasing at p={p0} (D'={d:.3e})", AssumptionWarning)
    return d


def gte_profit(sys: DemandSystem, p0: float, h: float = DEFAULT_TOL.fd_step) -> float:
    _check_price(sys, p0)
    return sys.market_demand(p0) + (p0 - sys.cost) * gte_demand(sys, p0, h)


def demand_partials(sys: DemandSystem, p0: float, q: float, h: float = DEFAULT_TOL.fd_step) -> dict[str, float]:
    """``D0x, D0y, D1x, D1y`` at ``(p0, p0, q)``; ``x`` is the control price, ``y`` the treatment price."""
    _check_price(sys, p0)
    _require_consistent(sys, p0, q)
    d0x, d0y = cross_partial_fd(lambda a, b: sys.control_demand(a, b, q), p0, p0, h)
    d1x, d1y = cross_partial_fd(lambda a, b: sys.treatment_demand(a, b, q), p0, p0, h)
    return {"D0x": d0x, "D0y": d0y, "D1x": d1x, "D1y": d1y}


def naive_gte_demand(sys: DemandSystem, p0: float, q: float, h: float = DEFAULT_TOL.fd_step) -> float:
    d = demand_partials(sys, p0, q, h)
    return d["D1y"] - d["D0y"]


def naive_gte_profit(sys: DemandSystem, p0: float, q: float, h: float = DEFAULT_TOL.fd_step) -> float:
    d = demand_partials(sys, p0, q, h)
    return sys.market_demand(p0) + (p0 - sys.cost) * (d["D1y"] - d["D0y"])


def bias_demand(sys: DemandSystem, p0: float, q: float, h: float = DEFAULT_TOL.fd_step) -> float:
    """Cross effects ``D0y + D1x``; non-negative when the groups are substitutes."""
    d = demand_partials(sys, p0, q, h)
    return d["D0y"] + d["D1x"]


def bias_profit(sys: DemandSystem, p0: float, q: float, h: float = DEFAULT_TOL.fd_step) -> float:
    return (p0 - sys.cost) * bias_demand(sys, p0, q, h)


def classify_from_derivatives(
    p0: float,
    cost: float,
    q: float,
    demand: float,
    demand_slope: float,
    d0y: float,
    d1x: float,
    d1y: float | None = None,
) -> SignClassification:
    """Sign analysis from market demand, its slope and the two cross effects.

    ``d1y`` defaults to ``demand_slope - d1x`` (chain rule under consistency).
    The two markup conditions are evaluated in their multiplied-out form,
    ``gte_pi >= 0`` and ``estimator_pi <= 0``, which avoids dividing by a
    vanishing elasticity. ``A <= B`` holds whenever the cross effects are
    non-negative; a violation is reported as an :class:`AssumptionWarning`.
    """
    if p0 < cost:
        raise PriceBelowCost(f"price {p0} is below cost {cost}")
    if not demand > 0:
        raise DegenerateDemand(f"demand must be positive, D({p0}) = {demand}")
    if not demand_slope < 0:
        raise DegenerateDemand(f"demand must be strictly decreasing, D'({p0}) = {demand_slope}")
    if d1y is None:
        d1y = demand_slope - d1x
    margin = p0 - cost
    naive_slope = d1y - d0y
    bias_d = d0y + d1x
    gte_pi = demand + margin * demand_slope
    bias_pi = margin * bias_d
    est_pi = gte_pi - bias_pi

    elasticity = demand_slope * p0 / demand if p0 > 0 else 0.0
    exp_elasticity = p0 * naive_slope / demand
    markup_a = margin / p0 if p0 > 0 else 0.0
    markup_b = markup_a * naive_slope / demand_slope
    inv_bound = -1.0 / elasticity if elasticity != 0 else math.inf

    if markup_a > markup_b + MARKUP_TOL:
        warnings.warn(
            f"markup A={markup_a:.6g} exceeds modified markup B={markup_b:.6g} at p={p0}: "
            "the group demands are not substitutes here",
            AssumptionWarning,
            stacklevel=2,
        )
    scale = max(1.0, abs(demand))
    cond_a = gte_pi >= 0.0
    cond_b = est_pi <= 0.0
    boundary = abs(gte_pi) <= BOUNDARY_TOL * scale or abs(est_pi) <= BOUNDARY_TOL * scale
    return SignClassification(
        p0=p0,
        q=q,
        demand=demand,
        gte_demand=demand_slope,
        bias_demand=bias_d,
        estimator_demand=naive_slope,
        gte_pi=gte_pi,
        bias_pi=bias_pi,
        estimator_pi=est_pi,
        condition_a=cond_a,
        condition_b=cond_b,
        change_of_sign=cond_a and cond_b,
        on_boundary=boundary,
        markup_A=markup_a,
        modified_markup_B=markup_b,
        inverse_elasticity_bound=inv_bound,
        elasticity=elasticity,
        experimental_elasticity=exp_elasticity,
    )


def classify_sign(sys: DemandSystem, p0: float, q: float, h: float = DEFAULT_TOL.fd_step) -> SignClassification:
    """Full sign classification at ``p0`` using finite-difference derivatives."""
    d = demand_partials(sys, p0, q, h)
    slope = central_diff(sys.market_demand, p0, h)
    return classify_from_derivatives(
        p0, sys.cost, q, sys.market_demand(p0), slope, d["D0y"], d["D1x"], d["D1y"]
    )


def region_class(condition_a: bool, condition_b: bool) -> str:
    """Cell label: white, black and grey regions of a change-of-sign map."""
    if condition_a and condition_b:
        return "change_of_sign"
    if not condition_a and not condition_b:
        return "both_fail"
    return "cond_a_fails" if not condition_a else "cond_b_fails"


@dataclass(frozen=True)
class DemandSystemReport:
    decreasing: bool
    control_substitutes: bool
    treatment_substitutes: bool
    max_consistency_residual: float

    @property
    def ok(self) -> bool:
        return (
            self.decreasing
            and self.control_substitutes
            and self.treatment_substitutes
            and self.max_consistency_residual <= CONSISTENCY_TOL
        )


def check_demand_system(
    sys: DemandSystem,
    q_samples: Sequence[float] = (0.25, 0.5, 0.75),
    n: int = 33,
    slack: float = 1e-12,
) -> DemandSystemReport:
    """Grid check of market-demand monotonicity, group substitutability and consistency.

    ``D0`` must not decrease in the treatment price and ``D1`` must not
    decrease in the control price; ``slack`` absorbs solver round-off.
    """
    lo = sys.price_lo + 1e-9
    grid = np.linspace(lo, sys.price_hi, n)
    d = np.array([sys.market_demand(p) for p in grid])
    decreasing = bool(np.all(np.diff(d) < 0))
    ctrl = treat = True
    worst = 0.0
    for q in q_samples:
        for i, a in enumerate(grid):
            row0 = np.array([sys.control_demand(a, b, q) for b in grid])
            col1 = np.array([sys.treatment_demand(b, a, q) for b in grid])
            ctrl &= bool(np.all(np.diff(row0) >= -slack * np.maximum(1.0, np.abs(row0[1:]))))
            treat &= bool(np.all(np.diff(col1) >= -slack * np.maximum(1.0, np.abs(col1[1:]))))
            worst = max(worst, abs(row0[i] - d[i]), abs(col1[i] - d[i]))
    report = DemandSystemReport(decreasing, ctrl, treat, worst)
    if not report.ok:
        warnings.warn(f"demand system violates modelling assumptions: {report}", AssumptionWarning)
    return report
