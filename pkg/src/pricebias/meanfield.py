"""Mean-field two-sided market with logit booking.

Listings of total mass ``rho`` are either available or occupied. Customers
arrive at rate ``lam``; an arriving customer facing available mass ``s`` at
price ``p`` books with probability ``s v(p) / (eps + s v(p))``. Occupied
listings free up at rate ``tau``. In steady state the freeing flow equals
the booking flow.

Three regimes are solved here: the global market (everyone at one price),
listing-side randomization (LR, a fraction ``q`` of listings is treated and
customers see both prices), and customer-side randomization (CR, a fraction
``q`` of customers sees the treatment price on the whole market).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Literal

import numpy as np

from .errors import AssumptionViolation, NoConvergence, PriceBelowCost, PriceBiasError
from .numerics import DEFAULT_TOL, TIGHT_TOL, Tolerances, find_root_bracketed, newton_damped

Design = Literal["lr", "cr"]
DESIGNS: tuple[Design, ...] = ("lr", "cr")


@dataclass(frozen=True)
class ValuationSpec:
    """Utility of booking a listing as a function of price.

    ``exponential``: ``v(p) = exp(V - p)`` (parameter ``V``).
    ``linear``: ``v(p) = a - b p``, only usable where it stays positive.
    ``expression``: a formula in ``p`` (e.g. ``"1/p"``), differentiated symbolically.
    ``custom``: caller-supplied ``v`` and its derivative ``dv``.
    """

    family: Literal["exponential", "linear", "expression", "custom"] = "exponential"
    V: float = 5.0
    a: float = 1.0
    b: float = 0.1
    expr: str | None = None
    v_fn: Callable[[float], float] | None = field(default=None, compare=False)
    dv_fn: Callable[[float], float] | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.family == "linear" and not self.b > 0:
            raise ValueError("linear valuation needs slope b > 0")
        if self.family == "custom" and (self.v_fn is None or self.dv_fn is None):
            raise ValueError("custom valuation needs both v_fn and dv_fn")
        if self.family not in ("exponential", "linear", "expression", "custom"):
            raise ValueError(f"unknown valuation family {self.family!r}")
        if self.family == "expression":
            v, dv = _compile_expression(self.expr)
            object.__setattr__(self, "v_fn", v)
            object.__setattr__(self, "dv_fn", dv)

    @classmethod
    def exponential(cls, V: float) -> "ValuationSpec":
        return cls("exponential", V=V)

    @classmethod
    def linear(cls, a: float, b: float) -> "ValuationSpec":
        return cls("linear", a=a, b=b)

    @classmethod
    def expression(cls, expr: str) -> "ValuationSpec":
        return cls("expression", expr=expr)

    @classmethod
    def custom(cls, v: Callable[[float], float], dv: Callable[[float], float]) -> "ValuationSpec":
        return cls("custom", v_fn=v, dv_fn=dv)

    def v(self, p: float) -> float:
        if self.family == "exponential":
            return math.exp(self.V - p)
        if self.family == "linear":
            return self.a - self.b * p
        return float(self.v_fn(p))

    def dv(self, p: float) -> float:
        if self.family == "exponential":
            return -math.exp(self.V - p)
        if self.family == "linear":
            return -self.b
        return float(self.dv_fn(p))

    def to_dict(self) -> dict:
        if self.family == "exponential":
            return {"family": "exponential", "V": self.V}
        if self.family == "linear":
            return {"family": "linear", "a": self.a, "b": self.b}
        if self.family == "expression":
            return {"family": "expression", "expr": self.expr}
        return {"family": "custom"}


def _compile_expression(expr: str | None):
    import sympy

    if not expr:
        raise ValueError("expression valuation needs a formula in p")
    p = sympy.Symbol("p", real=True)
    try:
        e = sympy.sympify(expr, locals={"p": p})
    except (sympy.SympifyError, SyntaxError, TypeError) as exc:
        raise ValueError(f"cannot parse valuation expression {expr!r}: {exc}") from exc
    if e.free_symbols - {p}:
        raise ValueError(f"valuation expression may only use p, got {sorted(map(str, e.free_symbols))}")
    return sympy.lambdify(p, e, "math"), sympy.lambdify(p, sympy.diff(e, p), "math")


@dataclass(frozen=True)
class MarketParams:
    rho: float = 1.0
    lam: float = 1.0
    tau: float = 1.0
    eps: float = 1.0
    cost: float = 1.0
    valuation: ValuationSpec = field(default_factory=ValuationSpec)

    def __post_init__(self):
        for attr, name in (("rho", "rho"), ("lam", "lambda"), ("tau", "tau"), ("eps", "eps")):
            val = getattr(self, attr)
            if not (math.isfinite(val) and val > 0):
                raise AssumptionViolation(f"{name} must be > 0, got {val}")
        if not (math.isfinite(self.cost) and self.cost >= 0):
            raise AssumptionViolation(f"cost must be >= 0, got {self.cost}")

    @property
    def beta(self) -> float:
        """Market balance ``lam / tau``."""
        return self.lam / self.tau

    def with_beta(self, beta: float) -> "MarketParams":
        """Same market with ``lam = beta * tau``."""
        return replace(self, lam=beta * self.tau)

    def to_dict(self) -> dict:
        return {
            "rho": self.rho,
            "lambda": self.lam,
            "tau": self.tau,
            "eps": self.eps,
            "cost": self.cost,
            "valuation": self.valuation.to_dict(),
        }


@dataclass(frozen=True)
class SteadyState:
    s_star: float
    residual: float
    solver: Literal["closed_form", "newton", "bracketed"]


@dataclass(frozen=True)
class LRSteadyState:
    s0_star: float
    s1_star: float
    residuals: tuple[float, float]
    weight: float  # eps + s0 v(p0) + s1 v(p1), the logit denominator


@dataclass(frozen=True)
class CRSteadyState:
    s_star: float
    residual: float


@dataclass(frozen=True)
class ValuationCheck:
    positive: bool
    decreasing: bool
    differentiable: bool
    increasing_failure_rate: bool

    @property
    def ok(self) -> bool:
        return self.positive and self.decreasing and self.differentiable and self.increasing_failure_rate

    def failures(self) -> list[str]:
        names = {
            "positive": "v(p) > 0",
            "decreasing": "v strictly decreasing",
            "differentiable": "v differentiable",
            "increasing_failure_rate": "-(p-c)v'(p)/v(p) strictly increasing",
        }
        return [label for key, label in names.items() if not getattr(self, key)]


def _local_slope(f: Callable[[float], float], p: float, room: float) -> float:
    h = min(1e-5 * max(1.0, abs(p)), 1e-3 * room)
    return (f(p + h) - f(p - h)) / (2.0 * h)


def check_valuation(
    valuation: ValuationSpec, cost: float, price_hi: float, n: int = 201, delta: float = 1e-9
) -> ValuationCheck:
    """Grid check of the valuation regularity conditions on ``[cost + delta, price_hi]``."""
    grid = np.linspace(cost + delta, price_hi, n)
    with np.errstate(all="ignore"):
        try:
            v = np.array([valuation.v(p) for p in grid])
            dv = np.array([valuation.dv(p) for p in grid])
        except (ArithmeticError, ValueError):
            return ValuationCheck(False, False, False, False)
    finite = bool(np.all(np.isfinite(v)) and np.all(np.isfinite(dv)))
    positive = finite and bool(np.all(v > 0))
    decreasing = finite and bool(np.all(np.diff(v) < 0) and np.all(dv < 0))
    differentiable = finite
    if finite:
        # supplied derivative must agree with a local central difference
        slope = np.array([_local_slope(valuation.v, p, p - cost) for p in grid])
        differentiable = bool(np.all(np.isfinite(slope)) and np.allclose(slope, dv, rtol=1e-4, atol=1e-9))
    ifr = False
    if positive:
        g = -(grid - cost) * dv / v
        ifr = bool(np.all(np.diff(g) > 0))
    return ValuationCheck(positive, decreasing, differentiable, ifr)


def _valuation_at(params: MarketParams, p: float) -> tuple[float, float]:
    if p < params.cost:
        raise PriceBelowCost(f"price {p} is below cost {params.cost}")
    v = params.valuation.v(p)
    dv = params.valuation.dv(p)
    if not (math.isfinite(v) and v > 0):
        raise AssumptionViolation(f"valuation must be strictly positive, v({p}) = {v}")
    if not (math.isfinite(dv) and dv < 0):
        raise AssumptionViolation(f"valuation must be strictly decreasing, v'({p}) = {dv}")
    return v, dv


def book_prob(s: float, v: float, eps: float) -> float:
    """Logit booking probability with available mass ``s``."""
    return s * v / (eps + s * v)


def balance_residual(params: MarketParams, p: float, s: float) -> float:
    """``(rho - s) - beta * book_prob``, the per-``tau`` flow imbalance."""
    v = params.valuation.v(p)
    return (params.rho - s) - params.beta * book_prob(s, v, params.eps)


def steady_state(params: MarketParams, p: float, tol: Tolerances = DEFAULT_TOL) -> SteadyState:
    """Steady-state available mass for the global market at price ``p``.

    Uses the positive root of ``v s^2 + (eps + (beta - rho) v) s - rho eps = 0``
    in a cancellation-free form. If that misses the residual tolerance it is
    polished by damped Newton, and a bracketed solve on ``[0, rho]`` is the
    last resort.
    """
    v, _ = _valuation_at(params, p)
    rho, eps, beta = params.rho, params.eps, params.beta
    b = eps + (beta - rho) * v
    disc = math.sqrt(b * b + 4.0 * v * rho * eps)
    s = 2.0 * rho * eps / (b + disc) if b >= 0 else (disc - b) / (2.0 * v)
    s = min(max(s, 0.0), rho)
    res = balance_residual(params, p, s)
    if abs(res) <= tol.residual_tol * max(1.0, rho):
        return SteadyState(s, res, "closed_form")
    try:
        s = newton_damped(
            lambda x: balance_residual(params, p, x),
            lambda x: -1.0 - beta * eps * v / (eps + x * v) ** 2,
            s, 0.0, rho, tol,
        )
        res = balance_residual(params, p, s)
        if abs(res) <= tol.residual_tol * max(1.0, rho):
            return SteadyState(s, res, "newton")
    except PriceBiasError:
        pass
    s = find_root_bracketed(lambda x: balance_residual(params, p, x), 0.0, rho, TIGHT_TOL)
    return SteadyState(s, balance_residual(params, p, s), "bracketed")


def steady_state_bracketed(params: MarketParams, p: float) -> SteadyState:
    """Steady state from the bracketed solver only (independent of the closed form)."""
    _valuation_at(params, p)
    s = find_root_bracketed(lambda x: balance_residual(params, p, x), 0.0, params.rho, TIGHT_TOL)
    return SteadyState(s, balance_residual(params, p, s), "bracketed")


def s_star_price_derivative(params: MarketParams, p: float) -> float:
    """Sensitivity of steady-state availability to price (implicit differentiation)."""
    v, dv = _valuation_at(params, p)
    s = steady_state(params, p).s_star
    eps = params.eps
    return -s * dv * eps / ((eps + s * v) ** 2 / params.beta + v * eps)


def s_star_beta_derivative(params: MarketParams, p: float) -> float:
    v, _ = _valuation_at(params, p)
    s = steady_state(params, p).s_star
    eps = params.eps
    return -v * s * (v * s + eps) / ((eps + s * v) ** 2 + params.beta * v * eps)


def demand(params: MarketParams, p: float) -> float:
    """Booking rate ``(rho - s*) tau``."""
    return (params.rho - steady_state(params, p).s_star) * params.tau


def demand_price_derivative(params: MarketParams, p: float) -> float:
    return -params.tau * s_star_price_derivative(params, p)


def gte_demand_mf(params: MarketParams, p: float) -> float:
    return demand_price_derivative(params, p)


def gte_profit_mf(params: MarketParams, p: float) -> float:
    """Marginal profit ``tau (rho - s* - (p - c) s*_p)``."""
    s = steady_state(params, p).s_star
    sp = s_star_price_derivative(params, p)
    return params.tau * (params.rho - s - (p - params.cost) * sp)


# -- listing-side randomization ---------------------------------------------


def _check_q(q: float) -> None:
    if not 0.0 < q < 1.0:
        raise ValueError(f"treatment fraction must lie in (0, 1), got {q}")


def lr_steady_state(
    params: MarketParams, q: float, p0: float, p1: float, tol: Tolerances = DEFAULT_TOL
) -> LRSteadyState:
    """Solve the coupled LR balance equations.

    For a fixed logit denominator ``W`` each group's balance equation is
    linear in its own availability, giving
    ``s_g(W) = n_g rho W / (W + beta v_g)``. The remaining scalar equation
    ``W = eps + s_0(W) v_0 + s_1(W) v_1`` has a decreasing residual and is
    bracketed by ``[eps, eps + rho ((1-q) v_0 + q v_1)]``.
    """
    _check_q(q)
    v0, _ = _valuation_at(params, p0)
    v1, _ = _valuation_at(params, p1)
    rho, eps, beta = params.rho, params.eps, params.beta
    n0, n1 = 1.0 - q, q

    def s_groups(w):
        return n0 * rho * w / (w + beta * v0), n1 * rho * w / (w + beta * v1)

    def g(w):
        s0, s1 = s_groups(w)
        return eps + s0 * v0 + s1 * v1 - w

    hi = eps + rho * (n0 * v0 + n1 * v1)
    try:
        w = find_root_bracketed(g, eps, hi, TIGHT_TOL)
    except PriceBiasError as exc:
        raise NoConvergence(f"LR balance failed at q={q}, p0={p0}, p1={p1}: {exc}") from exc
    s0, s1 = s_groups(w)
    denom = eps + s0 * v0 + s1 * v1
    r0 = (n0 * rho - s0) - beta * s0 * v0 / denom
    r1 = (n1 * rho - s1) - beta * s1 * v1 / denom
    if max(abs(r0), abs(r1)) > tol.residual_tol * max(1.0, rho):
        raise NoConvergence(
            f"LR residuals ({r0:.3e}, {r1:.3e}) exceed tolerance at q={q}, p0={p0}, p1={p1}"
        )
    return LRSteadyState(s0, s1, (r0, r1), denom)


def lr_demands(params: MarketParams, q: float, p0: float, p1: float) -> tuple[float, float]:
    """Scaled control and treatment booking rates under LR."""
    st = lr_steady_state(params, q, p0, p1)
    v0, v1 = params.valuation.v(p0), params.valuation.v(p1)
    d0 = params.lam / (1.0 - q) * st.s0_star * v0 / st.weight
    d1 = params.lam / q * st.s1_star * v1 / st.weight
    return d0, d1


# -- customer-side randomization --------------------------------------------


def cr_steady_state(
    params: MarketParams, q: float, p0: float, p1: float, tol: Tolerances = DEFAULT_TOL
) -> CRSteadyState:
    """Shared availability when a fraction ``q`` of customers sees price ``p1``."""
    _check_q(q)
    v0, _ = _valuation_at(params, p0)
    v1, _ = _valuation_at(params, p1)
    rho, eps, beta = params.rho, params.eps, params.beta

    def f(s):
        return rho - s - beta * (q * book_prob(s, v1, eps) + (1.0 - q) * book_prob(s, v0, eps))

    try:
        s = find_root_bracketed(f, 0.0, rho, TIGHT_TOL)
    except PriceBiasError as exc:
        raise NoConvergence(f"CR balance failed at q={q}, p0={p0}, p1={p1}: {exc}") from exc
    res = f(s)
    if abs(res) > tol.residual_tol * max(1.0, rho):
        raise NoConvergence(f"CR residual {res:.3e} exceeds tolerance at q={q}, p0={p0}, p1={p1}")
    return CRSteadyState(s, res)


def cr_demands(params: MarketParams, q: float, p0: float, p1: float) -> tuple[float, float]:
    """Control and treatment booking rates per customer under CR."""
    s = cr_steady_state(params, q, p0, p1).s_star
    v0, v1 = params.valuation.v(p0), params.valuation.v(p1)
    return params.lam * book_prob(s, v0, params.eps), params.lam * book_prob(s, v1, params.eps)


def design_demands(params: MarketParams, design: Design, q: float, p0: float, p1: float):
    if design == "lr":
        return lr_demands(params, q, p0, p1)
    if design == "cr":
        return cr_demands(params, q, p0, p1)
    raise ValueError(f"unknown design {design!r}")


# -- analytic cross-partials and biases at p0 = p1 = p ----------------------


def _point(params: MarketParams, p: float):
    v, dv = _valuation_at(params, p)
    s = steady_state(params, p).s_star
    return v, dv, s


def lr_cross_partials(params: MarketParams, q: float, p: float) -> tuple[float, float]:
    """``(D0y, D1x)`` for LR at equal prices.

    ``D0y`` is the response of control demand to the treatment price and
    ``D1x`` the response of treatment demand to the control price.
    """
    _check_q(q)
    v, dv, s = _point(params, p)
    eps, beta, lam = params.eps, params.beta, params.lam
    core = -lam * s * s * v * dv * (eps + s * v) / (
        (v * (beta + s) + eps) * ((s * v + eps) ** 2 + beta * v * eps)
    )
    return q * core, (1.0 - q) * core


def cr_cross_partials(params: MarketParams, q: float, p: float) -> tuple[float, float]:
    """``(D0y, D1x)`` for CR at equal prices."""
    _check_q(q)
    v, dv, s = _point(params, p)
    eps, beta, lam = params.eps, params.beta, params.lam
    core = -lam * beta * eps**2 * v * dv * s / ((v * s + eps) ** 2 * ((s * v + eps) ** 2 + beta * v * eps))
    return q * core, (1.0 - q) * core


def cross_partials(params: MarketParams, design: Design, q: float, p: float) -> tuple[float, float]:
    if design == "lr":
        return lr_cross_partials(params, q, p)
    if design == "cr":
        return cr_cross_partials(params, q, p)
    raise ValueError(f"unknown design {design!r}")


def bias_demand_lr(params: MarketParams, p: float) -> float:
    v, dv, s = _point(params, p)
    eps, beta = params.eps, params.beta
    return -params.lam * s * s * v * dv * (eps + s * v) / (
        ((eps + s * v) + beta * v) * ((s * v + eps) ** 2 + beta * v * eps)
    )


def bias_demand_cr(params: MarketParams, p: float) -> float:
    v, dv, s = _point(params, p)
    eps, beta = params.eps, params.beta
    return -params.lam * beta * eps**2 * v * dv * s / (
        (v * s + eps) ** 2 * ((s * v + eps) ** 2 + beta * v * eps)
    )


def bias_lr(params: MarketParams, p: float) -> float:
    """Profit bias of the LR naive estimator; does not depend on ``q``."""
    return (p - params.cost) * bias_demand_lr(params, p)


def bias_cr(params: MarketParams, p: float) -> float:
    """Profit bias of the CR naive estimator; does not depend on ``q``."""
    return (p - params.cost) * bias_demand_cr(params, p)


def bias_profit_design(params: MarketParams, design: Design, p: float) -> float:
    return bias_lr(params, p) if design == "lr" else bias_cr(params, p)


# -- extreme market balance ---------------------------------------------------


@dataclass(frozen=True)
class LimitValues:
    """Targets of normalized GTE and biases as ``beta -> 0`` (per ``lam``) and ``beta -> inf`` (per ``tau``)."""

    gte0: float
    bias_lr0: float
    bias_cr0: float
    gte_inf: float
    bias_lr_inf: float
    bias_cr_inf: float

    def as_dict(self) -> dict[str, float]:
        return dict(self.__dict__)


def limit_values(params: MarketParams, p: float) -> LimitValues:
    v, dv = _valuation_at(params, p)
    rho, eps, m = params.rho, params.eps, p - params.cost
    a = eps + rho * v
    return LimitValues(
        gte0=rho * v / a + m * rho * dv * eps / a**2,
        bias_lr0=-m * rho**2 * v * dv / a**2,
        bias_cr0=0.0,
        gte_inf=rho,
        bias_lr_inf=0.0,
        bias_cr_inf=-rho * m * dv / v,
    )


def demand_system(params: MarketParams, design: Design, price_hi: float = 10.0):
    """Wrap the mean-field market as a generic :class:`~pricebias.pricing.DemandSystem`."""
    from .pricing import DemandSystem

    if design not in DESIGNS:
        raise ValueError(f"unknown design {design!r}")
    return DemandSystem(
        market_demand=lambda p: demand(params, p),
        control_demand=lambda p0, p1, q: design_demands(params, design, q, p0, p1)[0],
        treatment_demand=lambda p0, p1, q: design_demands(params, design, q, p0, p1)[1],
        cost=params.cost,
        price_hi=price_hi,
    )


def classify_point(params: MarketParams, design: Design, p: float, q: float = 0.5):
    """Sign classification from the closed-form derivatives (no finite differences)."""
    from .pricing import classify_from_derivatives

    d0y, d1x = cross_partials(params, design, q, p)
    return classify_from_derivatives(
        p, params.cost, q, demand(params, p), demand_price_derivative(params, p), d0y, d1x
    )
