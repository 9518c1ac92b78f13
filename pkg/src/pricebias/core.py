"""Generic interference-bias calculus for a scalar decision variable.

A :class:`MetricSystem` bundles a market-wide metric ``T(x)`` with the
experimental control and treatment metrics ``T0(x0, x1, q)`` and
``T1(x0, x1, q)``. At equal arguments the scaled group metrics must
reproduce the market metric; under that condition the local naive
estimator and its bias reduce to partial derivatives at ``(x0, x0, q)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

from .errors import ConsistencyViolation
from .numerics import DEFAULT_TOL, central_diff, cross_partial_fd

GroupMetric = Callable[[float, float, float], float]

CONSISTENCY_TOL = 1e-9


@dataclass(frozen=True)
class MetricSystem:
    global_metric: Callable[[float], float]
    control_metric: GroupMetric
    treatment_metric: GroupMetric
    domain_lo: float = float("-inf")
    domain_hi: float = float("inf")


@dataclass(frozen=True)
class ConsistencyReport:
    max_control_residual: float
    max_treatment_residual: float
    worst_point: tuple[float, float] | None

    @property
    def max_residual(self) -> float:
        return max(self.max_control_residual, self.max_treatment_residual)


def _residuals(sys: MetricSystem, x: float, q: float) -> tuple[float, float]:
    t = sys.global_metric(x)
    r0 = abs(sys.control_metric(x, x, q) / (1.0 - q) - t)
    r1 = abs(sys.treatment_metric(x, x, q) / q - t)
    return r0, r1


def check_consistency(
    sys: MetricSystem, x_samples: Sequence[float], q_samples: Sequence[float]
) -> ConsistencyReport:
    """Largest deviation of ``T0(x,x,q)/(1-q)`` and ``T1(x,x,q)/q`` from ``T(x)``.

    Never raises; a broken system simply shows up as a large residual.
    """
    worst = None
    m0 = m1 = 0.0
    for x in x_samples:
        for q in q_samples:
            r0, r1 = _residuals(sys, x, q)
            if max(r0, r1) > max(m0, m1) or worst is None:
                worst = (x, q)
            m0, m1 = max(m0, r0), max(m1, r1)
    return ConsistencyReport(m0, m1, worst)


def _require_consistent(sys: MetricSystem, x0: float, q: float, tol: float) -> None:
    if not 0.0 < q < 1.0:
        raise ValueError(f"treatment fraction must lie in (0, 1), got {q}")
    r0, r1 = _residuals(sys, x0, q)
    scale = max(1.0, abs(sys.global_metric(x0)))
    if max(r0, r1) > tol * scale:
        raise ConsistencyViolation(
            f"group metrics disagree with the global metric at x={x0}, q={q}: "
            f"control residual {r0:.3e}, treatment residual {r1:.3e}"
        )


def gte(sys: MetricSystem, x0: float, h: float = DEFAULT_TOL.fd_step) -> float:
    """Local global treatment effect ``T'(x0)``."""
    return central_diff(sys.global_metric, x0, h)


def group_partials(
    sys: MetricSystem, x0: float, q: float, h: float = DEFAULT_TOL.fd_step
) -> dict[str, float]:
    """The four first partials of the group metrics at ``(x0, x0, q)``.

    Keys follow the ``x`` = control argument, ``y`` = treatment argument
    convention: ``T0x, T0y, T1x, T1y``.
    """
    t0x, t0y = cross_partial_fd(lambda a, b: sys.control_metric(a, b, q), x0, x0, h)
    t1x, t1y = cross_partial_fd(lambda a, b: sys.treatment_metric(a, b, q), x0, x0, h)
    return {"T0x": t0x, "T0y": t0y, "T1x": t1x, "T1y": t1y}


def naive_estimator(
    sys: MetricSystem,
    x0: float,
    q: float,
    h: float = DEFAULT_TOL.fd_step,
    consistency_tol: float = CONSISTENCY_TOL,
) -> float:
    """Local naive estimator ``T1y/q - T0y/(1-q)`` evaluated at ``(x0, x0, q)``."""
    _require_consistent(sys, x0, q, consistency_tol)
    d = group_partials(sys, x0, q, h)
    return d["T1y"] / q - d["T0y"] / (1.0 - q)


def bias(
    sys: MetricSystem,
    x0: float,
    q: float,
    h: float = DEFAULT_TOL.fd_step,
    consistency_tol: float = CONSISTENCY_TOL,
) -> float:
    """Bias of the naive estimator, ``T0y/(1-q) + T1x/q``.

    Only the cross effects enter: how each group's metric responds to the
    *other* group's decision variable.
    """
    _require_consistent(sys, x0, q, consistency_tol)
    d = group_partials(sys, x0, q, h)
    return d["T0y"] / (1.0 - q) + d["T1x"] / q
