"""Scalar numerical kernels: root finding (Brent, damped Newton) and finite differences."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from .errors import EvalFailure, MaxIterations, NoBracket

_EPS = 2.220446049250313e-16


@dataclass(frozen=True)
class Tolerances:
    residual_tol: float = 1e-12
    step_tol: float = 1e-12
    max_iter: int = 200
    # One Richardson level makes truncation O(h^4); round-off then balances near h ~ 1e-4.
    fd_step: float = 1e-4

    def __post_init__(self):
        for name in ("residual_tol", "step_tol", "fd_step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


DEFAULT_TOL = Tolerances()
# Runs Brent down to adjacent floats; used where results get finite-differenced.
TIGHT_TOL = Tolerances(residual_tol=1e-300, step_tol=1e-300, max_iter=400)


def _evaluate(f: Callable[[float], float], x: float) -> float:
    try:
        y = float(f(x))
    except (ArithmeticError, ValueError) as exc:
        raise EvalFailure(f"evaluation failed at x={x!r}: {exc}") from exc
    if not math.isfinite(y):
        raise EvalFailure(f"non-finite value {y!r} at x={x!r}")
    return y


def find_root_bracketed(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    tol: Tolerances = DEFAULT_TOL,
) -> float:
    """Find a root of ``f`` inside ``[lo, hi]`` with Brent's method.

    Inverse quadratic / secant steps are used when they stay inside the
    bracket and shrink it fast enough; otherwise the step is a bisection, so
    convergence is guaranteed for any continuous ``f`` that changes sign.

    Returns as soon as ``|f(x)| <= tol.residual_tol`` or the bracket is no
    wider than ``tol.step_tol`` (plus a few ulps of ``x``).

    Raises:
        NoBracket: if ``f(lo)`` and ``f(hi)`` have the same strict sign.
        MaxIterations: if neither stopping rule fires within ``tol.max_iter``.
    """
    if lo > hi:
        lo, hi = hi, lo
    fa = _evaluate(f, lo)
    if lo == hi:
        if fa == 0.0:
            return lo
        raise NoBracket(f"degenerate bracket at {lo!r} with f={fa!r}")
    fb = _evaluate(f, hi)
    if fa == 0.0:
        return lo
    if fb == 0.0:
        return hi
    if fa * fb > 0.0:
        raise NoBracket(f"f({lo!r})={fa!r} and f({hi!r})={fb!r} share a sign")

    # b is the current best estimate, a the previous iterate, c the contrapoint.
    a, b = lo, hi
    c, fc = a, fa
    d = e = b - a
    for _ in range(tol.max_iter):
        if fb * fc > 0.0:
            c, fc = a, fa
            d = e = b - a
        if abs(fc) < abs(fb):
            a, b, c = b, c, b
            fa, fb, fc = fb, fc, fb
        tol1 = 2.0 * _EPS * abs(b) + 0.5 * tol.step_tol
        m = 0.5 * (c - b)
        if abs(fb) <= tol.residual_tol or abs(m) <= tol1:
            return b
        if abs(e) >= tol1 and abs(fa) > abs(fb):
            s = fb / fa
            if a == c:
                p = 2.0 * m * s
                qq = 1.0 - s
            else:
                qq = fa / fc
                r = fb / fc
                p = s * (2.0 * m * qq * (qq - r) - (b - a) * (r - 1.0))
                qq = (qq - 1.0) * (r - 1.0) * (s - 1.0)
            if p > 0.0:
                qq = -qq
            else:
                p = -p
            if 2.0 * p < min(3.0 * m * qq - abs(tol1 * qq), abs(e * qq)):
                e, d = d, p / qq
            else:
                d = e = m
        else:
            d = e = m
        a, fa = b, fb
        b = b + (d if abs(d) > tol1 else math.copysign(tol1, m))
        fb = _evaluate(f, b)
        if fb == 0.0:
            return b
    raise MaxIterations(
        f"no convergence after {tol.max_iter} iterations; bracket [{min(b, c)!r}, {max(b, c)!r}]"
    )


def newton_damped(
    f: Callable[[float], float],
    df: Callable[[float], float],
    x0: float,
    lo: float = -math.inf,
    hi: float = math.inf,
    tol: Tolerances = DEFAULT_TOL,
) -> float:
    """Newton iteration with step halving, kept inside ``[lo, hi]``.

    A step is halved (up to 30 times) until it lowers ``|f|``; iterates that
    leave the interval are clipped to it. Stops on ``|f| <= residual_tol`` or
    a step no larger than ``step_tol * max(1, |x|)``.

    Raises:
        MaxIterations: if the budget runs out or no damped step reduces ``|f|``.
        EvalFailure: if ``f`` or ``df`` is not evaluable, or ``df`` vanishes.
    """
    x = min(max(x0, lo), hi)
    fx = _evaluate(f, x)
    for _ in range(tol.max_iter):
        if abs(fx) <= tol.residual_tol:
            return x
        slope = _evaluate(df, x)
        if slope == 0.0:
            raise EvalFailure(f"zero derivative at x={x!r}")
        step = -fx / slope
        for _ in range(30):
            xn = min(max(x + step, lo), hi)
            fn = _evaluate(f, xn)
            if abs(fn) < abs(fx):
                break
            step *= 0.5
        else:
            raise MaxIterations(f"damped Newton stalled at x={x!r}, f={fx!r}")
        moved = abs(xn - x)
        x, fx = xn, fn
        if moved <= tol.step_tol * max(1.0, abs(x)):
            return x
    raise MaxIterations(f"damped Newton: no convergence after {tol.max_iter} iterations (x={x!r}, f={fx!r})")


def _step(x: float, h: float) -> float:
    return h * max(1.0, abs(x))


def central_diff(
    f: Callable[[float], float],
    x: float,
    h: float = DEFAULT_TOL.fd_step,
    richardson: bool = True,
) -> float:
    """Central difference of ``f`` at ``x`` with step ``h * max(1, |x|)``.

    With ``richardson`` the estimate at step Δ is combined with the one at
    Δ/2, cancelling the O(Δ²) truncation term.
    """
    delta = _step(x, h)

    def diff(dx):
        return (_evaluate(f, x + dx) - _evaluate(f, x - dx)) / (2.0 * dx)

    coarse = diff(delta)
    if not richardson:
        return coarse
    fine = diff(0.5 * delta)
    return (4.0 * fine - coarse) / 3.0


def cross_partial_fd(
    f: Callable[[float, float], float],
    x: float,
    y: float,
    h: float = DEFAULT_TOL.fd_step,
    richardson: bool = True,
) -> tuple[float, float]:
    """Both first partials of ``f(x, y)``, each holding the other argument fixed."""
    dx = central_diff(lambda t: f(t, y), x, h, richardson)
    dy = central_diff(lambda t: f(x, t), y, h, richardson)
    return dx, dy
