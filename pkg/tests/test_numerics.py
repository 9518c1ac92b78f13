import math

import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize

from pricebias.errors import EvalFailure, MaxIterations, NoBracket
from pricebias.numerics import Tolerances, central_diff, cross_partial_fd, find_root_bracketed, newton_damped


@pytest.mark.parametrize(
    "f, lo, hi, root",
    [
        (lambda x: x * x + x - 1, 0.0, 1.0, (math.sqrt(5) - 1) / 2),
        (lambda x: x, -1.0, 1.0, 0.0),
        (lambda x: x - 1.0, 0.0, 2.0, 1.0),
    ],
)
def test_brent_examples(f, lo, hi, root):
    assert find_root_bracketed(f, lo, hi) == pytest.approx(root, abs=1e-10)


def test_reversed_bracket_is_accepted():
    assert find_root_bracketed(lambda x: x - 0.25, 1.0, 0.0) == pytest.approx(0.25, abs=1e-12)


def test_degenerate_bracket():
    assert find_root_bracketed(lambda x: x - 2.0, 2.0, 2.0) == 2.0
    with pytest.raises(NoBracket):
        find_root_bracketed(lambda x: x - 2.0, 1.0, 1.0)


def test_no_bracket():
    with pytest.raises(NoBracket):
        find_root_bracketed(lambda x: x * x + 1, -1.0, 1.0)


def test_iteration_budget():
    tol = Tolerances(residual_tol=1e-300, step_tol=1e-300, max_iter=2)
    with pytest.raises(MaxIterations):
        find_root_bracketed(lambda x: math.exp(x) - 2.0, 0.0, 5.0, tol)


def test_eval_failure_on_nan_and_exception():
    with pytest.raises(EvalFailure):
        find_root_bracketed(lambda x: math.nan, 0.0, 1.0)
    with pytest.raises(EvalFailure):
        find_root_bracketed(lambda x: math.log(x), -1.0, 2.0)


def test_tolerances_validation():
    with pytest.raises(ValueError):
        Tolerances(residual_tol=0.0)
    with pytest.raises(ValueError):
        Tolerances(fd_step=-1e-6)
    with pytest.raises(ValueError):
        Tolerances(max_iter=0)


@settings(max_examples=200, deadline=None)
@given(
    root=st.floats(-5, 5),
    a=st.floats(0.1, 3.0),
    lo_off=st.floats(0.01, 4.0),
    hi_off=st.floats(0.01, 4.0),
)
def test_brent_matches_scipy_and_stays_in_bracket(root, a, lo_off, hi_off):
    f = lambda x: a * (x - root) + (x - root) ** 3  # noqa: E731  monotone, single root
    lo, hi = root - lo_off, root + hi_off
    x = find_root_bracketed(f, lo, hi)
    assert lo <= x <= hi
    assert x == pytest.approx(optimize.brentq(f, lo, hi, xtol=1e-14), abs=1e-10)


@pytest.mark.parametrize(
    "f, x, expected",
    [(lambda x: x * x, 3.0, 6.0), (math.exp, 0.0, 1.0), (math.sin, 0.0, 1.0)],
)
def test_central_diff_examples(f, x, expected):
    assert central_diff(f, x) == pytest.approx(expected, abs=1e-8)
    assert central_diff(f, x, 1e-6, richardson=False) == pytest.approx(expected, abs=1e-8)


def test_central_diff_error_is_second_order():
    errs = [abs(central_diff(math.exp, 1.0, h, richardson=False) - math.e) for h in (1e-2, 1e-3)]
    assert errs[0] / errs[1] == pytest.approx(100.0, rel=0.05)


def test_richardson_improves_accuracy():
    h = 1e-2
    plain = abs(central_diff(math.exp, 1.0, h, richardson=False) - math.e)
    rich = abs(central_diff(math.exp, 1.0, h) - math.e)
    assert rich < plain * 1e-3


def test_central_diff_step_is_relative():
    # at x = 1e6 an absolute step of 1e-6 would be lost to round-off
    assert central_diff(lambda x: x * x, 1e6) == pytest.approx(2e6, rel=1e-9)


def test_central_diff_eval_failure():
    with pytest.raises(EvalFailure):
        central_diff(math.sqrt, 0.0)


@pytest.mark.parametrize(
    "f, x, y, expected",
    [
        (lambda x, y: x * y, 2.0, 3.0, (3.0, 2.0)),
        (lambda x, y: x + y, 0.0, 0.0, (1.0, 1.0)),
        (lambda x, y: x * x, 1.0, 5.0, (2.0, 0.0)),
    ],
)
def test_cross_partial_examples(f, x, y, expected):
    dx, dy = cross_partial_fd(f, x, y)
    assert dx == pytest.approx(expected[0], abs=1e-8)
    assert dy == pytest.approx(expected[1], abs=1e-8)


@settings(max_examples=100, deadline=None)
@given(x=st.floats(-2, 2), y=st.floats(-2, 2))
def test_cross_partial_separable(x, y):
    g, k = math.sin, lambda t: t**3 - math.exp(0.5 * t)
    dx, dy = cross_partial_fd(lambda a, b: g(a) + k(b), x, y)
    assert dx == pytest.approx(central_diff(g, x), abs=1e-10)
    assert dy == pytest.approx(central_diff(k, y), abs=1e-10)


def test_newton_quadratic():
    assert newton_damped(lambda x: x * x + x - 1, lambda x: 2 * x + 1, 0.0, 0.0, 1.0) == pytest.approx(
        (math.sqrt(5) - 1) / 2, abs=1e-12
    )


def test_newton_damping_rescues_divergent_start():
    # undamped Newton on atan diverges from |x0| > 1.39
    assert abs(newton_damped(math.atan, lambda x: 1 / (1 + x * x), 3.0)) < 1e-12


def test_newton_clips_to_interval():
    # the first Newton step from near 0 overshoots far past hi
    seen = []

    def f(x):
        seen.append(x)
        return x**3 - 1.0

    x = newton_damped(f, lambda x: 3 * x * x, 0.01, lo=0.0, hi=2.0)
    assert x == pytest.approx(1.0, abs=1e-12)
    assert all(0.0 <= s <= 2.0 for s in seen)


def test_newton_without_root_in_interval():
    with pytest.raises(MaxIterations):
        newton_damped(lambda x: x - 10.0, lambda x: 1.0, 0.0, lo=-1.0, hi=2.0)


def test_newton_zero_derivative():
    with pytest.raises(EvalFailure):
        newton_damped(lambda x: x * x + 1, lambda x: 2 * x, 0.0)
