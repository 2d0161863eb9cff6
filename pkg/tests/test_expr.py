import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from superforms import expr as ex
from superforms.expr import ExpressionError, parse_expression


def test_quadratic_hessian_is_twice_identity():
    f = parse_expression("x1^2 + x2^2", 2)
    H = f.hessian(np.array([[0.3, -1.2]]), 2)
    assert np.allclose(H, 2 * np.eye(2))


def test_cosh_derivative():
    f = parse_expression("cosh(x1)", 1)
    x = np.linspace(-1, 1, 7)[:, None]
    assert np.allclose(f.gradient(x, 1)[:, 0], np.sinh(x[:, 0]))


def test_nary_max_and_constants():
    f = parse_expression("max(0, x1, x2, x1 + x2) + pi - e", 2)
    x = np.array([[1.0, -2.0], [0.5, 0.25]])
    assert np.allclose(f(x), [1.0 + np.pi - np.e, 0.75 + np.pi - np.e])


def test_precedence_and_unary_minus():
    f = parse_expression("-x1^2 + 2*x2/4", 2)
    assert float(f(np.array([3.0, 2.0]))) == pytest.approx(-9.0 + 1.0)


@pytest.mark.parametrize(
    "text, column",
    [("x1 + * x2", 6), ("sin(x1", 7), ("x1 + y", 6), ("foo(x1)", 1), ("x1 + 2 )", 8)],
)
def test_errors_carry_columns(text, column):
    with pytest.raises(ExpressionError) as info:
        parse_expression(text, 2)
    assert info.value.column == column


def test_unknown_identifier_outside_dimension():
    with pytest.raises(ExpressionError):
        parse_expression("x3", 2)


def test_named_variables():
    f = parse_expression("u1 * cos(u2)", ["u1", "u2"])
    assert float(f(np.array([2.0, 0.0]))) == pytest.approx(2.0)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=2, max_size=2), st.integers(0, 1))
def test_symbolic_gradient_matches_finite_difference(point, k):
    f = parse_expression("sin(x1) * exp(x2) + sqrt(1 + x1^2 * x2^2) - log(2 + cos(x2))", 2)
    x = np.array(point)
    h = 1e-6
    e = np.zeros(2)
    e[k] = h
    fd = (f(x + e) - f(x - e)) / (2 * h)
    assert float(f.diff(k)(x)) == pytest.approx(float(fd), rel=1e-6, abs=1e-6)


def test_substitution():
    X = ex.variables(2)
    f = X[0] * X[1]
    g = f.subs({0: X[1] + 1.0})
    assert float(g(np.array([5.0, 2.0]))) == pytest.approx(6.0)
