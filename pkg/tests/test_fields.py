import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from superforms import expr as ex
from superforms.algebra import BidegreeError, beta, wedge_power
from superforms.fields import (
    FormField,
    constant_form,
    dd_sharp,
    exterior_d,
    flow_pullback_derivative,
    gaussian,
    kernel_E,
    lie_derivative,
    random_form_field,
    scalar,
    sharp_d,
    superintegrate,
)
from superforms.quadrature import Ball, Box
from superforms.suite import IDENTITIES, algebra_suite, integration_by_parts_check


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 4))
def test_d_and_dsharp_square_to_zero(seed, n):
    rng = np.random.default_rng(seed)
    p, q = rng.integers(0, n + 1, size=2)
    a = random_form_field(n, int(p), int(q), rng, degree=3)
    x = rng.uniform(-1, 1, size=(8, n))
    assert a.d().d().at(x).max_abs() <= 1e-9
    assert a.dsharp().dsharp().at(x).max_abs() <= 1e-9
    assert (a.d().dsharp() + a.dsharp().d()).at(x).max_abs() <= 1e-9


def test_dd_sharp_is_hessian():
    f = ex.parse_expression("x1^3 + x1*x2^2", 2)
    x = np.array([[0.5, -1.0]])
    A = dd_sharp(f, 2).at(x).matrix11()
    assert np.allclose(A, f.hessian(x, 2))


def test_pointwise_and_field_derivatives_agree():
    rng = np.random.default_rng(3)
    a = random_form_field(3, 1, 1, rng)
    x = rng.uniform(-1, 1, size=(4, 3))
    assert exterior_d(a, x).allclose(a.d().at(x))
    assert sharp_d(a, x).allclose(a.dsharp().at(x))


def test_gaussian_superintegral():
    for n in (1, 2, 3):
        form = scalar(gaussian(n, None, 0.3), n) ^ constant_form(wedge_power(beta(n), n) / math.factorial(n))
        val = superintegrate(FormField(n, form.terms), Box((-2.0,) * n, (2.0,) * n), nodes=64)
        assert val == pytest.approx((math.pi * 0.09) ** (n / 2), rel=1e-10)


def test_ball_superintegral_is_ball_volume():
    vol = FormField(2, (wedge_power(beta(2), 2) / 2.0).terms)
    assert superintegrate(vol, Ball((0.0, 0.0), 1.0)) == pytest.approx(math.pi, rel=1e-10)


def test_superintegrate_rejects_wrong_bidegree():
    with pytest.raises(BidegreeError):
        superintegrate(FormField(2, beta(2).terms), Box((0.0, 0.0), (1.0, 1.0)))


def test_euler_field_scales_beta():
    # V = x moves only the dx factors, so L_V beta = beta
    X = ex.variables(3)
    L = lie_derivative(X, constant_form(beta(3)), np.array([0.2, -0.4, 0.9]))
    assert L.allclose(beta(3), 1e-12)


def test_lie_derivative_matches_flow():
    X = ex.variables(2)
    V = [X[1], -X[0] + 0.3 * X[0] * X[1]]
    rng = np.random.default_rng(5)
    a = random_form_field(2, 1, 1, rng)
    x = np.array([0.3, -0.7])
    assert flow_pullback_derivative(V, a, x).allclose(lie_derivative(V, a, x), 1e-6)


def test_kernel_laplacian_vanishes_away_from_origin():
    # E_{n-2,0} is harmonic off the origin
    for n in (3, 4):
        E = kernel_E(n, n - 2, 0.0)
        x = np.array([[0.4, -0.3] + [0.5] * (n - 2)])
        assert np.trace(E.hessian(x, n)[0]) == pytest.approx(0.0, abs=1e-12)


def test_algebra_suite_covers_every_identity():
    checks = algebra_suite(seed=0, count=700, dims=(2, 3))
    assert [c.name for c in checks] == list(IDENTITIES)
    assert all(c.checks > 0 and c.max_error <= 1e-9 for c in checks)


@pytest.mark.parametrize("sharp", [False, True])
@pytest.mark.parametrize("n", [1, 2, 3])
def test_integration_by_parts(n, sharp):
    lhs, rhs = integration_by_parts_check(n, seed=11, sharp=sharp)
    assert lhs == pytest.approx(rhs, rel=1e-9, abs=1e-9)
