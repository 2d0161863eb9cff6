import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from superforms import expr as ex
from superforms.expr import parse_expression
from superforms.fields import gaussian, kernel_E
from superforms.minimal import (
    AtomEvaluationError,
    CoverageError,
    DiscreteMeasure,
    ball_integral,
    brendle_hung_weight,
    default_test_suite,
    density,
    dirichlet_form,
    kernel_identity_check,
    laplacian_pair,
    m_subharmonic_eigen,
    m_subharmonic_test,
    mass_in_ball_clipped,
    mass_profile,
    minimality_residual,
    riesz_potential,
    smoothed_mass_check,
    weighted_volume_bound,
)
from superforms.quadrature import Box
from superforms.shapes import catenoid, plane, sphere

CUBE = Box((-1.0,) * 3, (1.0,) * 3)


def test_minimality_detects_nonminimal_sphere():
    S = sphere(nodes=48)
    res = minimality_residual(S, default_test_suite(S, count=8, seed=1, margin=0.3))
    assert res.residual > 1e-2
    assert res.mismatch < 1e-6


def test_catenoid_minimality_residual():
    C = catenoid(nodes=48)
    assert minimality_residual(C, default_test_suite(C, count=8, seed=1, margin=0.3)).residual < 1e-6


def test_dirichlet_form_routes_agree():
    S = sphere()
    a, b = dirichlet_form(S, ex.variables(3)[2])
    assert a == pytest.approx(b, rel=1e-12)
    assert a == pytest.approx(8 * np.pi / 3, rel=1e-10)


def test_laplacian_pair_of_linear_function_on_minimal_surface():
    # coordinate functions are harmonic on a minimal surface
    X = ex.variables(3)
    assert laplacian_pair(catenoid(), X[0] + 2 * X[1], gaussian(3, (1.0, 0.0, 0.0), 0.2)) == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("n, p", [(3, 0), (3, 1), (4, 2), (5, 3)])
def test_kernel_identity(n, p):
    assert kernel_identity_check(n, p, 1e-2, samples=200, seed=n) < 1e-9


@settings(max_examples=15, deadline=None)
@given(st.floats(-0.3, 0.3), st.floats(-0.3, 0.3), st.floats(0.05, 0.6))
def test_plane_ball_mass_is_disk_area(a, b, r):
    P = plane()
    assert ball_integral(P, (a, b, 0.0), r) == pytest.approx(np.pi * r * r, rel=1e-9)


def test_ball_mass_routes_agree():
    C = catenoid()
    assert mass_in_ball_clipped(C, (1.0, 0.0, 0.0), 0.5) == pytest.approx(ball_integral(C, (1.0, 0.0, 0.0), 0.5), rel=1e-3)


def test_ball_outside_patch_raises():
    with pytest.raises(CoverageError):
        ball_integral(plane(half_width=1.0), (0.0, 0.0, 0.0), 1.5)


def test_catenoid_ratios_nondecreasing():
    prof = mass_profile(catenoid(), (1.0, 0.0, 0.0), np.linspace(0.05, 0.8, 12))
    assert prof.is_monotone()
    assert prof.ratios[-1] > prof.ratios[0]


def test_density_on_sphere_is_pi():
    assert density(sphere(), (1.0, 0.0, 0.0)).value == pytest.approx(np.pi, abs=1e-2)


def test_smoothed_mass_identity():
    sigma, other = smoothed_mass_check(catenoid(), (1.0, 0.0, 0.0), 0.5, 1e-2)
    assert sigma == pytest.approx(other, rel=1e-9)


def test_volume_bound_rejects_wrong_weight():
    a = np.array([0.3, 0.0, 0.0])
    with pytest.raises(ValueError):
        weighted_volume_bound(plane(), a, parse_expression("1 + x1^2", 3))


def test_brendle_hung_weight_on_boundary():
    a = np.array([0.2, -0.1, 0.4])
    w = brendle_hung_weight(a, 2)
    y = np.random.default_rng(0).standard_normal((50, 3))
    y /= np.linalg.norm(y, axis=1, keepdims=True)
    assert np.allclose(w(y), np.linalg.norm(y - a, axis=1) ** 2)


@pytest.mark.parametrize(
    "u, m, expected",
    [
        ("x1^2 + x2^2 + x3^2", 2, True),
        ("-x1^2", 2, False),
        ("x1^2 - x2^2/4", 2, False),
        ("x1^2 - x2^2/4", 3, True),
    ],
)
def test_m_subharmonic_probe_matches_eigenvalues(u, m, expected):
    f = parse_expression(u, 3)
    assert m_subharmonic_test(f, m, CUBE) is expected
    assert m_subharmonic_eigen(f, m, CUBE) is expected


def test_smoothed_kernel_is_subharmonic():
    assert m_subharmonic_test(kernel_E(3, 0, 0.01), 2, CUBE)


def test_riesz_potential():
    mu = DiscreteMeasure([[3.0, 0.0, 0.0, 0.0], [0.0, -3.0, 0.0, 0.0]], [1.0, 0.5])
    u = riesz_potential(mu, 3)
    assert m_subharmonic_test(u.expr, 3, Box((-1.0,) * 4, (1.0,) * 4))
    with pytest.raises(AtomEvaluationError):
        u(np.array([3.0, 0.0, 0.0, 0.0]))
    with pytest.raises(ValueError):
        DiscreteMeasure([[0.0, 0.0]], [-1.0])
