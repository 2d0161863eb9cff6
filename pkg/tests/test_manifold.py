import numpy as np
import pytest

from superforms import expr as ex
from superforms.algebra import beta, factorial, one_form, wedge_power
from superforms.expr import parse_expression
from superforms.fields import FormField
from superforms.manifold import (
    F_sharp_action_pair,
    dsharp_supercurrent_pair,
    frame_residuals,
    gauss_check,
    supercurrent_pair,
    supercurrent_pair_ambient,
)
from superforms.minimal import localized_test_forms
from superforms.shapes import (
    ManifoldSpecError,
    catenoid,
    circle3,
    crossing_planes,
    cylinder,
    from_spec,
    graph,
    helicoid,
    sphere,
    torus,
)


def _volume_form(M):
    return wedge_power(beta(M.n), M.m) / factorial(M.m)


@pytest.mark.parametrize(
    "M, area",
    [
        (sphere(2.0), 16 * np.pi),
        (cylinder(1.0, 2.0), 4 * np.pi),
        (circle3(0.5), np.pi),
        (torus(3.0, 1.0), 12 * np.pi**2),
    ],
)
def test_volumes_by_both_routes(M, area):
    vol = _volume_form(M)
    assert supercurrent_pair(M, vol) == pytest.approx(area, rel=1e-10)
    assert supercurrent_pair_ambient(M, vol) == pytest.approx(area, rel=1e-10)


def test_union_volume_adds():
    assert crossing_planes(1.0).volume() == pytest.approx(8.0)


def test_sphere_mean_curvature_vector():
    S = sphere()
    assert np.allclose(S.sff().H_vector, 2 * S.points, atol=1e-12)


def test_catenoid_is_minimal_pointwise():
    C = catenoid(nodes=24)
    assert np.max(np.abs(C.sff().H_vector)) < 1e-10


@pytest.mark.parametrize("M", [sphere(nodes=16), catenoid(nodes=16), helicoid(nodes=16), torus(nodes=16)])
def test_closed_frame_residuals(M):
    assert max(frame_residuals(M, "closed")) < 1e-10


def test_dsharp_weak_identity_on_torus():
    M = torus(nodes=96).with_frame("closed")
    for psi in localized_test_forms(M, [(2, 1)], count=3, seed=2, width=0.3, margin=0.3):
        assert dsharp_supercurrent_pair(M, psi) == pytest.approx(-F_sharp_action_pair(M, psi), abs=1e-9)


def test_gauss_equation_needs_closed_frame():
    X = ex.variables(3)
    a = FormField(3, one_form([X[1] * X[2] + 1, ex.sin(X[0]), X[0] ** 2], "x").terms)
    for M in (sphere(), catenoid(), cylinder()):
        x = M.points[::97][:5]
        assert gauss_check(M, a, x) < 1e-9
    C = catenoid()
    assert gauss_check(C, a, C.points[::97][:5], frame="normalized") > 1e-3


def test_graph_area_matches_classical_formula():
    M = graph(parse_expression("x1^2/4 - x2^2/5", 2))
    x = M.points
    classical = np.sqrt(1 + (x[:, 0] / 2) ** 2 + (2 * x[:, 1] / 5) ** 2)
    # integrate the classical density on the parameter square with the same rule
    w = M.chart.param_weights
    assert M.volume() == pytest.approx(float(w @ classical), rel=1e-12)


def test_from_spec_shapes_and_errors():
    S = from_spec({"kind": "sphere", "radius": 1.0, "nodes": 12})
    assert S.m == 2 and S.n == 3
    G = from_spec({"kind": "graph", "f": "x1*x2"})
    assert G.volume() > 4.0
    ch = from_spec(
        {
            "kind": "chart",
            "phi": ["cos(u1)", "sin(u1)"],
            "domain": {"lower": [0], "upper": [6.283185307179586], "periodic": [True]},
        }
    )
    assert ch.volume() == pytest.approx(2 * np.pi)
    with pytest.raises(ManifoldSpecError):
        from_spec({"kind": "sphere", "radius": 1.0, "colour": "red"})
    with pytest.raises(ManifoldSpecError):
        from_spec({"radius": 1.0})
