import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from superforms.expr import ExpressionError, parse_expression
from superforms.quadrature import Box
from superforms.tropical import (
    QuasitropicalPolynomial,
    balancing_check,
    cell_complex,
    convexity_equivalence,
    log_sum_exp,
    ma_measure_pl,
    ma_measure_smooth,
    multiplicities,
    pieces_from_expr,
    random_quasitropical,
    reduce,
)

ABS_SUM = QuasitropicalPolynomial([[1, 1], [1, -1], [-1, 1], [-1, -1]], [0, 0, 0, 0])
SQUARE = QuasitropicalPolynomial([[0, 0], [1, 0], [0, 1], [1, 1]], [0, 0, 0, 0])


def test_evaluation_is_max_of_pieces():
    x = np.array([[0.5, -2.0], [1.0, 1.0]])
    assert np.allclose(ABS_SUM(x), [2.5, 2.0])


def test_pieces_from_max_expression():
    phi = pieces_from_expr(parse_expression("max(0, x1, x2, x1 + x2)", 2), 2)
    assert len(phi) == 4
    x = np.random.default_rng(0).standard_normal((20, 2))
    assert np.allclose(phi(x), SQUARE(x))
    with pytest.raises(ValueError):
        pieces_from_expr(parse_expression("max(0, x1^2)", 2), 2)


def test_reduce_drops_dominated_pieces():
    phi = QuasitropicalPolynomial([[0, 0], [1, 0], [0.5, 0]], [0, 0, -1])
    assert len(reduce(phi)) == 2


def test_json_roundtrip():
    spec = json.loads(json.dumps(SQUARE.to_json()))
    assert np.array_equal(QuasitropicalPolynomial.from_json(spec).a, SQUARE.a)
    with pytest.raises(ValueError):
        QuasitropicalPolynomial.from_json({"pieces": [{"a": [1, 0]}]})


def test_abs_sum_complex():
    cx = cell_complex(ABS_SUM)
    assert len(cx.facets) == 4
    assert len(cx.vertices) == 1
    assert len(cx.vertices[0].edges) == 4
    assert np.allclose(cx.vertices[0].point, 0.0)


def test_multiplicities_are_normal_and_positive():
    for mv in multiplicities(cell_complex(SQUARE)):
        assert mv.normality_residual < 1e-12
        assert mv.positivity > 0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 8), st.booleans())
def test_balancing_random(seed, pieces, integer):
    rng = np.random.default_rng(seed)
    cx = cell_complex(reduce(random_quasitropical(2, pieces, rng, integer)))
    assert balancing_check(cx) <= 1e-9


def test_pl_masses():
    assert sum(m for _, m in ma_measure_pl(ABS_SUM)) == pytest.approx(4.0, abs=1e-12)
    atoms = ma_measure_pl(SQUARE)
    assert len(atoms) == 1
    assert atoms[0][1] == pytest.approx(1.0, abs=1e-12)


def test_smooth_ma_matches_determinant():
    phi = parse_expression("x1^2 + x1*x2 + x2^2", 2)
    res = ma_measure_smooth(phi, Box((-1.0, -1.0), (1.0, 1.0)), nodes=8)
    # Hessian [[2, 1], [1, 2]] has determinant 3
    assert res.total == pytest.approx(12.0, rel=1e-12)
    assert res.max_pointwise_error < 1e-12


def test_smoothing_approaches_pl_mass():
    totals = [
        ma_measure_smooth(log_sum_exp(SQUARE, t), Box((-8.0, -8.0), (8.0, 8.0)), nodes=48, panels=4).total
        for t in (1.0, 4.0)
    ]
    assert abs(totals[1] - 1.0) < abs(totals[0] - 1.0)
    assert totals[1] == pytest.approx(1.0, abs=1e-3)


def test_convexity_equivalence():
    box = Box((-1.0, -1.0), (1.0, 1.0))
    assert convexity_equivalence(parse_expression("exp(x1) + x2^2", 2), box)
    assert not convexity_equivalence(parse_expression("x1^2 - x2^2", 2), box)


def test_max_requires_arguments():
    with pytest.raises(ExpressionError):
        parse_expression("max()", 2)
