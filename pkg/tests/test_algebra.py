import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from superforms.algebra import (
    BidegreeError,
    DimensionError,
    PointSuperform,
    beta,
    berezin_top,
    contract,
    cup,
    dx,
    dxi,
    from_json_terms,
    from_matrix11,
    is_positive_11,
    is_weakly_positive,
    j_map,
    one,
    one_form,
    pullback_linear,
    to_json_terms,
    trace_restricted,
    volume_constant,
    wedge_power,
)


@st.composite
def forms(draw, n=None, homogeneous=False):
    """Random point superforms with small integer coefficients."""
    n = draw(st.integers(1, 4)) if n is None else n
    keys = st.tuples(st.integers(0, 2**n - 1), st.integers(0, 2**n - 1))
    if homogeneous:
        p, q = draw(st.integers(0, n)), draw(st.integers(0, n))
        keys = keys.filter(lambda k: bin(k[0]).count("1") == p and bin(k[1]).count("1") == q)
    terms = draw(st.dictionaries(keys, st.integers(-3, 3), max_size=6))
    return PointSuperform(n, {k: float(c) for k, c in terms.items()})


@st.composite
def form_pairs(draw, count=2, homogeneous=False):
    n = draw(st.integers(1, 4))
    return tuple(draw(forms(n, homogeneous)) for _ in range(count))


def _degree(a):
    return sum(a.bidegree)


def test_generators_anticommute():
    n = 3
    assert (dx(0, n) ^ dx(1, n)).allclose(-(dx(1, n) ^ dx(0, n)))
    assert (dx(0, n) ^ dxi(1, n)).allclose(-(dxi(1, n) ^ dx(0, n)))
    assert (dxi(2, n) ^ dxi(2, n)).is_zero()


def test_beta_power_is_volume():
    for n in range(1, 6):
        top = wedge_power(beta(n), n) / math.factorial(n)
        assert berezin_top(top) == pytest.approx(1.0)


def test_volume_constant_signs():
    assert [volume_constant(n) for n in range(1, 6)] == [1, -1, -1, 1, 1]


@settings(max_examples=60, deadline=None)
@given(form_pairs(count=3))
def test_wedge_associative(abc):
    a, b, c = abc
    assert ((a ^ b) ^ c).allclose(a ^ (b ^ c))


@settings(max_examples=60, deadline=None)
@given(form_pairs(homogeneous=True))
def test_wedge_graded_commutative(ab):
    a, b = ab
    if a.is_zero() or b.is_zero():
        return
    sign = (-1) ** (_degree(a) * _degree(b))
    assert (a ^ b).allclose((b ^ a) * sign)


@settings(max_examples=60, deadline=None)
@given(forms(homogeneous=True))
def test_j_squared(a):
    if a.is_zero():
        return
    assert j_map(j_map(a)).allclose(a * (-1) ** _degree(a))


@settings(max_examples=60, deadline=None)
@given(form_pairs(homogeneous=True))
def test_j_multiplicative(ab):
    a, b = ab
    assert j_map(a ^ b).allclose(j_map(a) ^ j_map(b))


@settings(max_examples=60, deadline=None)
@given(form_pairs(homogeneous=True), st.integers(0, 3), st.booleans())
def test_contraction_antiderivation(ab, i, sharp):
    a, b = ab
    n = a.dim
    v = (dxi if sharp else dx)(i % n, n)
    lhs = contract(v, a ^ b)
    sign = (-1) ** _degree(a) if not a.is_zero() else 1
    rhs = (contract(v, a) ^ b) + (a ^ contract(v, b)) * sign
    assert lhs.allclose(rhs)


@settings(max_examples=40, deadline=None)
@given(forms(homogeneous=True), st.integers(0, 3), st.booleans())
def test_contraction_is_adjoint_of_wedge(a, i, sharp):
    # <v ⌟ a, b> = <a, v ^ b> in the orthonormal monomial basis
    n = a.dim
    v = (dxi if sharp else dx)(i % n, n)
    left = contract(v, a)
    for key in list(left.terms):
        b = PointSuperform(n, {key: 1.0})
        right = (v ^ b).terms
        lhs = left.terms[key]
        rhs = sum(a.terms.get(k, 0.0) * c for k, c in right.items())
        assert lhs == pytest.approx(rhs)


def test_cup_on_monomial():
    n = 2
    F = dx(0, n) ^ dxi(1, n)
    a = dx(0, n)
    # F ∪ a = -F_01 dxi_1 ^ (dx_0 ⌟ dx_0)
    assert cup(F, a).allclose(-dxi(1, n))
    with pytest.raises(BidegreeError):
        cup(dx(0, n), a)


def test_pullback_functorial():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((4, 3))
    B = rng.standard_normal((3, 2))
    a = from_matrix11(rng.standard_normal((4, 4))) ^ one_form(rng.standard_normal(4), "x")
    direct = pullback_linear(A @ B, a)
    staged = pullback_linear(B, pullback_linear(A, a))
    assert direct.allclose(staged, 1e-12)


def test_pullback_of_beta_is_gram_form():
    rng = np.random.default_rng(1)
    L = rng.standard_normal((3, 2))
    pulled = pullback_linear(L, beta(3))
    assert np.allclose(pulled.matrix11(), L.T @ L)


def test_pullback_dimension_check():
    with pytest.raises(DimensionError):
        pullback_linear(np.eye(2), beta(3))


def test_trace_restricted_matches_matrix_trace():
    A = np.diag([1.0, 2.0, 3.0])
    E = np.eye(3)[:2]
    assert trace_restricted(from_matrix11(A), E) == pytest.approx(3.0)
    with pytest.raises(ValueError):
        trace_restricted(from_matrix11(A), 2 * E)


def test_positivity_checks():
    assert is_positive_11(from_matrix11(np.diag([1.0, 0.0, 2.0])))
    assert not is_positive_11(from_matrix11(np.diag([1.0, -1.0])))
    assert is_weakly_positive(beta(3))
    assert not is_weakly_positive(-beta(3))


def test_json_roundtrip_is_one_based():
    a = (dx(0, 3) ^ dxi(2, 3)) * 2.5 + one(3, -1.0)
    terms = to_json_terms(a)
    assert {"I": [1], "J": [3], "c": 2.5} in terms
    assert from_json_terms(terms, 3).allclose(a)
    with pytest.raises(DimensionError):
        from_json_terms([{"I": [4], "J": [], "c": 1.0}], 3)


def test_batched_coefficients():
    rng = np.random.default_rng(2)
    A = rng.standard_normal((5, 2))
    B = rng.standard_normal((5, 2))
    a, b = one_form(A, "x"), one_form(B, "x")
    prod = a ^ j_map(a) ^ b ^ j_map(b)
    det = A[:, 0] * B[:, 1] - A[:, 1] * B[:, 0]
    assert np.allclose(berezin_top(prod), det**2)
