"""Randomized identity checks for the superform calculus."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .algebra import contract, cup, j_map
from .fields import FormField, exterior_d, gaussian, random_form_field, random_polynomial, scalar, superintegrate
from .quadrature import Box

__all__ = ["IdentityCheck", "algebra_suite", "integration_by_parts_check", "IDENTITIES"]

IDENTITIES = ("d_squared", "dsharp_squared", "anticommute", "dsharp_via_J", "commutator", "leibniz_d", "leibniz_dsharp")


@dataclass
class IdentityCheck:
    name: str
    checks: int
    max_error: float


def _field(a) -> FormField:
    return FormField(a.dim, a.terms)


def _random_bidegree(n: int, rng, max_total: int | None = None) -> tuple[int, int]:
    while True:
        p, q = int(rng.integers(0, n + 1)), int(rng.integers(0, n + 1))
        if max_total is None or p + q <= max_total:
            return p, q


def _random_monomial(n: int, rng, degree: int) -> FormField:
    p, q = _random_bidegree(n, rng)
    I = rng.choice(n, size=p, replace=False)
    J = rng.choice(n, size=q, replace=False)
    key = (int(sum(1 << int(i) for i in I)), int(sum(1 << int(j) for j in J)))
    return FormField(n, {key: random_polynomial(n, degree, rng)})


def _residual(lhs, rhs, x) -> tuple[int, float]:
    diff = _field(lhs - rhs)
    if diff.is_zero():
        return x.shape[0], 0.0
    vals = diff.at(x)
    scale = max(1.0, _field(lhs).at(x).max_abs() if not _field(lhs).is_zero() else 0.0)
    return x.shape[0], vals.max_abs() / scale


def _one_check(name: str, n: int, rng, x, degree: int):
    if name in ("d_squared", "dsharp_squared", "anticommute", "dsharp_via_J"):
        p, q = _random_bidegree(n, rng)
        a = random_form_field(n, p, q, rng, degree)
        if name == "d_squared":
            return _residual(a.d().d(), FormField(n), x)
        if name == "dsharp_squared":
            return _residual(a.dsharp().dsharp(), FormField(n), x)
        if name == "anticommute":
            return _residual(a.d().dsharp(), -_field(a.dsharp().d()), x)
        k = p + q
        rhs = _field(j_map(_field(j_map(a)).d())) * float((-1) ** k)
        return _residual(a.dsharp(), rhs, x)
    if name == "commutator":
        # theta must be closed for F = d theta# to be symmetric
        theta = scalar(random_polynomial(n, degree + 1, rng), n).d()
        a = _random_monomial(n, rng, degree)
        F = _field(j_map(theta)).d()
        lhs = _field(contract(theta, a)).dsharp() + _field(contract(theta, a.dsharp()))
        return _residual(lhs, -_field(cup(F, a)), x)
    p1, q1 = _random_bidegree(n, rng)
    p2, q2 = _random_bidegree(n, rng)
    a = random_form_field(n, p1, q1, rng, degree)
    b = random_form_field(n, p2, q2, rng, degree)
    sign = float((-1) ** (p1 + q1))
    if name == "leibniz_d":
        return _residual(_field(a ^ b).d(), _field(a.d() ^ b) + _field(a ^ b.d()) * sign, x)
    return _residual(_field(a ^ b).dsharp(), _field(a.dsharp() ^ b) + _field(a ^ b.dsharp()) * sign, x)


def algebra_suite(seed: int, count: int = 10_000, points: int = 25, dims=(2, 3, 4), degree: int = 2) -> list[IdentityCheck]:
    """Evaluate every identity in ``IDENTITIES`` on random fields at random points.

    ``count`` is the minimum number of pointwise checks, split evenly over the
    identities; each random field is checked at ``points`` points of
    ``[-1, 1]^n``.
    """
    rng = np.random.default_rng(seed)
    per = max(1, -(-count // (len(IDENTITIES) * points)))
    out = []
    for name in IDENTITIES:
        total, worst = 0, 0.0
        for _ in range(per):
            n = int(rng.choice(dims))
            x = rng.uniform(-1.0, 1.0, size=(points, n))
            c, e = _one_check(name, n, rng, x, degree)
            total += c
            worst = max(worst, e)
        out.append(IdentityCheck(name, total, worst))
    return out


def integration_by_parts_check(n: int, seed: int, nodes: int = 32, sharp: bool = False) -> tuple[float, float]:
    """``int da ^ b`` against ``(-1)^{k+1} int a ^ db`` on ``[-1, 1]^n``.

    ``a`` carries a narrow Gaussian envelope, so boundary terms are below
    1e-10.  ``sharp=True`` checks the same identity for ``d#``.  Returns both
    sides.
    """
    rng = np.random.default_rng(seed)
    env = gaussian(n, None, 0.2)
    # choose bidegrees so that da ^ b (or d#a ^ b) is an (n, n)-form
    p = int(rng.integers(0, n))
    q = int(rng.integers(0, n + 1))
    if sharp:
        p, q = int(rng.integers(0, n + 1)), int(rng.integers(0, n))
        a = random_form_field(n, p, q, rng, 2, env)
        b = random_form_field(n, n - p, n - q - 1, rng, 2)
        lhs = superintegrate(_field(a.dsharp() ^ b), Box((-1.0,) * n, (1.0,) * n), nodes)
        rhs = (-1) ** (p + q + 1) * superintegrate(_field(a ^ b.dsharp()), Box((-1.0,) * n, (1.0,) * n), nodes)
        return lhs, rhs
    a = random_form_field(n, p, q, rng, 2, env)
    b = random_form_field(n, n - p - 1, n - q, rng, 2)
    lhs = superintegrate(_field(exterior_d(a) ^ b), Box((-1.0,) * n, (1.0,) * n), nodes)
    rhs = (-1) ** (p + q + 1) * superintegrate(_field(a ^ b.d()), Box((-1.0,) * n, (1.0,) * n), nodes)
    return lhs, rhs
