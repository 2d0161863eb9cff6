"""Superform fields on R^n: d, d#, super-integration, pullbacks, Lie derivatives."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import expr as ex
from .algebra import (
    BidegreeError,
    IndexPair,
    PointSuperform,
    berezin_top,
    contract,
    one_form,
    _popcount,
)
from .expr import Expr
from .quadrature import Ball, Box, ball_rule, box_rule

__all__ = [
    "FormField",
    "SingularJacobianError",
    "scalar",
    "constant_form",
    "exterior_d",
    "sharp_d",
    "dd_sharp",
    "superintegrate",
    "vector_field",
    "diffeo_pullback",
    "lie_derivative",
    "flow_pullback_derivative",
    "radial",
    "smoothed_norm",
    "kernel_E",
    "bump",
    "gaussian",
    "random_polynomial",
    "random_form_field",
]


class SingularJacobianError(ValueError):
    pass


class FormField(PointSuperform):
    """Superform whose coefficients are :class:`Expr` fields of ``x``.

    Coefficients never depend on ``xi``.  ``at(x)`` evaluates every
    coefficient at points ``x`` of shape ``(n,)`` or ``(N, n)`` and returns a
    numeric :class:`PointSuperform`.
    """

    __slots__ = ()

    def __init__(self, dim: int, terms=None):
        if terms:
            terms = {k: ex.as_expr(c) for k, c in terms.items()}
        super().__init__(dim, terms)

    def at(self, x) -> PointSuperform:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ValueError(f"points of dimension {x.shape[-1]} for a field on R^{self.dim}")
        keys = list(self.terms)
        vals = ex.evaluate_many([self.terms[k] for k in keys], x)
        if x.ndim == 1:
            vals = [float(v) for v in vals]
        return PointSuperform(self.dim, dict(zip(keys, vals)))

    def d(self) -> "FormField":
        return _derivative(self, sharp=False)

    def dsharp(self) -> "FormField":
        return _derivative(self, sharp=True)

    def subs(self, mapping) -> "FormField":
        return FormField(self.dim, {k: c.subs(mapping) for k, c in self.terms.items()})


def _derivative(a: PointSuperform, sharp: bool) -> FormField:
    n = a.dim
    out: dict = {}
    for key, c in a.terms.items():
        c = ex.as_expr(c)
        for k in range(n):
            bit = 1 << k
            if sharp:
                if key.ximask & bit:
                    continue
                parity = _popcount(key.xmask) + _popcount(key.ximask & (bit - 1))
                new = IndexPair(key.xmask, key.ximask | bit)
            else:
                if key.xmask & bit:
                    continue
                parity = _popcount(key.xmask & (bit - 1))
                new = IndexPair(key.xmask | bit, key.ximask)
            dc = c.diff(k)
            if dc.is_zero:
                continue
            if parity & 1:
                dc = -dc
            out[new] = out[new] + dc if new in out else dc
    return FormField(n, out)


def scalar(f, n: int) -> FormField:
    """A (0,0)-form field."""
    return FormField(n, {(0, 0): ex.as_expr(f)})


def constant_form(a: PointSuperform) -> FormField:
    return FormField(a.dim, dict(a.terms))


def _as_field(a) -> FormField:
    if isinstance(a, FormField):
        return a
    if isinstance(a, PointSuperform):
        return constant_form(a)
    raise TypeError(f"expected a form field, got {type(a).__name__}")


def exterior_d(a, x=None):
    """``da``; evaluated at ``x`` when given, otherwise returned as a field."""
    field = _as_field(a).d()
    return field if x is None else field.at(x)


def sharp_d(a, x=None):
    """``d#a = sum_k (d a_IJ / dx_k) dxi_k ^ dx_I ^ dxi_J``."""
    field = _as_field(a).dsharp()
    return field if x is None else field.at(x)


def dd_sharp(f: Expr, n: int) -> FormField:
    """``d d# f`` for a scalar field, i.e. its Hessian as a (1,1)-form."""
    return scalar(f, n).dsharp().d()


def superintegrate(a, domain, nodes: int = 32, panels: int = 1) -> float:
    """Super-integral of an (n,n)-form field over a box or ball."""
    a = _as_field(a)
    n = a.dim
    if a.bidegree not in ((n, n), None) or any(k.bidegree != (n, n) for k in a.terms):
        raise BidegreeError(f"super-integration needs an ({n},{n})-form")
    if isinstance(domain, Box):
        pts, w = box_rule(domain, nodes, panels)
    elif isinstance(domain, Ball):
        pts, w = ball_rule(domain, nodes)
    else:
        raise TypeError(f"unsupported domain {type(domain).__name__}")
    if domain.dim != n:
        raise ValueError("domain dimension does not match the form")
    if a.is_zero():
        return 0.0
    dens = berezin_top(a.at(pts))
    return float(np.dot(w, dens))


# ---------------------------------------------------------------------------
# diffeomorphisms and flows


def vector_field(components: Sequence) -> FormField:
    """Lower a vector field (sequence of Exprs) to the (1,0)-form it acts as."""
    comps = [ex.as_expr(c) for c in components]
    return FormField(len(comps), dict(one_form(comps, "x").terms))


def _jacobian_exprs(G: Sequence[Expr], n: int) -> list[list[Expr]]:
    return [[ex.as_expr(g).diff(k) for k in range(n)] for g in G]


class PulledBackField(FormField):
    """A pulled back field that checks the Jacobian where it is evaluated."""

    __slots__ = ("_jac",)

    def __init__(self, dim: int, terms=None, jac=None):
        super().__init__(dim, terms)
        self._jac = jac

    def _new(self, terms):
        return FormField(self.dim, terms)

    def at(self, x) -> PointSuperform:
        if self._jac is not None:
            x = np.asarray(x, dtype=float)
            flat = [e for row in self._jac for e in row]
            J = np.stack(ex.evaluate_many(flat, x), axis=-1).reshape(x.shape[:-1] + (self.dim, self.dim))
            det = np.linalg.det(J)
            if np.any(np.abs(det) < 1e-12):
                raise SingularJacobianError("Jacobian of the map is singular at an evaluation point")
        return super().at(x)


def diffeo_pullback(G: Sequence, a) -> FormField:
    """``G*(a)``: classical pullback on the ``dx`` part, ``dxi`` left fixed."""
    a = _as_field(a)
    n = a.dim
    G = [ex.as_expr(g) for g in G]
    if len(G) != n:
        raise ValueError("map must have n components")
    jac = _jacobian_exprs(G, n)
    images = [FormField(n, {(1 << k, 0): jac[i][k] for k in range(n)}) for i in range(n)]
    mapping = {k: G[k] for k in range(n)}
    out = FormField(n)
    for key, c in a.terms.items():
        part = FormField(n, {(0, 0): c.subs(mapping)})
        for i in range(n):
            if key.xmask >> i & 1:
                part = part ^ images[i]
        if key.ximask:
            part = part ^ FormField(n, {(0, key.ximask): 1.0})
        out = out + part
    return PulledBackField(n, out.terms, jac)


def lie_derivative(V: Sequence, a, x=None):
    """Cartan's formula ``L_V a = d(V ⌟ a) + V ⌟ da``."""
    a = _as_field(a)
    v = vector_field(V)
    inner = FormField(a.dim, contract(v, a).terms)
    result = inner.d() + FormField(a.dim, contract(v, a.d()).terms)
    result = FormField(a.dim, result.terms)
    return result if x is None else result.at(x)


def flow_pullback_derivative(V: Sequence, a, x, h: float = 1e-4) -> PointSuperform:
    """Central difference in ``t`` of ``G_t*(a)`` at ``t = 0``.

    ``G_t`` is the second-order Taylor flow ``x + tV + t^2/2 (DV)V``, exact
    to the order that affects the derivative.
    """
    a = _as_field(a)
    n = a.dim
    V = [ex.as_expr(v) for v in V]
    X = ex.variables(n)
    accel = [ex.add(*[V[j] * V[i].diff(j) for j in range(n)]) for i in range(n)]

    def flow(t: float):
        return [X[i] + t * V[i] + 0.5 * t * t * accel[i] for i in range(n)]

    up = diffeo_pullback(flow(h), a).at(x)
    down = diffeo_pullback(flow(-h), a).at(x)
    return (up - down) * (1.0 / (2 * h))


# ---------------------------------------------------------------------------
# built-in scalar field families


def radial(n: int, center: Sequence[float] | None = None) -> Expr:
    """``|x - c|^2``."""
    X = ex.variables(n)
    c = [0.0] * n if center is None else list(center)
    return ex.add(*[ex.power(X[i] - c[i], 2.0) for i in range(n)])


def smoothed_norm(n: int, delta: float, center=None) -> Expr:
    """``|x|_delta = (|x|^2 + delta)^{1/2}``."""
    return ex.sqrt(radial(n, center) + delta)


def kernel_E(n: int, p: int, delta: float, center=None) -> Expr:
    """``E_{p,delta} = -(1/p) |x|_delta^{-p}`` and ``E_{0,delta} = log |x|_delta``."""
    r2 = radial(n, center) + delta
    if p == 0:
        return 0.5 * ex.log(r2)
    return (-1.0 / p) * ex.power(r2, -p / 2.0)


def bump(n: int, center: Sequence[float], radius: float) -> Expr:
    """Smooth compactly supported bump, equal to 1 at ``center``."""
    s = 1.0 - radial(n, center) / (radius * radius)
    return np.e * ex.bump_core(s)


def gaussian(n: int, center=None, width: float = 1.0) -> Expr:
    return ex.exp(-radial(n, center) / (width * width))


def random_polynomial(n: int, degree: int, rng: np.random.Generator, scale: float = 1.0) -> Expr:
    """Dense random polynomial with normal coefficients."""
    X = ex.variables(n)
    terms = []

    def rec(start: int, left: int, mono: list[int]):
        coeff = scale * rng.standard_normal()
        factor = ex.mul(*[X[i] for i in mono]) if mono else ex.ONE
        terms.append(coeff * factor)
        if left == 0:
            return
        for i in range(start, n):
            rec(i, left - 1, mono + [i])

    rec(0, degree, [])
    return ex.add(*terms)


def random_form_field(
    n: int, p: int, q: int, rng: np.random.Generator, degree: int = 2, envelope: Expr | None = None
) -> FormField:
    """Random homogeneous (p,q)-form field with polynomial coefficients."""
    from itertools import combinations

    terms = {}
    for I in combinations(range(n), p):
        for J in combinations(range(n), q):
            c = random_polynomial(n, degree, rng)
            if envelope is not None:
                c = c * envelope
            terms[(sum(1 << i for i in I), sum(1 << j for j in J))] = c
    return FormField(n, terms)
