"""Embedded submanifolds of R^n and their supercurrents.

A :class:`ChartManifold` carries a parametrisation and a quadrature mesh,
a :class:`LevelSetManifold` carries defining functions and the conormal
frame fields built from them.  :class:`Submanifold` combines the two; most
operations in this module take a ``Submanifold``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import expr as ex
from .algebra import (
    BidegreeError,
    PointSuperform,
    berezin_top,
    contract,
    one,
    one_form,
    pullback_linear,
    volume_constant,
)
from .expr import Expr
from .fields import FormField, _as_field
from .quadrature import axis_rule, tensor_rule

__all__ = [
    "FrameError",
    "ChartManifold",
    "LevelSetManifold",
    "Submanifold",
    "UnionManifold",
    "ConormalFrame",
    "SecondFundamentalData",
    "conormal_frame",
    "second_fundamental",
    "chart_second_fundamental",
    "restrict",
    "supercurrent_pair",
    "supercurrent_pair_ambient",
    "d_supercurrent_pair",
    "F_action_pair",
    "dsharp_supercurrent_pair",
    "F_sharp_action_pair",
    "frame_residuals",
    "normal_wedge",
    "F_action",
    "F_sharp_action",
    "covariant_d",
    "covariant_d_sharp",
    "canonical_extension",
    "curvature_form",
    "gauss_check",
    "TAU_FRAME",
    "TAU_GEOM",
]

TAU_FRAME = 1e-8
TAU_GEOM = 1e-6
PIVOT = 1e-8


class FrameError(ValueError):
    """Defining gradients are (numerically) dependent at a requested point."""


# ---------------------------------------------------------------------------
# chart representation


class ChartManifold:
    """Parametrised patch ``Phi: U -> R^n`` with a tensor quadrature mesh.

    Parameters
    ----------
    phi : sequence of Expr
        Components of the chart, expressions in the parameters ``u1..um``
        (variable indices ``0..m-1``).
    lower, upper : sequence of float
        Parameter box.
    periodic : sequence of bool, optional
        Periodic axes get the trapezoid rule.
    nodes : int or sequence of int
        Nodes per axis (default 32).
    """

    def __init__(self, phi: Sequence, lower, upper, periodic=None, nodes=32, panels=1, name="chart"):
        self.phi = [ex.as_expr(p) for p in phi]
        self.n = len(self.phi)
        self.lower = tuple(float(v) for v in lower)
        self.upper = tuple(float(v) for v in upper)
        self.m = len(self.lower)
        if self.m >= self.n or self.m < 1:
            raise ValueError("chart needs 1 <= m < n")
        self.periodic = tuple(bool(p) for p in (periodic or [False] * self.m))
        if isinstance(nodes, (int, np.integer)):
            nodes = [int(nodes)] * self.m
        self.nodes = tuple(nodes)
        self.panels = panels
        self.name = name
        self.dphi = [[c.diff(a) for a in range(self.m)] for c in self.phi]
        self._build_mesh()

    def _build_mesh(self):
        rules = [
            axis_rule(k, lo, hi, per, 1 if per else self.panels)
            for k, lo, hi, per in zip(self.nodes, self.lower, self.upper, self.periodic)
        ]
        self.params, self.param_weights = tensor_rule(rules)
        self.points = self.evaluate(self.params)
        self.jac = self.jacobian(self.params)
        gram = np.swapaxes(self.jac, -1, -2) @ self.jac
        det = np.linalg.det(gram)
        if np.any(det <= 0):
            raise FrameError(f"{self.name}: chart is singular at a mesh node")
        self.area_element = np.sqrt(det)
        self.dS = self.param_weights * self.area_element
        self.frame = tangent_frame_from_jacobian(self.jac)

    def evaluate(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return np.stack(ex.evaluate_many(self.phi, u), axis=-1)

    def jacobian(self, u) -> np.ndarray:
        """``DPhi`` with shape ``(..., n, m)``."""
        u = np.asarray(u, dtype=float)
        flat = ex.evaluate_many([d for row in self.dphi for d in row], u)
        return np.stack(flat, axis=-1).reshape(u.shape[:-1] + (self.n, self.m))

    def second_derivatives(self, u) -> np.ndarray:
        """``d^2 Phi / du_a du_b`` with shape ``(..., n, m, m)``."""
        u = np.asarray(u, dtype=float)
        flat = ex.evaluate_many(
            [d.diff(b) for row in self.dphi for d in row for b in range(self.m)], u
        )
        return np.stack(flat, axis=-1).reshape(u.shape[:-1] + (self.n, self.m, self.m))

    def area_element_at(self, u) -> np.ndarray:
        J = self.jacobian(u)
        return np.sqrt(np.linalg.det(np.swapaxes(J, -1, -2) @ J))

    def volume(self) -> float:
        return float(np.sum(self.dS))

    def with_nodes(self, nodes, panels=None) -> "ChartManifold":
        return ChartManifold(
            self.phi, self.lower, self.upper, self.periodic, nodes,
            self.panels if panels is None else panels, self.name,
        )


def tangent_frame_from_jacobian(J: np.ndarray) -> np.ndarray:
    """Orthonormal tangent rows ``(..., m, n)`` from ``DPhi`` via QR."""
    Q, R = np.linalg.qr(J)
    # fix signs so the frame follows the chart orientation
    s = np.sign(np.diagonal(R, axis1=-2, axis2=-1))
    s[s == 0] = 1.0
    return np.swapaxes(Q * s[..., None, :], -1, -2)


# ---------------------------------------------------------------------------
# level-set representation


@dataclass(frozen=True)
class ConormalFrame:
    """Orthonormal conormal forms (rows of ``normals``) and tangent vectors."""

    normals: np.ndarray
    tangents: np.ndarray

    def normal_forms(self) -> list[PointSuperform]:
        return [one_form(self.normals[..., j, :], "x") for j in range(self.normals.shape[-2])]


@dataclass(frozen=True)
class SecondFundamentalData:
    """``F[..., j, i, k]`` is the coefficient of ``dx_i ^ dxi_k`` in ``F_j``."""

    F: np.ndarray
    normals: np.ndarray
    tangents: np.ndarray
    H: np.ndarray

    @property
    def H_vector(self) -> np.ndarray:
        return np.einsum("...j,...jk->...k", self.H, self.normals)

    def forms(self) -> list[PointSuperform]:
        n = self.F.shape[-1]
        return [
            PointSuperform(n, {(1 << i, 1 << k): self.F[..., j, i, k] for i in range(n) for k in range(n)})
            for j in range(self.F.shape[-3])
        ]

    def tangential(self) -> np.ndarray:
        """``F_j`` restricted to the tangent frame, shape ``(..., p, m, m)``."""
        E = self.tangents
        return np.einsum("...ai,...jik,...bk->...jab", E, self.F, E)


class LevelSetManifold:
    """``M = {rho_1 = ... = rho_p = 0}`` with Gram–Schmidt conormal fields.

    ``frame="normalized"`` (default) applies Gram–Schmidt to the gradients
    everywhere, so the ``n_j`` are orthonormal off ``M`` too.
    ``frame="closed"`` instead uses ``n_j = d rho'_j`` with
    ``rho'_j = sum_k A_jk rho_k``, ``A`` being the Gram–Schmidt coefficients;
    these are orthonormal on ``M`` only, but closed, so ``F_j`` is symmetric.
    Both give the same tangential second fundamental form.
    """

    def __init__(self, rhos: Sequence, n: int, name: str = "level set", frame: str = "normalized"):
        if frame not in ("normalized", "closed"):
            raise ValueError("frame must be 'normalized' or 'closed'")
        self.rhos = [ex.as_expr(r) for r in rhos]
        self.n = n
        self.p = len(self.rhos)
        self.m = n - self.p
        if not 1 <= self.p < n:
            raise ValueError("need 1 <= p < n defining functions")
        self.name = name
        self.frame = frame
        grads = [[r.diff(k) for k in range(n)] for r in self.rhos]
        self._raw = []
        normals: list[list[Expr]] = []
        coefs: list[list[Expr]] = []
        for j, g in enumerate(grads):
            v = list(g)
            cj = [ex.ONE if k == j else ex.ZERO for k in range(self.p)]
            for q, cq in zip(normals, coefs):
                c = ex.dot(v, q)
                v = [vi - c * qi for vi, qi in zip(v, q)]
                cj = [a - c * b for a, b in zip(cj, cq)]
            self._raw.append(v)
            inv = 1.0 / ex.norm(v)
            normals.append([vi * inv for vi in v])
            coefs.append([a * inv for a in cj])
        if frame == "closed":
            self.adapted_rhos = [ex.add(*[c * r for c, r in zip(cj, self.rhos)]) for cj in coefs]
            normals = [[r.diff(k) for k in range(n)] for r in self.adapted_rhos]
        else:
            self.adapted_rhos = None
        self.normal_fields = normals
        self.F_fields = [[[nk.diff(i) for nk in nj] for i in range(n)] for nj in normals]

    def with_frame(self, frame: str) -> "LevelSetManifold":
        return LevelSetManifold(self.rhos, self.n, self.name, frame)

    def defining_values(self, x) -> np.ndarray:
        return np.stack(ex.evaluate_many(self.rhos, x), axis=-1)

    def normals(self, x) -> np.ndarray:
        """Conormal coefficients, shape ``(..., p, n)``."""
        x = np.asarray(x, dtype=float)
        raw = np.stack(
            ex.evaluate_many([c for v in self._raw for c in v], x), axis=-1
        ).reshape(x.shape[:-1] + (self.p, self.n))
        scale = np.stack(
            ex.evaluate_many([r.diff(k) for r in self.rhos for k in range(self.n)], x), axis=-1
        ).reshape(raw.shape)
        pivots = np.linalg.norm(raw, axis=-1) / np.maximum(np.linalg.norm(scale, axis=-1), 1e-300)
        if np.any(pivots < PIVOT):
            raise FrameError(f"{self.name}: defining gradients are dependent at a requested point")
        if self.frame == "closed":
            return np.stack(
                ex.evaluate_many([c for v in self.normal_fields for c in v], x), axis=-1
            ).reshape(raw.shape)
        return raw / np.linalg.norm(raw, axis=-1, keepdims=True)

    def F_matrices(self, x) -> np.ndarray:
        """``F[..., j, i, k] = d n_jk / dx_i`` of the extended frame."""
        x = np.asarray(x, dtype=float)
        flat = ex.evaluate_many(
            [e for Fj in self.F_fields for row in Fj for e in row], x
        )
        return np.stack(flat, axis=-1).reshape(x.shape[:-1] + (self.p, self.n, self.n))

    def tangents(self, x, normals=None) -> np.ndarray:
        N = self.normals(x) if normals is None else normals
        return complete_tangent_frame(N, self.m)


def complete_tangent_frame(N: np.ndarray, m: int) -> np.ndarray:
    """Orthonormal completion of the rows of ``N`` by projected coordinate
    axes, lowest index first, skipping axes with residual below the pivot."""
    n = N.shape[-1]
    batch = N.shape[:-2]
    Nf = N.reshape((-1,) + N.shape[-2:])
    T = np.zeros((Nf.shape[0], m, n))
    count = np.zeros(Nf.shape[0], dtype=int)
    rows = np.arange(Nf.shape[0])
    for k in range(n):
        v = np.zeros((Nf.shape[0], n))
        v[:, k] = 1.0
        v -= np.einsum("bjn,bj->bn", Nf, Nf[:, :, k])
        v -= np.einsum("bmn,bm->bn", T, T[:, :, k])
        # second pass for stability
        v -= np.einsum("bjn,bj->bn", Nf, np.einsum("bjn,bn->bj", Nf, v))
        v -= np.einsum("bmn,bm->bn", T, np.einsum("bmn,bn->bm", T, v))
        length = np.linalg.norm(v, axis=-1)
        take = (length > PIVOT) & (count < m)
        idx = rows[take]
        T[idx, count[idx]] = v[take] / length[take, None]
        count[take] += 1
    if np.any(count < m):  # pragma: no cover - cannot happen for orthonormal N
        raise FrameError("tangent completion failed")
    return T.reshape(batch + (m, n))


# ---------------------------------------------------------------------------
# combined representation


class Submanifold:
    """A chart (for quadrature) together with defining functions (for frames).

    Quantities at mesh nodes are cached on first use.
    """

    def __init__(self, chart: ChartManifold, levelset: LevelSetManifold | None = None, name=None):
        self.chart = chart
        self.levelset = levelset
        if levelset is not None and (levelset.n != chart.n or levelset.m != chart.m):
            raise ValueError("chart and level set dimensions disagree")
        self.name = name or chart.name
        self._sff: SecondFundamentalData | None = None

    @property
    def m(self) -> int:
        return self.chart.m

    @property
    def n(self) -> int:
        return self.chart.n

    @property
    def p(self) -> int:
        return self.n - self.m

    @property
    def points(self) -> np.ndarray:
        return self.chart.points

    @property
    def dS(self) -> np.ndarray:
        return self.chart.dS

    @property
    def frame(self) -> np.ndarray:
        return self.chart.frame

    def volume(self) -> float:
        return self.chart.volume()

    def _need_levelset(self):
        if self.levelset is None:
            raise ValueError(f"{self.name}: operation needs defining functions")
        return self.levelset

    def normals(self) -> np.ndarray:
        return self._need_levelset().normals(self.points)

    def sff(self) -> SecondFundamentalData:
        if self._sff is None:
            self._sff = second_fundamental(self._need_levelset(), self.points, tangents=self.frame)
        return self._sff

    def with_nodes(self, nodes, panels=None) -> "Submanifold":
        return Submanifold(self.chart.with_nodes(nodes, panels), self.levelset, self.name)

    def with_frame(self, frame: str) -> "Submanifold":
        return Submanifold(self.chart, self._need_levelset().with_frame(frame), self.name)

    def scaled(self, factor: float) -> "Submanifold":
        """The image of ``M`` under ``x -> factor * x``."""
        c = self.chart
        chart = ChartManifold([factor * f for f in c.phi], c.lower, c.upper, c.periodic, c.nodes, c.panels, c.name)
        ls = None
        if self.levelset is not None:
            X = ex.variables(self.n)
            sub = {k: X[k] / factor for k in range(self.n)}
            ls = LevelSetManifold([r.subs(sub) for r in self.levelset.rhos], self.n, self.levelset.name)
        return Submanifold(chart, ls, self.name)


class UnionManifold:
    """Finite union of submanifolds; supercurrents and masses add."""

    def __init__(self, parts: Sequence[Submanifold], name: str = "union"):
        if not parts:
            raise ValueError("empty union")
        self.parts = list(parts)
        self.name = name
        self.m = parts[0].m
        self.n = parts[0].n
        if any(p.m != self.m or p.n != self.n for p in parts):
            raise ValueError("union parts must share dimensions")

    def volume(self) -> float:
        return sum(p.volume() for p in self.parts)


# ---------------------------------------------------------------------------
# frames and second fundamental forms


def conormal_frame(M, x) -> ConormalFrame:
    ls = M.levelset if isinstance(M, Submanifold) else M
    N = ls.normals(x)
    return ConormalFrame(N, complete_tangent_frame(N, ls.m))


def second_fundamental(M, x, tangents=None) -> SecondFundamentalData:
    """``F_j = d n_j#`` of the extended frame and ``H_j = tr' F_j``."""
    ls = M.levelset if isinstance(M, Submanifold) else M
    x = np.asarray(x, dtype=float)
    N = ls.normals(x)
    if tangents is None:
        tangents = complete_tangent_frame(N, ls.m)
    else:
        tangents = np.asarray(tangents, dtype=float)
        leak = np.max(np.abs(np.einsum("...ai,...ji->...aj", tangents, N)), initial=0.0)
        if leak > 1e-6:
            raise FrameError(f"supplied tangent frame is not orthogonal to the normals ({leak:.2e})")
    F = ls.F_matrices(x)
    H = np.einsum("...ai,...jik,...ak->...j", tangents, F, tangents)
    return SecondFundamentalData(F, N, tangents, H)


def chart_second_fundamental(M: Submanifold) -> np.ndarray:
    """Tangential second fundamental forms from chart derivatives alone.

    Returns ``(N, p, m, m)`` in the mesh tangent frame, using
    ``F_j(Phi_a, Phi_b) = -<n_j, Phi_ab>``.
    """
    c = M.chart
    N = M.normals()
    D2 = c.second_derivatives(c.params)
    G = -np.einsum("qji,qiab->qjab", N, D2)
    # change basis from chart vectors to the orthonormal frame: Phi_a = sum_c A_ac e_c
    A = np.einsum("qia,qci->qac", c.jac, c.frame)
    Ainv = np.linalg.inv(A)
    return np.einsum("qca,qjab,qdb->qjcd", Ainv, G, Ainv)


# ---------------------------------------------------------------------------
# supercurrent pairings


def _forms_at(alpha, X) -> PointSuperform:
    if isinstance(alpha, FormField):
        return alpha.at(X)
    if isinstance(alpha, PointSuperform):
        return alpha
    if callable(alpha):
        return alpha(X)
    raise TypeError(f"cannot evaluate {type(alpha).__name__} on a mesh")


def restrict(M: Submanifold, alpha) -> PointSuperform:
    """Pull ``alpha`` back to the tangent superspace at each mesh node."""
    a = _forms_at(alpha, M.points)
    L = np.swapaxes(M.frame, -1, -2)
    return pullback_linear(L, a)


def _check_bidegree(alpha, want: tuple[int, int]):
    a = alpha if isinstance(alpha, PointSuperform) else None
    if a is not None and not a.is_zero():
        if any(k.bidegree != want for k in a.terms):
            raise BidegreeError(f"test form must have bidegree {want}, got {sorted(a.bidegrees())}")


def supercurrent_pair(M, alpha) -> float:
    """``<[M]_s, alpha>`` for an (m,m)-form, by restriction to the tangent frame."""
    if isinstance(M, UnionManifold):
        return sum(supercurrent_pair(part, alpha) for part in M.parts)
    _check_bidegree(alpha, (M.m, M.m))
    r = restrict(M, alpha)
    return float(np.dot(M.dS, np.broadcast_to(berezin_top(r), M.dS.shape)))


def normal_wedge(normals: np.ndarray) -> PointSuperform:
    """``c_p n ^ n#`` with ``n = n_1 ^ ... ^ n_p``; rows of ``normals``."""
    p = normals.shape[-2]
    out = one(normals.shape[-1])
    for j in range(p):
        out = out ^ one_form(normals[..., j, :], "x")
    for j in range(p):
        out = out ^ one_form(normals[..., j, :], "xi")
    return out * float(volume_constant(p))


def supercurrent_pair_ambient(M: Submanifold, alpha) -> float:
    """``<[M]_s, alpha>`` as ``int_M c_p n ^ n# ^ alpha dS`` in the ambient space."""
    a = _forms_at(alpha, M.points)
    T = normal_wedge(M.normals())
    return float(np.dot(M.dS, np.broadcast_to(berezin_top(T ^ a), M.dS.shape)))


def d_supercurrent_pair(M: Submanifold, psi) -> float:
    """``<d[M]_s, psi> = -<[M]_s, d psi>`` for an (m-1, m)-form."""
    psi = _as_field(psi)
    _check_bidegree(psi, (M.m - 1, M.m))
    return -supercurrent_pair(M, psi.d())


def dsharp_supercurrent_pair(M: Submanifold, psi) -> float:
    """``<d#[M]_s, psi> = -<[M]_s, d# psi>`` for an (m, m-1)-form."""
    psi = _as_field(psi)
    _check_bidegree(psi, (M.m, M.m - 1))
    return -supercurrent_pair(M, psi.dsharp())


def F_action(F_forms: Sequence[PointSuperform], normals: np.ndarray, a: PointSuperform) -> PointSuperform:
    """``sum_j F_j ^ (n_j# ⌟ a)``."""
    out = PointSuperform(a.dim)
    for j, Fj in enumerate(F_forms):
        inner = contract(one_form(normals[..., j, :], "xi"), a)
        if inner:
            out = out + (Fj ^ inner)
    return out


def F_sharp_action(F_forms: Sequence[PointSuperform], normals: np.ndarray, a: PointSuperform) -> PointSuperform:
    """``sum_j F_j ^ (n_j ⌟ a)``."""
    out = PointSuperform(a.dim)
    for j, Fj in enumerate(F_forms):
        inner = contract(one_form(normals[..., j, :], "x"), a)
        if inner:
            out = out + (Fj ^ inner)
    return out


def F_action_pair(M: Submanifold, psi) -> float:
    """``<F[M]_s, psi>``, integrating ``F(c_p n ^ n#) ^ psi`` over ``M``."""
    data = M.sff()
    T = normal_wedge(data.normals)
    FT = F_action(data.forms(), data.normals, T)
    a = _forms_at(psi, M.points)
    return float(np.dot(M.dS, np.broadcast_to(berezin_top(FT ^ a), M.dS.shape)))


def F_sharp_action_pair(M: Submanifold, psi) -> float:
    """``<F#[M]_s, psi>``."""
    data = M.sff()
    T = normal_wedge(data.normals)
    FT = F_sharp_action(data.forms(), data.normals, T)
    a = _forms_at(psi, M.points)
    return float(np.dot(M.dS, np.broadcast_to(berezin_top(FT ^ a), M.dS.shape)))


def frame_residuals(M: Submanifold, frame: str = "closed") -> tuple[float, float]:
    """Largest tangential component of ``n_j ⌟ F_j`` and ``n_j# ⌟ F_j`` on the mesh.

    The identity needs ``n_j = d rho_j`` with ``|n_j| = 1`` on ``M``, which
    is the ``"closed"`` frame; with the normalized extension only the
    ``n_j#`` half is guaranteed.
    """
    data = M.with_frame(frame).sff()
    L = np.swapaxes(data.tangents, -1, -2)
    worst = [0.0, 0.0]
    for j, Fj in enumerate(data.forms()):
        for s, kind in enumerate(("x", "xi")):
            r = pullback_linear(L, contract(one_form(data.normals[..., j, :], kind), Fj))
            worst[s] = max(worst[s], r.max_abs())
    return worst[0], worst[1]


# ---------------------------------------------------------------------------
# covariant operators and curvature (symbolic, near M)


def _normal_field_forms(ls: LevelSetManifold):
    nx = [FormField(ls.n, {(1 << k, 0): c for k, c in enumerate(nj)}) for nj in ls.normal_fields]
    nxi = [FormField(ls.n, {(0, 1 << k): c for k, c in enumerate(nj)}) for nj in ls.normal_fields]
    F = [
        FormField(ls.n, {(1 << i, 1 << k): ls.F_fields[j][i][k] for i in range(ls.n) for k in range(ls.n)})
        for j in range(ls.p)
    ]
    return nx, nxi, F


def _field_F_sharp(ls: LevelSetManifold, a: FormField) -> FormField:
    nx, _, F = _normal_field_forms(ls)
    out = FormField(a.dim)
    for j in range(ls.p):
        inner = contract(nx[j], a)
        if inner:
            out = out + (F[j] ^ FormField(a.dim, inner.terms))
    return FormField(a.dim, out.terms)


def _field_F(ls: LevelSetManifold, a: FormField) -> FormField:
    _, nxi, F = _normal_field_forms(ls)
    out = FormField(a.dim)
    for j in range(ls.p):
        inner = contract(nxi[j], a)
        if inner:
            out = out + (F[j] ^ FormField(a.dim, inner.terms))
    return FormField(a.dim, out.terms)


def _levelset(M) -> LevelSetManifold:
    if isinstance(M, Submanifold):
        return M._need_levelset()
    return M


def covariant_d_sharp(M, a, x=None):
    """``D# a = d# a + F# a`` as a field, or evaluated at ``x``."""
    ls = _levelset(M)
    a = _as_field(a)
    out = FormField(a.dim, (a.dsharp() + _field_F_sharp(ls, a)).terms)
    return out if x is None else out.at(x)


def covariant_d(M, a, x=None):
    """``D a = d a - F a``."""
    ls = _levelset(M)
    a = _as_field(a)
    out = FormField(a.dim, (a.d() - _field_F(ls, a)).terms)
    return out if x is None else out.at(x)


def _linear_substitute(a: FormField, gx: list[FormField], gxi: list[FormField]) -> FormField:
    n = a.dim
    cache: dict[tuple[int, int], FormField] = {(0, 0): FormField(n, {(0, 0): 1.0})}

    def image(xm: int, jm: int) -> FormField:
        hit = cache.get((xm, jm))
        if hit is not None:
            return hit
        if jm:
            top = jm.bit_length() - 1
            img = image(xm, jm ^ (1 << top)) ^ gxi[top]
        else:
            top = xm.bit_length() - 1
            img = image(xm ^ (1 << top), 0) ^ gx[top]
        img = FormField(n, img.terms)
        cache[(xm, jm)] = img
        return img

    out = FormField(n)
    for k, c in a.terms.items():
        img = image(k.xmask, k.ximask)
        if img:
            out = out + FormField(n, {kk: cc * c for kk, cc in img.terms.items()})
    return FormField(n, out.terms)


def canonical_extension(M, a) -> FormField:
    """Remove every ``n_j`` and ``n_j#`` component of ``a``.

    Implemented as substitution of ``dx_i`` and ``dxi_i`` by their images
    under the tangential projector ``P = I - sum_j n_j n_j^T``; the result
    satisfies ``n_j ⌟ a = n_j# ⌟ a = 0`` wherever the frame is defined.
    """
    ls = _levelset(M)
    a = _as_field(a)
    n = ls.n
    N = ls.normal_fields
    P = [
        [(1.0 if i == k else 0.0) - ex.add(*[N[j][i] * N[j][k] for j in range(ls.p)]) for k in range(n)]
        for i in range(n)
    ]
    gx = [FormField(n, {(1 << k, 0): P[i][k] for k in range(n)}) for i in range(n)]
    gxi = [FormField(n, {(0, 1 << k): P[i][k] for k in range(n)}) for i in range(n)]
    return _linear_substitute(a, gx, gxi)


def curvature_form(M, x) -> PointSuperform:
    """``R = 1/2 sum_j F_j ^ F_j`` at ``x``."""
    data = second_fundamental(_levelset(M), x)
    out = PointSuperform(data.F.shape[-1])
    for Fj in data.forms():
        out = out + (Fj ^ Fj) * 0.5
    return out


def gauss_check(M, a, x, frame: str = "closed") -> float:
    """``max |(D#)^2 a - a ⌟ R|`` at ``x`` for the canonical extension of a (1,0)-form.

    The identity needs a conormal frame made of differentials, hence the
    closed frame by default.
    """
    ls = _levelset(M).with_frame(frame)
    a = _as_field(a)
    if any(k.bidegree != (1, 0) for k in a.terms):
        raise BidegreeError("Gauss check needs a (1,0)-form")
    ac = canonical_extension(ls, a)
    lhs = covariant_d_sharp(ls, covariant_d_sharp(ls, ac), x)
    R = curvature_form(ls, x)
    rhs = contract(ac.at(x), R)
    return (lhs - rhs).max_abs()
