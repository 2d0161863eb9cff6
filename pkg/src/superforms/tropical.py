"""Quasitropical polynomials ``max_i (a^i . x + b^i)``: cells, facets, balancing, Monge–Ampère."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull
from scipy.spatial import QhullError

from . import expr as ex
from .algebra import berezin_top, factorial, is_positive_11, wedge_power
from .expr import Expr
from .fields import dd_sharp
from .quadrature import Box, box_rule

__all__ = [
    "EPS_LP",
    "QuasitropicalPolynomial",
    "Facet",
    "Vertex",
    "CellComplex",
    "MultiplicityVector",
    "DegenerateFacetError",
    "reduce",
    "cell_complex",
    "multiplicities",
    "balancing_check",
    "ma_measure_pl",
    "ma_measure_smooth",
    "SmoothMAResult",
    "convexity_equivalence",
    "random_quasitropical",
    "pieces_from_expr",
    "log_sum_exp",
]

EPS_LP = 1e-9
THICKNESS = 1e-8
CLUSTER = 1e-8


class DegenerateFacetError(ValueError):
    pass


@dataclass(frozen=True)
class QuasitropicalPolynomial:
    """``phi(x) = max_i a[i] . x + b[i]``."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if a.shape[0] == 0:
            raise ValueError("empty piece list")
        if a.shape[0] != b.shape[0]:
            raise ValueError("one constant per gradient")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.a.shape[1]

    def __len__(self) -> int:
        return self.a.shape[0]

    def pieces(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.a.T + self.b

    def __call__(self, x) -> np.ndarray:
        return np.max(self.pieces(x), axis=-1)

    def expr(self) -> Expr:
        X = ex.variables(self.n)
        return ex.maximum(*[ex.add(float(bi), *[float(ai[k]) * X[k] for k in range(self.n)]) for ai, bi in zip(self.a, self.b)])

    @classmethod
    def from_json(cls, spec: dict) -> "QuasitropicalPolynomial":
        if set(spec) != {"pieces"}:
            raise ValueError("polynomial spec must be {'pieces': [...]}")
        a, b = [], []
        for p in spec["pieces"]:
            if set(p) != {"a", "b"}:
                raise ValueError("each piece needs exactly 'a' and 'b'")
            a.append(p["a"])
            b.append(p["b"])
        return cls(np.array(a, dtype=float), np.array(b, dtype=float))

    def to_json(self) -> dict:
        return {"pieces": [{"a": ai.tolist(), "b": float(bi)} for ai, bi in zip(self.a, self.b)]}


def pieces_from_expr(e: Expr, n: int) -> QuasitropicalPolynomial:
    """Affine pieces of a ``max(...)`` expression (or a single affine expression)."""
    args = e.args if e.op == "max" else (e,)
    rng = np.random.default_rng(0)
    probe = rng.standard_normal((8, n))
    a, b = [], []
    for arg in args:
        grad = [arg.diff(k) for k in range(n)]
        if any(not g.is_const for g in grad):
            raise ValueError(f"piece {arg} is not affine")
        ak = np.array([g.data for g in grad])
        bk = float(ex.evaluate(arg, np.zeros(n)))
        if np.max(np.abs(ex.evaluate(arg, probe) - (probe @ ak + bk))) > 1e-12 * max(1.0, abs(bk)):
            raise ValueError(f"piece {arg} is not affine")
        a.append(ak)
        b.append(bk)
    return QuasitropicalPolynomial(np.array(a), np.array(b))


def log_sum_exp(phi: QuasitropicalPolynomial, t: float) -> Expr:
    """``(1/t) log sum_i exp(t l_i)``, a convex smoothing of ``phi``."""
    X = ex.variables(phi.n)
    ls = [ex.add(float(bi), *[float(ai[k]) * X[k] for k in range(phi.n)]) for ai, bi in zip(phi.a, phi.b)]
    return ex.log(ex.add(*[ex.exp(t * l) for l in ls])) / t


def random_quasitropical(n: int, pieces: int, rng: np.random.Generator, integer: bool = False) -> QuasitropicalPolynomial:
    if integer:
        a = rng.integers(-3, 4, size=(pieces, n)).astype(float)
    else:
        a = rng.standard_normal((pieces, n))
    b = rng.standard_normal(pieces)
    return QuasitropicalPolynomial(a, b)


# ---------------------------------------------------------------------------
# LP helpers (HiGHS through scipy)


def _interior_slack(A: np.ndarray, b: np.ndarray, i: int, equal: Sequence[int] = ()):
    """Maximise ``s <= 1`` with ``l_j + s <= l_i`` (j not in ``equal``) and ``l_k = l_i`` (k in ``equal``).

    Returns ``(s, x)``; ``s`` is ``-inf`` when infeasible.
    """
    k_, n = A.shape
    rows, rhs = [], []
    eq_rows, eq_rhs = [], []
    for j in range(k_):
        if j == i:
            continue
        if j in equal:
            eq_rows.append(np.append(A[j] - A[i], 0.0))
            eq_rhs.append(b[i] - b[j])
        else:
            rows.append(np.append(A[j] - A[i], 1.0))
            rhs.append(b[i] - b[j])
    c = np.zeros(n + 1)
    c[-1] = -1.0
    bounds = [(None, None)] * n + [(None, 1.0)]
    res = linprog(
        c,
        A_ub=np.array(rows) if rows else None,
        b_ub=np.array(rhs) if rows else None,
        A_eq=np.array(eq_rows) if eq_rows else None,
        b_eq=np.array(eq_rhs) if eq_rows else None,
        bounds=bounds,
        method="highs",
    )
    if res.status == 2:
        return -np.inf, None
    if res.status != 0:
        raise RuntimeError(f"LP failed: {res.message}")
    if not rows:
        return 1.0, res.x[:n]
    return float(res.x[-1]), res.x[:n]


def reduce(phi: QuasitropicalPolynomial, eps: float = EPS_LP) -> QuasitropicalPolynomial:
    """Merge equal gradients (keeping the largest constant) and drop pieces whose cell has empty interior."""
    order = np.lexsort(phi.a.T[::-1])
    groups: dict[tuple, float] = {}
    first: dict[tuple, int] = {}
    for idx in order:
        key = tuple(np.round(phi.a[idx], 12))
        if key not in groups or phi.b[idx] > groups[key]:
            groups[key] = phi.b[idx]
        first.setdefault(key, idx)
    keys = sorted(groups, key=lambda k: first[k])
    A = np.array([phi.a[first[k]] for k in keys])
    B = np.array([groups[k] for k in keys])
    keep = []
    for i in range(len(keys)):
        s, _ = _interior_slack(A, B, i)
        if s > eps:
            keep.append(i)
    return QuasitropicalPolynomial(A[keep], B[keep])


# ---------------------------------------------------------------------------
# complexes


@dataclass(frozen=True)
class Facet:
    i: int
    k: int
    point: np.ndarray
    normal: np.ndarray
    thickness: float


@dataclass(frozen=True)
class Vertex:
    point: np.ndarray
    active: tuple[int, ...]
    # (facet index, outward unit direction) pairs, n = 2 only
    edges: tuple = ()


@dataclass
class CellComplex:
    phi: QuasitropicalPolynomial
    cells: list[int]
    facets: list[Facet]
    vertices: list[Vertex] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "cells": self.cells,
            "facets": [
                {"cells": [f.i, f.k], "point": (f.point + 0.0).tolist(), "normal": (f.normal + 0.0).tolist()} for f in self.facets
            ],
            "vertices": [
                {
                    "point": (v.point + 0.0).tolist(),
                    "active": list(v.active),
                    "edges": [{"facet": e, "direction": (d + 0.0).tolist()} for e, d in v.edges],
                }
                for v in self.vertices
            ],
        }


def _find_vertices(phi: QuasitropicalPolynomial, scale: float) -> list[tuple[np.ndarray, tuple[int, ...]]]:
    A, B = phi.a, phi.b
    k_, n = A.shape
    found: list[np.ndarray] = []
    for combo in combinations(range(k_), n + 1):
        i0 = combo[0]
        M = np.array([A[j] - A[i0] for j in combo[1:]])
        if abs(np.linalg.det(M)) < 1e-12:
            continue
        rhs = np.array([B[i0] - B[j] for j in combo[1:]])
        x = np.linalg.solve(M, rhs)
        vals = A @ x + B
        if vals[i0] < vals.max() - 1e-9 * max(1.0, np.abs(vals).max()):
            continue
        if not any(np.max(np.abs(x - y)) <= CLUSTER * scale for y in found):
            found.append(x)
    out = []
    for x in found:
        vals = A @ x + B
        tol = 1e-9 * max(1.0, np.abs(vals).max())
        active = tuple(int(j) for j in np.nonzero(vals >= vals.max() - tol)[0])
        out.append((x, active))
    return out


def cell_complex(phi: QuasitropicalPolynomial) -> CellComplex:
    """Cells, facets (pairwise LP), and vertices with incident edges (n = 2)."""
    n = phi.n
    if n > 3:
        raise ValueError("polyhedral enumeration implemented for n <= 3")
    A, B = phi.a, phi.b
    cells = list(range(len(phi)))
    facets: list[Facet] = []
    for i, k in combinations(cells, 2):
        s, x = _interior_slack(A, B, i, equal=(k,))
        if s == -np.inf:
            continue
        if len(phi) > 2 and s <= EPS_LP:
            continue
        if len(phi) > 2 and s < THICKNESS:
            raise DegenerateFacetError(f"facet ({i},{k}) thinner than {THICKNESS}")
        v = A[k] - A[i]
        facets.append(Facet(i, k, x, v / np.linalg.norm(v), s))
    scale = 1.0
    raw = _find_vertices(phi, scale) if n >= 1 else []
    if raw:
        scale = max(1.0, max(np.abs(x).max() for x, _ in raw))
    vertices = []
    for x, active in raw:
        edges = ()
        if n == 2:
            edges = tuple(_incident_edges(phi, x, active, facets))
        vertices.append(Vertex(x, active, edges))
    return CellComplex(phi, cells, facets, vertices)


def _incident_edges(phi, x, active, facets):
    A = phi.a
    out = []
    for fi, f in enumerate(facets):
        if f.i not in active or f.k not in active:
            continue
        g = A[f.k] - A[f.i]
        d = np.array([-g[1], g[0]]) / np.linalg.norm(g)
        for sgn in (1.0, -1.0):
            dd = sgn * d
            others = [j for j in active if j not in (f.i, f.k)]
            tol = 1e-9 * max(1.0, np.abs(A).max())
            if all((A[f.i] - A[j]) @ dd > tol for j in others):
                out.append((fi, dd))
    return out


# ---------------------------------------------------------------------------
# multiplicities, balancing, MA


@dataclass(frozen=True)
class MultiplicityVector:
    facet: int
    v: np.ndarray
    weight: float
    normality_residual: float
    positivity: float


def multiplicities(cx: CellComplex) -> list[MultiplicityVector]:
    """Gradient jumps ``v = a^k - a^i`` oriented along the facet normal."""
    out = []
    for fi, f in enumerate(cx.facets):
        v = cx.phi.a[f.k] - cx.phi.a[f.i]
        w = float(np.linalg.norm(v))
        resid = float(np.linalg.norm(v - (v @ f.normal) * f.normal))
        pos = float(v @ f.normal)
        if pos <= 0:
            raise ValueError(f"facet {fi}: multiplicity points against the normal")
        out.append(MultiplicityVector(fi, v, w, resid, pos))
    return out


def balancing_check(cx: CellComplex, mults: Sequence[MultiplicityVector] | None = None) -> float:
    """Largest ``|sum_l |v_l| d_l|`` over vertices, ``d_l`` the outward edge directions."""
    if cx.phi.n != 2:
        raise ValueError("balancing is checked for n = 2")
    mults = multiplicities(cx) if mults is None else mults
    weight = {m.facet: m.weight for m in mults}
    worst = 0.0
    for v in cx.vertices:
        if len(v.edges) < 2:
            raise ValueError("unresolved incidences at a vertex")
        s = sum(weight[fi] * d for fi, d in v.edges)
        worst = max(worst, float(np.linalg.norm(s)))
    return worst


def ma_measure_pl(phi: QuasitropicalPolynomial) -> list[tuple[np.ndarray, float]]:
    """Atoms ``(vertex, vol conv{a^i active})`` of the Monge–Ampère measure."""
    cx = cell_complex(phi)
    atoms = []
    for v in cx.vertices:
        G = phi.a[list(v.active)]
        if phi.n == 1:
            mass = float(G.max() - G.min())
        else:
            try:
                mass = float(ConvexHull(G).volume)
            except QhullError:
                mass = 0.0
        atoms.append((v.point, mass))
    return atoms


@dataclass
class SmoothMAResult:
    total: float
    det_total: float
    max_pointwise_error: float


def ma_measure_smooth(phi, region: Box, nodes: int = 32, panels: int = 1) -> SmoothMAResult:
    """Total mass of ``(dd#phi)^n/n!`` over a box, with the ``det Hess`` cross-check."""
    phi = ex.as_expr(phi)
    n = region.dim
    pts, w = box_rule(region, nodes, panels)
    H = dd_sharp(phi, n).at(pts)
    dens = np.asarray(berezin_top(wedge_power(H, n))) / factorial(n)
    det = np.linalg.det(phi.hessian(pts, n))
    err = float(np.max(np.abs(dens - det) / np.maximum(1.0, np.abs(det))))
    return SmoothMAResult(float(w @ dens), float(w @ det), err)


def convexity_equivalence(phi, region: Box, samples: int = 256, seed: int = 0) -> bool:
    """Convexity verdict from ``dd#phi >= 0``; must agree with Hessian PSD at every sample."""
    phi = ex.as_expr(phi)
    n = region.dim
    rng = np.random.default_rng(seed)
    lo, hi = np.asarray(region.lower), np.asarray(region.upper)
    x = lo + (hi - lo) * rng.random((samples, n))
    by_form = bool(np.all(is_positive_11(dd_sharp(phi, n).at(x))))
    Hs = phi.hessian(x, n)
    by_hess = bool(np.all(np.linalg.eigvalsh(Hs)[:, 0] >= -1e-9))
    if by_form != by_hess:
        raise RuntimeError("superform and Hessian convexity tests disagree")
    return by_form
