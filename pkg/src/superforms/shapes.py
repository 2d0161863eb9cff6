"""Standard test manifolds and a JSON loader for manifold specs."""

from __future__ import annotations

import math
from typing import Sequence

from . import expr as ex
from .expr import parse_expression
from .manifold import ChartManifold, LevelSetManifold, Submanifold, UnionManifold

__all__ = [
    "sphere",
    "circle",
    "circle3",
    "torus",
    "cylinder",
    "catenoid",
    "helicoid",
    "plane",
    "disk",
    "crossing_planes",
    "graph",
    "chart",
    "from_spec",
    "ManifoldSpecError",
]


class ManifoldSpecError(ValueError):
    pass


def _uv(m: int):
    return ex.variables(m)


def sphere(radius: float = 1.0, center=(0.0, 0.0, 0.0), nodes=32) -> Submanifold:
    """Round 2-sphere in R^3 with the polar chart ``(theta, phi)``."""
    t, f = _uv(2)
    c = [float(v) for v in center]
    phi = [
        c[0] + radius * ex.sin(t) * ex.cos(f),
        c[1] + radius * ex.sin(t) * ex.sin(f),
        c[2] + radius * ex.cos(t),
    ]
    ch = ChartManifold(phi, (0.0, 0.0), (math.pi, 2 * math.pi), (False, True), nodes, name="sphere")
    X = ex.variables(3)
    rho = (ex.add(*[ex.power(X[i] - c[i], 2.0) for i in range(3)]) - radius**2) / (2 * radius)
    return Submanifold(ch, LevelSetManifold([rho], 3, "sphere"), "sphere")


def circle(radius: float = 1.0, nodes=64) -> Submanifold:
    """Circle of the given radius in R^2."""
    (t,) = _uv(1)
    ch = ChartManifold([radius * ex.cos(t), radius * ex.sin(t)], (0.0,), (2 * math.pi,), (True,), nodes, name="circle")
    X = ex.variables(2)
    rho = (X[0] ** 2 + X[1] ** 2 - radius**2) / (2 * radius)
    return Submanifold(ch, LevelSetManifold([rho], 2, "circle"), "circle")


def circle3(radius: float = 1.0, nodes=64) -> Submanifold:
    """Circle of the given radius in the plane ``x3 = 0`` of R^3."""
    (t,) = _uv(1)
    ch = ChartManifold(
        [radius * ex.cos(t), radius * ex.sin(t), ex.const(0.0)], (0.0,), (2 * math.pi,), (True,), nodes,
        name="circle3",
    )
    X = ex.variables(3)
    rho1 = (X[0] ** 2 + X[1] ** 2 - radius**2) / (2 * radius)
    return Submanifold(ch, LevelSetManifold([rho1, X[2]], 3, "circle3"), "circle3")


def torus(R: float = 2.0, r: float = 0.5, nodes=32) -> Submanifold:
    """Standard torus of revolution with tube radius ``r`` around a circle of radius ``R``."""
    a, b = _uv(2)
    ring = R + r * ex.cos(b)
    ch = ChartManifold(
        [ring * ex.cos(a), ring * ex.sin(a), r * ex.sin(b)],
        (0.0, 0.0), (2 * math.pi, 2 * math.pi), (True, True), nodes, name="torus",
    )
    X = ex.variables(3)
    s = ex.sqrt(X[0] ** 2 + X[1] ** 2) - R
    rho = (s * s + X[2] ** 2 - r * r) / (2 * r)
    return Submanifold(ch, LevelSetManifold([rho], 3, "torus"), "torus")


def cylinder(radius: float = 1.0, height: float = 2.0, nodes=32) -> Submanifold:
    """``x1^2 + x2^2 = radius^2``, ``|x3| <= height / 2``."""
    t, z = _uv(2)
    ch = ChartManifold(
        [radius * ex.cos(t), radius * ex.sin(t), z],
        (0.0, -height / 2), (2 * math.pi, height / 2), (True, False), nodes, name="cylinder",
    )
    X = ex.variables(3)
    rho = (X[0] ** 2 + X[1] ** 2 - radius**2) / (2 * radius)
    return Submanifold(ch, LevelSetManifold([rho], 3, "cylinder"), "cylinder")


def catenoid(half_height: float = 1.0, nodes=32) -> Submanifold:
    """``sqrt(x1^2 + x2^2) = cosh(x3)`` for ``|x3| <= half_height``."""
    s, t = _uv(2)
    ch = ChartManifold(
        [ex.cosh(s) * ex.cos(t), ex.cosh(s) * ex.sin(t), s],
        (-half_height, 0.0), (half_height, 2 * math.pi), (False, True), nodes, name="catenoid",
    )
    X = ex.variables(3)
    rho = ex.sqrt(X[0] ** 2 + X[1] ** 2) - ex.cosh(X[2])
    return Submanifold(ch, LevelSetManifold([rho], 3, "catenoid"), "catenoid")


def helicoid(half_width: float = 1.0, half_turn: float = 1.0, nodes=32) -> Submanifold:
    """``(s cos t, s sin t, t)``; defined by ``x2 cos x3 - x1 sin x3 = 0``."""
    s, t = _uv(2)
    ch = ChartManifold(
        [s * ex.cos(t), s * ex.sin(t), t],
        (-half_width, -half_turn), (half_width, half_turn), (False, False), nodes, name="helicoid",
    )
    X = ex.variables(3)
    rho = X[1] * ex.cos(X[2]) - X[0] * ex.sin(X[2])
    return Submanifold(ch, LevelSetManifold([rho], 3, "helicoid"), "helicoid")


def plane(
    normal: Sequence[float] = (0.0, 0.0, 1.0),
    point: Sequence[float] = (0.0, 0.0, 0.0),
    half_width: float = 1.0,
    nodes=32,
) -> Submanifold:
    """Square patch ``[-w, w]^2`` of a plane in R^3 centred at ``point``."""
    import numpy as np

    nv = np.asarray(normal, dtype=float)
    nv = nv / np.linalg.norm(nv)
    # orthonormal basis of the plane, completed from the axes
    basis = []
    for k in range(3):
        v = np.eye(3)[k] - nv[k] * nv
        for b in basis:
            v = v - (v @ b) * b
        if np.linalg.norm(v) > 1e-8:
            basis.append(v / np.linalg.norm(v))
        if len(basis) == 2:
            break
    u, w = _uv(2)
    x0 = np.asarray(point, dtype=float)
    phi = [x0[i] + basis[0][i] * u + basis[1][i] * w for i in range(3)]
    ch = ChartManifold(phi, (-half_width,) * 2, (half_width,) * 2, (False, False), nodes, name="plane")
    X = ex.variables(3)
    rho = ex.add(*[float(nv[i]) * (X[i] - float(x0[i])) for i in range(3)])
    return Submanifold(ch, LevelSetManifold([rho], 3, "plane"), "plane")


def disk(
    normal: Sequence[float] = (0.0, 0.0, 1.0),
    center: Sequence[float] = (0.0, 0.0, 0.0),
    radius: float = 1.0,
    nodes=32,
) -> Submanifold:
    """Flat disk in R^3 with the polar chart ``(s, angle)``, ``0 <= s <= radius``."""
    import numpy as np

    nv = np.asarray(normal, dtype=float)
    nv = nv / np.linalg.norm(nv)
    basis = []
    for k in range(3):
        v = np.eye(3)[k] - nv[k] * nv
        for b in basis:
            v = v - (v @ b) * b
        if np.linalg.norm(v) > 1e-8:
            basis.append(v / np.linalg.norm(v))
        if len(basis) == 2:
            break
    s, t = _uv(2)
    x0 = np.asarray(center, dtype=float)
    phi = [x0[i] + s * (basis[0][i] * ex.cos(t) + basis[1][i] * ex.sin(t)) for i in range(3)]
    ch = ChartManifold(phi, (0.0, 0.0), (radius, 2 * math.pi), (False, True), nodes, name="disk")
    X = ex.variables(3)
    rho = ex.add(*[float(nv[i]) * (X[i] - float(x0[i])) for i in range(3)])
    return Submanifold(ch, LevelSetManifold([rho], 3, "disk"), "disk")


def crossing_planes(half_width: float = 1.0, nodes=32) -> UnionManifold:
    """The planes ``x3 = 0`` and ``x1 = 0`` through the origin."""
    return UnionManifold(
        [plane((0, 0, 1), half_width=half_width, nodes=nodes), plane((1, 0, 0), half_width=half_width, nodes=nodes)],
        "crossing planes",
    )


def graph(f, lower=(-1.0, -1.0), upper=(1.0, 1.0), nodes=32) -> Submanifold:
    """Graph ``x3 = f(x1, x2)`` over a box."""
    f = ex.as_expr(f)
    u, w = _uv(2)
    ch = ChartManifold([u, w, f], lower, upper, (False, False), nodes, name="graph")
    X = ex.variables(3)
    rho = X[2] - f
    return Submanifold(ch, LevelSetManifold([rho], 3, "graph"), "graph")


def chart(phi: Sequence, lower, upper, periodic=None, nodes=32, rhos=None, name="chart") -> Submanifold:
    ch = ChartManifold(phi, lower, upper, periodic, nodes, name=name)
    ls = LevelSetManifold(rhos, ch.n, name) if rhos else None
    return Submanifold(ch, ls, name)


# ---------------------------------------------------------------------------
# JSON specs


_KINDS = {
    "sphere": ({"radius", "center", "nodes"}, sphere),
    "circle": ({"radius", "nodes"}, circle),
    "circle3": ({"radius", "nodes"}, circle3),
    "torus": ({"R", "r", "nodes"}, torus),
    "cylinder": ({"radius", "height", "nodes"}, cylinder),
    "catenoid": ({"half_height", "nodes"}, catenoid),
    "helicoid": ({"half_width", "half_turn", "nodes"}, helicoid),
    "plane": ({"normal", "point", "half_width", "nodes"}, plane),
    "disk": ({"normal", "center", "radius", "nodes"}, disk),
    "crossing_planes": ({"half_width", "nodes"}, crossing_planes),
}


def from_spec(spec: dict):
    """Build a manifold from ``{"kind": ..., ...}``.

    Besides the named shapes, ``{"kind": "graph", "f": "..."}`` takes an
    expression in ``x1, x2`` and ``{"kind": "chart", "phi": [...],
    "domain": {"lower": [...], "upper": [...], "periodic": [...]}}`` takes
    expressions in ``u1..um``; both accept an optional ``"rho"`` list of
    defining expressions in ``x1..xn``.
    """
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ManifoldSpecError("manifold spec must be an object with a 'kind'")
    kind = spec["kind"]
    args = {k: v for k, v in spec.items() if k != "kind"}
    if kind in _KINDS:
        allowed, build = _KINDS[kind]
        extra = set(args) - allowed
        if extra:
            raise ManifoldSpecError(f"unknown fields for {kind}: {sorted(extra)}")
        return build(**args)
    if kind == "graph":
        extra = set(args) - {"f", "lower", "upper", "nodes"}
        if extra or "f" not in args:
            raise ManifoldSpecError("graph spec needs 'f' and accepts lower/upper/nodes only")
        f = parse_expression(args["f"], ["x1", "x2"])
        return graph(f, args.get("lower", (-1.0, -1.0)), args.get("upper", (1.0, 1.0)), args.get("nodes", 32))
    if kind == "chart":
        extra = set(args) - {"phi", "domain", "nodes", "rho", "name"}
        if extra or "phi" not in args or "domain" not in args:
            raise ManifoldSpecError("chart spec needs 'phi' and 'domain'")
        dom = args["domain"]
        bad = set(dom) - {"lower", "upper", "periodic"}
        if bad:
            raise ManifoldSpecError(f"unknown domain fields {sorted(bad)}")
        m = len(dom["lower"])
        names = [f"u{k + 1}" for k in range(m)]
        phi = [parse_expression(t, names) for t in args["phi"]]
        n = len(phi)
        rhos = None
        if "rho" in args:
            rhos = [parse_expression(t, [f"x{k + 1}" for k in range(n)]) for t in args["rho"]]
        return chart(phi, dom["lower"], dom["upper"], dom.get("periodic"), args.get("nodes", 32), rhos,
                     args.get("name", "chart"))
    raise ManifoldSpecError(f"unknown manifold kind {kind!r}")
