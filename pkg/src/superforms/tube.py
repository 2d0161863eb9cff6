"""Volumes of tubes around submanifolds: direct, superform and polynomial routes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import beta as beta_fn

from .algebra import PointSuperform, beta, berezin_top, factorial, one_form, pullback_linear, wedge_power
from .manifold import Submanifold, curvature_form, supercurrent_pair
from .quadrature import gauss_legendre, trapezoid_periodic, unit_ball_volume

__all__ = [
    "TAU_TUBE",
    "FocalRadiusError",
    "radial_constant",
    "radial_constant_mc",
    "radial_moment",
    "focal_bound",
    "NormalBallRule",
    "normal_ball_rule",
    "tube_volume_direct",
    "tube_volume_superform",
    "tube_coefficient",
    "intrinsic_integral",
    "TubePolynomial",
    "tube_polynomial",
]

TAU_TUBE = 1e-3


class FocalRadiusError(ValueError):
    pass


def radial_constant(p: int, q: int) -> float:
    """``C(p, q) = int_{|t|<1} t_1^{2q} dt`` over the unit ball of R^p.

    Reduced to one dimension: the (p-1)-ball volume times
    ``int_{-1}^{1} s^{2q} (1 - s^2)^{(p-1)/2} ds = B(q + 1/2, (p+1)/2)``.
    """
    if p < 1 or q < 0:
        raise ValueError("need p >= 1 and q >= 0")
    return unit_ball_volume(p - 1) * float(beta_fn(q + 0.5, (p + 1) / 2.0))


def radial_constant_mc(p: int, q: int, samples: int = 10**6, seed: int = 0) -> tuple[float, float]:
    """Monte-Carlo estimate of ``C(p, q)`` and its standard error."""
    rng = np.random.default_rng(seed)
    t = rng.uniform(-1.0, 1.0, size=(samples, p))
    inside = np.sum(t * t, axis=1) < 1.0
    vals = np.where(inside, t[:, 0] ** (2 * q), 0.0) * 2.0**p
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(samples))


def radial_moment(p: int, k: int, r: float, a) -> float:
    """``int_{|t|<r} (t . a)^k dt``; zero for odd ``k``."""
    a = np.asarray(a, dtype=float)
    if a.shape != (p,):
        raise ValueError("direction must live in R^p")
    if k % 2:
        return 0.0
    q = k // 2
    return float(np.dot(a, a) ** q * r ** (k + p) * radial_constant(p, q))


def focal_bound(M: Submanifold) -> float:
    """``1/2 min over the mesh of 1/|F|_op`` for the tangential second fundamental form."""
    S = M.sff().tangential()
    # operator norm of t -> sum_j t_j S_j over unit t is bounded by the Frobenius norm
    norm = np.sqrt(np.sum(np.linalg.norm(S, ord=2, axis=(-2, -1)) ** 2, axis=-1))
    kmax = float(np.max(norm))
    return np.inf if kmax < 1e-14 else 0.5 / kmax


@dataclass
class NormalBallRule:
    t: np.ndarray
    w: np.ndarray
    stderr_scale: float = 0.0


def normal_ball_rule(p: int, r: float, nodes: int | None = None, seed: int = 0, samples: int = 20000) -> NormalBallRule:
    """Gauss–Legendre for ``p = 1``, a 24 x 16 polar grid for ``p = 2``, Monte Carlo beyond."""
    if p == 1:
        t, w = gauss_legendre(nodes or 16, -r, r)
        return NormalBallRule(t[:, None], w)
    if p == 2:
        s, ws = gauss_legendre(nodes or 24, 0.0, r)
        th, wt = trapezoid_periodic(16)
        S, T = np.meshgrid(s, th, indexing="ij")
        W = np.outer(ws * s, wt)
        pts = np.stack([S * np.cos(T), S * np.sin(T)], axis=-1).reshape(-1, 2)
        return NormalBallRule(pts, W.ravel())
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((samples, p))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    rad = r * rng.random(samples) ** (1.0 / p)
    vol = unit_ball_volume(p) * r**p
    return NormalBallRule(g * rad[:, None], np.full(samples, vol / samples), vol / np.sqrt(samples))


def _check_radius(M: Submanifold, r: float, guard: bool):
    if r <= 0:
        raise ValueError("tube width must be positive")
    if guard:
        bound = focal_bound(M)
        if r > bound:
            raise FocalRadiusError(f"width {r} exceeds the focal guard {bound:.4g}")


def tube_volume_direct(M: Submanifold, r: float, ball_nodes: int | None = None, guard: bool = True, seed: int = 0) -> float:
    """``int_M int_{|t|<r} |det DG(y, t)| dt dS`` with ``G(y, t) = y + sum_j t_j n_j(y)``."""
    _check_radius(M, r, guard)
    data = M.sff()
    E, N, F = data.tangents, data.normals, data.F
    rule = normal_ball_rule(M.p, r, ball_nodes, seed)
    # dn_j along e_a, shape (N, p, m, n)
    dn = np.einsum("sai,sjik->sjak", E, F)
    basis = np.concatenate([E, N], axis=1)  # (N, n, n), rows e_a then n_j
    # images of the frame vectors under DG, expressed in the same frame
    tang = E[:, None] + np.einsum("tj,sjak->stak", rule.t, dn)
    norm = np.broadcast_to(N[:, None], tang.shape[:2] + N.shape[1:])
    cols = np.concatenate([tang, norm], axis=2) @ np.swapaxes(basis, -1, -2)[:, None]
    det = np.linalg.det(cols)
    if np.any(det <= 0):
        raise FocalRadiusError("det DG changes sign inside the tube")
    return float(M.dS @ (np.abs(det) @ rule.w))


def tube_volume_superform(M: Submanifold, r: float, ball_nodes: int | None = None, guard: bool = True, seed: int = 0) -> float:
    """Berezin integral of ``(beta + sum t_j F_j + sum dt_j ^ n_j#)^n / n!`` over ``M x {|t| < r}``.

    The form is pulled back to the adapted frame ``(e_1..e_m, n_1..n_p)`` at
    each node; the restriction to ``M`` kills the normal ``dx`` slots, which
    are then reused for ``dt_1..dt_p``.
    """
    _check_radius(M, r, guard)
    data = M.sff()
    n, m, p = M.n, M.m, M.p
    E, N = data.tangents, data.normals
    rule = normal_ball_rule(p, r, ball_nodes, seed)
    basis = np.swapaxes(np.concatenate([E, N], axis=1), -1, -2)  # (N, n, n), columns
    b = pullback_linear(basis, beta(n))
    Fs = [pullback_linear(basis, Fj) for Fj in data.forms()]
    form = PointSuperform(n)
    for key, c in b.terms.items():
        form = form + PointSuperform(n, {key: np.asarray(c)[:, None] * np.ones(len(rule.w))})
    for j, Fj in enumerate(Fs):
        tj = rule.t[:, j][None, :]
        form = form + PointSuperform(n, {k: np.asarray(c)[:, None] * tj for k, c in Fj.terms.items()})
    tangential = (1 << m) - 1
    form = PointSuperform(n, {k: c for k, c in form.terms.items() if not k.xmask & ~tangential})
    for j in range(p):
        nsharp = pullback_linear(basis, one_form(N[:, j, :], "xi"))
        dt = PointSuperform(n, {(1 << (m + j), 0): 1.0})
        term = dt ^ nsharp
        form = form + PointSuperform(n, {k: np.asarray(c)[:, None] * np.ones(len(rule.w)) for k, c in term.terms.items()})
    dens = np.asarray(berezin_top(wedge_power(form, n))) / factorial(n)
    if np.any(dens <= 0):
        raise FocalRadiusError("tube density changes sign")
    return float(M.dS @ (dens @ rule.w))


def tube_coefficient(p: int, m: int, q: int) -> float:
    """``c_{2q} = 2^q C(p, q) / ((m - 2q)! (2q)!)``."""
    return 2.0**q * radial_constant(p, q) / (factorial(m - 2 * q) * factorial(2 * q))


def intrinsic_integral(M: Submanifold, q: int) -> float:
    """``<[M]_s, R^q ^ beta^{m-2q}>``."""
    m, n = M.m, M.n
    if 2 * q > m:
        raise ValueError("need 2q <= m")
    form = wedge_power(beta(n), m - 2 * q)
    if q:
        R = curvature_form(M, M.points)
        form = wedge_power(R, q) ^ form
    return supercurrent_pair(M, form)


@dataclass
class TubePolynomial:
    p: int
    m: int
    exponents: np.ndarray
    coefficients: np.ndarray
    intrinsic: np.ndarray
    radial_constants: np.ndarray
    predicted: np.ndarray
    implied_c: np.ndarray
    fit_residual: float
    odd_coefficients: np.ndarray
    condition: float
    radii: np.ndarray = field(default_factory=lambda: np.zeros(0))
    volumes: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return np.sum(self.coefficients * r[..., None] ** self.exponents, axis=-1)

    def predicted_volume(self, r):
        r = np.asarray(r, dtype=float)
        return np.sum(self.predicted * r[..., None] ** self.exponents, axis=-1)

    @property
    def odd_ratio(self) -> float:
        return float(np.max(np.abs(self.odd_coefficients)) / np.max(np.abs(self.coefficients)))


def tube_polynomial(M: Submanifold, fit_radii, ball_nodes: int | None = None) -> TubePolynomial:
    """Fit direct tube volumes on ``{r^{2q+p}}`` and compare with the curvature integrals."""
    m, p = M.m, M.p
    radii = np.asarray(fit_radii, dtype=float)
    qs = np.arange(m // 2 + 1)
    if len(radii) < len(qs) + 2:
        raise ValueError(f"need at least {len(qs) + 2} fit radii")
    vols = np.array([tube_volume_direct(M, r, ball_nodes) for r in radii])
    exps = 2 * qs + p
    scale = radii.max()
    A = (radii[:, None] / scale) ** exps
    coef, *_ = np.linalg.lstsq(A, vols, rcond=None)
    cond = float(np.linalg.cond(A))
    coef = coef / scale**exps
    fit = np.sum(coef * radii[:, None] ** exps, axis=1)
    resid = float(np.max(np.abs(fit - vols) / np.abs(vols)))
    # odd-power control: enlarge the basis by the missing exponents
    odd_exps = np.arange(m + 1) + p
    odd_exps = odd_exps[(odd_exps - p) % 2 == 1]
    odd = np.zeros(0)
    if len(odd_exps) and len(radii) >= len(qs) + len(odd_exps):
        all_exps = np.concatenate([exps, odd_exps])
        B = (radii[:, None] / scale) ** all_exps
        c2, *_ = np.linalg.lstsq(B, vols, rcond=None)
        odd = c2[len(exps):] / scale**odd_exps
    I = np.array([intrinsic_integral(M, int(q)) for q in qs])
    C = np.array([radial_constant(p, int(q)) for q in qs])
    cq = np.array([tube_coefficient(p, m, int(q)) for q in qs])
    with np.errstate(divide="ignore", invalid="ignore"):
        implied = np.where(np.abs(I) > 1e-12, coef / I, np.nan)
    return TubePolynomial(p, m, exps, coef, I, C, cq * I, implied, resid, odd, cond, radii, vols)
