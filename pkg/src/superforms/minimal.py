"""Minimality, monotonicity, density and volume bounds for supercurrents of manifolds."""

from __future__ import annotations

from dataclasses import dataclass, field
from math import gamma, pi
from typing import Callable, Sequence

import numpy as np

from . import expr as ex
from .algebra import (
    TAU_PSD,
    BidegreeError,
    PointSuperform,
    berezin_top,
    beta,
    contract,
    factorial,
    one_form,
    pullback_linear,
    wedge_power,
)
from .expr import Expr
from .fields import FormField, _as_field, dd_sharp, gaussian, kernel_E, random_form_field, scalar, smoothed_norm
from .manifold import (
    Submanifold,
    UnionManifold,
    normal_wedge,
    supercurrent_pair,
    tangent_frame_from_jacobian,
)
from .quadrature import Box, gauss_legendre, trapezoid_periodic

__all__ = [
    "TAU_MONO",
    "TAU_MIN",
    "unit_ball_volume",
    "MinimalityResult",
    "minimality_residual",
    "localized_test_forms",
    "default_test_suite",
    "dirichlet_form",
    "laplacian_pair",
    "kernel_identity_check",
    "find_parameter",
    "ball_integral",
    "MassProfile",
    "mass_profile",
    "mass_in_ball_clipped",
    "DensityResult",
    "density",
    "smoothed_mass_check",
    "VolumeBoundResult",
    "weighted_volume_bound",
    "brendle_hung_weight",
    "m_subharmonic_test",
    "m_subharmonic_eigen",
    "DiscreteMeasure",
    "RieszPotential",
    "riesz_potential",
    "AtomEvaluationError",
    "CoverageError",
]

TAU_MONO = 1e-3
TAU_MIN = 1e-4
TAU_BD = 1e-6


class CoverageError(ValueError):
    """A requested ball leaves the chart domain."""


def unit_ball_volume(m: int) -> float:
    """``omega_m = pi^{m/2} / Gamma(m/2 + 1)``."""
    return pi ** (m / 2) / gamma(m / 2 + 1)


def _beta_power(n: int, k: int) -> PointSuperform:
    return wedge_power(beta(n), k) / factorial(k)


# ---------------------------------------------------------------------------
# minimality


@dataclass
class MinimalityResult:
    residual: float
    lhs: list[float]
    rhs: list[float]

    @property
    def mismatch(self) -> float:
        """Largest relative gap between the two sides."""
        scale = max(1.0, max((abs(v) for v in self.rhs), default=0.0))
        return max((abs(a - b) for a, b in zip(self.lhs, self.rhs)), default=0.0) / scale


def _sigma_form(M: Submanifold, top: int) -> PointSuperform:
    return normal_wedge(M.normals()) ^ _beta_power(M.n, top)


def minimality_residual(M: Submanifold, suite: Sequence) -> MinimalityResult:
    """Pair ``d S`` (or ``d# S``), ``S = [M]_s ^ beta^{m-1}/(m-1)!``, with test forms.

    ``(0,1)``-forms are paired with ``d S = -<S, d psi>`` and compared with
    ``sum_j H_j n_j# ⌟ sigma``; ``(1,0)``-forms with ``d# S`` and
    ``-sum_j H_j n_j ⌟ sigma``, where ``sigma = [M]_s ^ beta^m/m!``.
    """
    if not suite:
        raise ValueError("empty test suite")
    m, n = M.m, M.n
    bm1 = _beta_power(n, m - 1)
    data = M.sff()
    sigma = _sigma_form(M, m)
    Hn = data.H_vector
    lhs, rhs = [], []
    for psi in suite:
        psi = _as_field(psi)
        degs = psi.bidegrees()
        if degs == {(0, 1)}:
            val = -supercurrent_pair(M, FormField(n, psi.d().terms) ^ FormField(n, bm1.terms))
            act = contract(one_form(Hn, "xi"), sigma)
        elif degs == {(1, 0)}:
            val = -supercurrent_pair(M, FormField(n, psi.dsharp().terms) ^ FormField(n, bm1.terms))
            act = -contract(one_form(Hn, "x"), sigma)
        else:
            raise BidegreeError("minimality test forms must have bidegree (0,1) or (1,0)")
        r = berezin_top(act ^ psi.at(M.points))
        lhs.append(val)
        rhs.append(float(np.dot(M.dS, r)))
    return MinimalityResult(max(abs(v) for v in lhs), lhs, rhs)


def localized_test_forms(
    M: Submanifold,
    bidegrees: Sequence[tuple[int, int]],
    count: int = 20,
    seed: int = 0,
    width: float = 0.2,
    degree: int = 1,
    margin: float = 0.25,
) -> list[FormField]:
    """Random polynomial forms with Gaussian envelopes centred on ``M``.

    Bidegrees cycle through ``bidegrees``.  Centres are images of parameters
    drawn from the middle of the chart box so that the envelope is
    negligible at the chart boundary.
    """
    rng = np.random.default_rng(seed)
    c = M.chart
    lo = np.asarray(c.lower)
    hi = np.asarray(c.upper)
    span = hi - lo
    out = []
    for k in range(count):
        u = lo + span * (margin + (1 - 2 * margin) * rng.random(c.m))
        for a, per in enumerate(c.periodic):
            if per:
                u[a] = lo[a] + span[a] * rng.random()
        env = gaussian(M.n, c.evaluate(u), width)
        p, q = bidegrees[k % len(bidegrees)]
        out.append(random_form_field(M.n, p, q, rng, degree, env))
    return out


def default_test_suite(
    M: Submanifold, count: int = 20, seed: int = 0, width: float = 0.2, degree: int = 1, margin: float = 0.25
) -> list[FormField]:
    """Alternating (0,1) and (1,0) localized test forms for the minimality check."""
    return localized_test_forms(M, [(0, 1), (1, 0)], count, seed, width, degree, margin)


def dirichlet_form(M: Submanifold, u) -> tuple[float, float]:
    """``<[M]_s, du ^ d#u ^ beta^{m-1}/(m-1)!>`` and the classical ``int |grad_M u|^2``."""
    u = ex.as_expr(u)
    n, m = M.n, M.m
    su = scalar(u, n)
    form = FormField(n, (su.d() ^ su.dsharp()).terms) ^ FormField(n, _beta_power(n, m - 1).terms)
    superform_value = supercurrent_pair(M, form)
    grad = u.gradient(M.points, n)
    tang = np.einsum("qai,qi->qa", M.frame, grad)
    classical = float(np.dot(M.dS, np.sum(tang**2, axis=-1)))
    return superform_value, classical


def laplacian_pair(M: Submanifold, u, rho) -> float:
    """``<Delta_{[M]_s} u, rho> = <[M]_s, rho dd#u ^ beta^{m-1}/(m-1)!>``."""
    n, m = M.n, M.m
    form = FormField(n, (dd_sharp(ex.as_expr(u), n) * ex.as_expr(rho)).terms)
    form = form ^ FormField(n, _beta_power(n, m - 1).terms)
    return supercurrent_pair(M, form)


# ---------------------------------------------------------------------------
# kernels


def kernel_identity_check(n: int, p: int, delta: float, samples: int = 1000, seed: int = 0, spread: float = 1.0) -> float:
    """Max discrepancy of ``dd#E_{p,delta} ^ beta^{p+1}`` against ``(dd#|x|_delta)^{p+2}``.

    Each coefficient gap is divided by ``max(1, |coefficient|)`` so that the
    check is meaningful where the kernel is large.  The origin is always
    included among the sample points.
    """
    rng = np.random.default_rng(seed)
    x = spread * rng.uniform(-1.0, 1.0, size=(samples, n))
    x[0] = 0.0
    E = kernel_E(n, p, delta)
    r = smoothed_norm(n, delta)
    lhs = dd_sharp(E, n).at(x) ^ wedge_power(beta(n), p + 1)
    rhs = wedge_power(dd_sharp(r, n).at(x), p + 2)
    worst = 0.0
    for key in set(lhs.terms) | set(rhs.terms):
        a = np.asarray(lhs.terms.get(key, 0.0))
        b = np.asarray(rhs.terms.get(key, 0.0))
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            return float("inf")
        err = np.abs(a - b) / np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
        worst = max(worst, float(np.max(err)))
    return worst


# ---------------------------------------------------------------------------
# masses of balls


def find_parameter(M: Submanifold, point, tol: float = 1e-13, iters: int = 50, on_manifold: bool = True) -> np.ndarray:
    """Chart parameter of a point on ``M`` (nearest mesh node, then Gauss–Newton).

    With ``on_manifold=False`` the parameter of the nearest point is returned.
    """
    a = np.asarray(point, dtype=float)
    c = M.chart
    k = int(np.argmin(np.sum((c.points - a) ** 2, axis=-1)))
    u = c.params[k].copy()
    for _ in range(iters):
        r = c.evaluate(u) - a
        J = c.jacobian(u)
        step, *_ = np.linalg.lstsq(J, r, rcond=None)
        u = u - step
        if np.linalg.norm(step) < tol:
            break
    if on_manifold and np.linalg.norm(c.evaluate(u) - a) > 1e-8 * max(1.0, np.linalg.norm(a)):
        raise ValueError("point is not on the manifold")
    return u


def _directions(m: int, angles: int):
    if m == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if m == 2:
        th, w = trapezoid_periodic(angles)
        return np.stack([np.cos(th), np.sin(th)], axis=-1), w
    raise NotImplementedError("ball masses implemented for m = 1, 2")


def _max_step(c, u0: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Largest ``s`` keeping ``u0 + s d`` inside the non-periodic chart box."""
    lim = np.full(d.shape[0], np.inf)
    for a in range(c.m):
        if c.periodic[a]:
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            up = np.where(d[:, a] > 0, (c.upper[a] - u0[a]) / d[:, a], np.inf)
            dn = np.where(d[:, a] < 0, (c.lower[a] - u0[a]) / d[:, a], np.inf)
        lim = np.minimum(lim, np.minimum(up, dn))
    return lim


def _radial_limits(c, u0, a, dirs, r, iters: int = 200):
    """Parameter distance along each direction at which ``|Phi - a| = r``."""
    lim = _max_step(c, u0, dirs)

    def f(s):
        pts = c.evaluate(u0 + s[:, None] * dirs)
        return np.sum((pts - a) ** 2, axis=-1) - r * r

    sig = np.linalg.svd(c.jacobian(u0), compute_uv=False)
    hi = np.minimum(2.0 * r / sig.min(), lim)
    for _ in range(60):
        bad = f(hi) <= 0
        if not np.any(bad):
            break
        if np.any(hi[bad] >= lim[bad]):
            raise CoverageError("ball of this radius leaves the chart domain")
        hi = np.where(bad, np.minimum(2 * hi, lim), hi)
    lo = np.zeros_like(hi)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        inside = f(mid) <= 0
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
        if np.max(hi - lo) < 1e-15 * max(1.0, float(np.max(hi))):
            break
    return 0.5 * (lo + hi)


def ball_integral(
    M,
    center,
    r: float,
    integrand: Callable | None = None,
    radial_nodes: int = 24,
    angles: int = 64,
    center_param=None,
) -> float:
    """``int_{M cap B(center, r)} g dS`` in polar coordinates around the centre's parameter.

    ``integrand(points, frames)`` returns per-point values; it defaults to 1.
    The ball's preimage must be star-shaped about the centre parameter,
    which holds for small ``r``.  A centre off ``M`` is replaced by its
    nearest point for the polar origin.
    """
    if isinstance(M, UnionManifold):
        return sum(ball_integral(p, center, r, integrand, radial_nodes, angles) for p in M.parts)
    c = M.chart
    a = np.asarray(center, dtype=float)
    u0 = find_parameter(M, a, on_manifold=False) if center_param is None else np.asarray(center_param, dtype=float)
    dirs, wdir = _directions(c.m, angles)
    smax = _radial_limits(c, u0, a, dirs, r)
    x, w = gauss_legendre(radial_nodes, 0.0, 1.0)
    s = smax[:, None] * x[None, :]
    weight = wdir[:, None] * smax[:, None] * w[None, :] * (s ** (c.m - 1))
    U = (u0 + s[..., None] * dirs[:, None, :]).reshape(-1, c.m)
    J = c.jacobian(U)
    area = np.sqrt(np.linalg.det(np.swapaxes(J, -1, -2) @ J))
    vals = area
    if integrand is not None:
        vals = vals * np.asarray(integrand(c.evaluate(U), tangent_frame_from_jacobian(J)), dtype=float)
    return float(np.dot(weight.ravel(), vals))


def mass_in_ball_clipped(M, center, r: float, cells: int = 48, levels: int = 4) -> float:
    """Ball mass by clipping chart cells against the ball.

    Cells straddling the sphere are subdivided ``levels`` times and the
    leaves are classified by their centre; inside cells use a 2x2
    Gauss rule for the area element.
    """
    if isinstance(M, UnionManifold):
        return sum(mass_in_ball_clipped(p, center, r, cells, levels) for p in M.parts)
    c = M.chart
    if c.m != 2:
        raise NotImplementedError("clipping implemented for surfaces")
    a = np.asarray(center, dtype=float)
    g, gw = np.polynomial.legendre.leggauss(2)
    gx = 0.5 * (g + 1.0)
    gw = 0.5 * gw

    def area(lo, size):
        # lo (K, 2), size (K, 2)
        U = lo[:, None, None, :] + size[:, None, None, :] * np.stack(np.meshgrid(gx, gx, indexing="ij"), -1)[None]
        J = c.jacobian(U.reshape(-1, 2))
        el = np.sqrt(np.linalg.det(np.swapaxes(J, -1, -2) @ J)).reshape(-1, 2, 2)
        return np.einsum("kij,i,j->k", el, gw, gw) * size[:, 0] * size[:, 1]

    def inside(U):
        return np.sum((c.evaluate(U) - a) ** 2, axis=-1) <= r * r

    lower = np.asarray(c.lower)
    size0 = (np.asarray(c.upper) - lower) / cells
    idx = np.stack(np.meshgrid(np.arange(cells), np.arange(cells), indexing="ij"), -1).reshape(-1, 2)
    lo = lower + idx * size0
    size = np.broadcast_to(size0, lo.shape).copy()
    total = 0.0
    corners = np.array([[0, 0], [0, 1], [1, 0], [1, 1], [0.5, 0.5]])
    for level in range(levels + 1):
        probe = lo[:, None, :] + corners[None] * size[:, None, :]
        flags = inside(probe.reshape(-1, 2)).reshape(-1, 5)
        full = np.all(flags, axis=1)
        empty = ~np.any(flags, axis=1)
        if level == levels:
            keep = flags[:, 4]
            total += float(np.sum(area(lo[keep], size[keep])))
            break
        total += float(np.sum(area(lo[full], size[full])))
        mixed = ~(full | empty)
        lo, size = lo[mixed], size[mixed] / 2
        lo = np.concatenate([lo, lo + size * [1, 0], lo + size * [0, 1], lo + size])
        size = np.concatenate([size] * 4)
    return total


@dataclass
class MassProfile:
    radii: np.ndarray
    masses: np.ndarray
    ratios: np.ndarray

    @property
    def monotone_defect(self) -> float:
        """Largest relative decrease between consecutive ratios (0 if nondecreasing)."""
        drops = (self.ratios[:-1] - self.ratios[1:]) / np.abs(self.ratios[:-1])
        return float(max(0.0, np.max(drops, initial=0.0)))

    def is_monotone(self, tol: float = TAU_MONO) -> bool:
        return self.monotone_defect <= tol


def mass_profile(M, center, radii: Sequence[float], method: str = "polar", **kw) -> MassProfile:
    """``sigma(r) = <[M]_s, chi_{|x-a|<r} beta^m/m!>`` and ``sigma(r)/r^m``."""
    radii = np.asarray(sorted(radii), dtype=float)
    if method == "polar":
        masses = np.array([ball_integral(M, center, r, **kw) for r in radii])
    elif method == "clip":
        masses = np.array([mass_in_ball_clipped(M, center, r, **kw) for r in radii])
    else:
        raise ValueError("method must be 'polar' or 'clip'")
    return MassProfile(radii, masses, masses / radii**M.m)


@dataclass
class DensityResult:
    value: float
    ratios: np.ndarray
    extrapolants: np.ndarray
    spread: float
    converged: bool


def density(M, center, r0: float = 0.2, levels: int = 7, tol: float = TAU_MONO, **kw) -> DensityResult:
    """Richardson-extrapolated ``lim r^{-m} sigma(r)`` over ``r_k = r0 2^{-k}``."""
    radii = r0 * 2.0 ** -np.arange(levels)
    prof = mass_profile(M, center, radii, **kw)
    q = prof.ratios[::-1]  # decreasing radii
    e = 2 * q[1:] - q[:-1]
    tail = e[-3:]
    spread = float((tail.max() - tail.min()) / abs(tail[-1]))
    return DensityResult(float(e[-1]), q, e, spread, spread <= tol)


def smoothed_mass_check(M, center, r: float, delta: float, **kw) -> tuple[float, float]:
    """``sigma(r)`` against ``(r^2+delta)^{m/2} <[M]_s, chi (dd#|x-a|_delta)^m/m!>``."""
    m, n = M.m, M.n
    a = np.asarray(center, dtype=float)
    rn = smoothed_norm(n, delta, a)
    H = dd_sharp(rn, n)

    def integrand(points, frames):
        A = pullback_linear(np.swapaxes(frames, -1, -2), H.at(points))
        return berezin_top(wedge_power(A, m)) / factorial(m)

    sigma = ball_integral(M, a, r, **kw)
    other = (r * r + delta) ** (m / 2) * ball_integral(M, a, r, integrand, **kw)
    return sigma, other


# ---------------------------------------------------------------------------
# volume bounds and m-subharmonicity


def brendle_hung_weight(a: Sequence[float], m: int) -> Expr:
    """``w = (1 + |a|^2 - 2 a.x)^{m/2}``, equal to ``|x-a|^m`` on the unit sphere."""
    a = [float(v) for v in a]
    X = ex.variables(len(a))
    v = 1.0 + sum(t * t for t in a) - 2.0 * ex.add(*[a[i] * X[i] for i in range(len(a))])
    return ex.power(v, m / 2.0)


@dataclass
class VolumeBoundResult:
    lhs: float
    rhs: float
    passed: bool
    certificate: dict = field(default_factory=dict)


def weighted_volume_bound(
    M,
    center,
    w,
    ball_radius: float = 1.0,
    tol: float = 1e-4,
    boundary_samples: int = 512,
    seed: int = 0,
    density_kw: dict | None = None,
) -> VolumeBoundResult:
    """Mass of ``M`` in the ball ``D = B(0, ball_radius)`` against ``w(a) gamma(a)``.

    Preconditions checked: ``w = |x-a|^m`` on ``dD`` and ``w`` passes the
    m-subharmonic probe on a box around ``D``.
    """
    a = np.asarray(center, dtype=float)
    m, n = M.m, M.n
    w = ex.as_expr(w)
    rng = np.random.default_rng(seed)
    y = rng.standard_normal((boundary_samples, n))
    y = ball_radius * y / np.linalg.norm(y, axis=-1, keepdims=True)
    target = np.linalg.norm(y - a, axis=-1) ** m
    bd_err = float(np.max(np.abs(w(y) - target) / np.maximum(1.0, target)))
    if bd_err > TAU_BD:
        raise ValueError(f"weight does not match |x-a|^m on the boundary (error {bd_err:.2e})")
    region = Box(tuple([-ball_radius] * n), tuple([ball_radius] * n))
    if not m_subharmonic_test(w, m, region, trials=64, rng_seed=seed):
        raise ValueError("weight fails the m-subharmonic probe")
    lhs = ball_integral(M, np.zeros(n), ball_radius)
    clipped = mass_in_ball_clipped(M, np.zeros(n), ball_radius)
    dens = density(M, a, **(density_kw or {}))
    rhs = float(w(a)) * dens.value
    return VolumeBoundResult(
        lhs, rhs, lhs >= rhs - tol,
        {"clipped_mass": clipped, "boundary_error": bd_err, "density": dens.value, "density_converged": dens.converged, "weight_at_a": float(w(a))},
    )


def _sample_points(region: Box, count: int, rng) -> np.ndarray:
    lo = np.asarray(region.lower)
    hi = np.asarray(region.upper)
    return lo + (hi - lo) * rng.random((count, len(lo)))


def m_subharmonic_test(
    u, m: int, region: Box, trials: int = 64, rng_seed: int = 0, points: int = 64, tol: float = TAU_PSD
) -> bool:
    """One-sided probe of ``dd#u ^ beta^{m-1} ^ alpha >= 0``.

    ``alpha = a_1 ^ a_1# ^ ... ^ a_{n-m} ^ a_{n-m}#`` with random unit
    ``a_j``, at random points of ``region``.
    """
    u = ex.as_expr(u)
    n = region.dim
    if not 1 <= m <= n:
        raise ValueError("need 1 <= m <= n")
    rng = np.random.default_rng(rng_seed)
    x = _sample_points(region, points, rng)
    base = dd_sharp(u, n).at(x) ^ _beta_power(n, m - 1)
    scale = max(1.0, base.max_abs())
    for _ in range(trials):
        prod = base
        for _ in range(n - m):
            v = rng.standard_normal(n)
            v /= np.linalg.norm(v)
            prod = prod ^ one_form(v, "x") ^ one_form(v, "xi")
        top = np.asarray(berezin_top(prod))
        if not np.all(np.isfinite(top)) or np.min(top) < -tol * scale:
            return False
    return True


def m_subharmonic_eigen(u, m: int, region: Box, points: int = 64, rng_seed: int = 0, tol: float = TAU_PSD) -> bool:
    """Sum of the ``m`` smallest Hessian eigenvalues is nonnegative at sampled points."""
    u = ex.as_expr(u)
    rng = np.random.default_rng(rng_seed)
    x = _sample_points(region, points, rng)
    Hs = u.hessian(x, region.dim)
    eig = np.linalg.eigvalsh(0.5 * (Hs + np.swapaxes(Hs, -1, -2)))
    s = np.sum(eig[:, :m], axis=-1)
    scale = max(1.0, float(np.max(np.abs(eig))))
    return bool(np.all(s >= -tol * scale))


# ---------------------------------------------------------------------------
# Riesz potentials


class AtomEvaluationError(ValueError):
    """Potential evaluated at an atom, where it equals minus infinity."""


@dataclass(frozen=True)
class DiscreteMeasure:
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if pts.shape[0] != w.shape[0]:
            raise ValueError("one weight per atom")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())


class RieszPotential:
    """``u(x) = sum_k -w_k |x - y_k|^{2-m}`` (``m > 2``) or ``sum_k w_k log|x - y_k|`` (``m = 2``)."""

    def __init__(self, mu: DiscreteMeasure, m: int):
        if m < 2:
            raise ValueError("Riesz potentials need m >= 2")
        self.mu = mu
        self.m = m
        n = mu.points.shape[1]
        self.n = n
        X = ex.variables(n)
        terms = []
        for y, wk in zip(mu.points, mu.weights):
            r2 = ex.add(*[ex.power(X[i] - float(y[i]), 2.0) for i in range(n)])
            if m == 2:
                terms.append(0.5 * float(wk) * ex.log(r2))
            else:
                terms.append(-float(wk) * ex.power(r2, -(m - 2) / 2.0))
        self.expr = ex.add(*terms)

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        d = np.linalg.norm(x[..., None, :] - self.mu.points, axis=-1)
        if np.any(d == 0.0):
            raise AtomEvaluationError("potential is -inf at an atom")
        return x

    def __call__(self, x):
        return self.expr(self._check(x))

    def gradient(self, x):
        return self.expr.gradient(self._check(x), self.n)

    def hessian(self, x):
        return self.expr.hessian(self._check(x), self.n)


def riesz_potential(mu: DiscreteMeasure, m: int) -> RieszPotential:
    return RieszPotential(mu, m)
