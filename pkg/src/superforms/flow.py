"""Mean curvature flow of chart meshes and the first variation of weighted volume."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np

from . import expr as ex
from .algebra import beta, factorial, wedge_power
from .fields import dd_sharp
from .manifold import Submanifold, supercurrent_pair

__all__ = [
    "TAU_FLOW",
    "FlowHaltError",
    "FlowState",
    "spectral_derivative_matrices",
    "mesh_geometry",
    "initial_state",
    "mcf_step",
    "MeshGeometry",
    "weighted_mass",
    "predicted_mass_derivative",
    "volume_variation_check",
    "pullback_variation_check",
    "FlowRun",
    "run_flow",
]

TAU_FLOW = 1e-4


class FlowHaltError(RuntimeError):
    pass


def _fourier_matrix(N: int, length: float) -> np.ndarray:
    """Differentiation matrix on ``N`` equispaced periodic nodes."""
    freq = np.fft.fftfreq(N, d=length / N) * 2 * np.pi
    if N % 2 == 0:
        freq[N // 2] = 0.0
    return np.real(np.fft.ifft(1j * freq[:, None] * np.fft.fft(np.eye(N), axis=0), axis=0))


def _lagrange_matrix(x: np.ndarray) -> np.ndarray:
    """Differentiation matrix of the interpolant through arbitrary distinct nodes."""
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    w = 1.0 / np.prod(diff, axis=1)
    D = (w[None, :] / w[:, None]) / diff
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    return D


def spectral_derivative_matrices(chart) -> list[np.ndarray]:
    """One differentiation matrix per parameter axis of the chart mesh."""
    if chart.panels != 1 and not all(chart.periodic):
        raise ValueError("spectral flow needs single-panel Gauss axes")
    mats = []
    for a in range(chart.m):
        k = chart.nodes[a]
        if chart.periodic[a]:
            mats.append(_fourier_matrix(k, chart.upper[a] - chart.lower[a]))
        else:
            axis = np.unique(chart.params[:, a])
            mats.append(_lagrange_matrix(axis))
    return mats


def _apply(D: np.ndarray, X: np.ndarray, axis: int) -> np.ndarray:
    return np.moveaxis(np.tensordot(D, X, axes=([1], axis)), 0, axis)


@dataclass(frozen=True)
class FlowState:
    """Lagrangian node positions on the chart's tensor grid at time ``t``."""

    chart: object
    X: np.ndarray
    t: float = 0.0
    H: np.ndarray | None = None

    @property
    def points(self) -> np.ndarray:
        return self.X.reshape(-1, self.X.shape[-1])


@dataclass(frozen=True)
class MeshGeometry:
    area: np.ndarray
    H: np.ndarray
    kappa: float
    tangent_projector: np.ndarray


def mesh_geometry(state: FlowState) -> MeshGeometry:
    """Area elements, mean curvature vectors and curvature bound from spectral derivatives.

    ``H = -g^{ab} (d_a d_b X)^perp``, so the round unit sphere has ``H = 2x``.
    """
    c = state.chart
    D = spectral_derivative_matrices(c)
    X = state.X
    m = c.m
    d1 = [_apply(D[a], X, a) for a in range(m)]
    d2 = [[_apply(D[b], d1[a], b) for b in range(m)] for a in range(m)]
    J = np.stack(d1, axis=-1)  # (..., n, m)
    g = np.swapaxes(J, -1, -2) @ J
    det = np.linalg.det(g)
    if np.any(det <= 1e-14):
        raise FlowHaltError(f"mesh lost embeddedness at t = {state.t:.6g} (min Gram determinant {det.min():.3g})")
    ginv = np.linalg.inv(g)
    PT = J @ ginv @ np.swapaxes(J, -1, -2)
    P = np.eye(X.shape[-1]) - PT
    II = np.stack([np.stack([np.einsum("...ik,...k->...i", P, d2[a][b]) for b in range(m)], -1) for a in range(m)], -1)
    # II[..., i, b, a] is the normal part of d_a d_b X
    H = -np.einsum("...ab,...iab->...i", ginv, II)
    # curvature bound: Frobenius norm of II in an orthonormal tangent frame
    L = np.linalg.cholesky(ginv)
    IIo = np.einsum("...ac,...iab,...bd->...icd", L, II, L)
    kappa = np.sqrt(np.sum(IIo**2, axis=(-3, -2, -1)))
    return MeshGeometry(np.sqrt(det), H, float(np.max(kappa)), PT)


def _ambient_projection(points: np.ndarray, weights: np.ndarray, values: np.ndarray, degree: int) -> np.ndarray:
    """Weighted least-squares projection of node values onto ambient polynomials of bounded degree.

    Restricted to the surface these are smooth functions free of chart
    artefacts (spherical harmonics on a sphere), which keeps explicit steps
    stable near chart poles where the parameter mesh clusters.
    """
    n = points.shape[-1]
    center = np.average(points, axis=0, weights=weights)
    scale = float(np.max(np.abs(points - center))) or 1.0
    y = (points - center) / scale
    cols = [np.ones(len(points))]
    for d in range(1, degree + 1):
        for idx in combinations_with_replacement(range(n), d):
            cols.append(np.prod(y[:, list(idx)], axis=1))
    A = np.stack(cols, axis=1)
    sw = np.sqrt(weights)[:, None]
    coef, *_ = np.linalg.lstsq(A * sw, values * sw, rcond=1e-10)
    return A @ coef


def initial_state(M: Submanifold) -> FlowState:
    c = M.chart
    X = c.points.reshape(tuple(c.nodes) + (c.n,))
    return FlowState(c, X, 0.0)


def mcf_step(state: FlowState, h: float, check_step: bool = True, filter_degree: int | None = 8) -> FlowState:
    """Explicit Euler ``x <- x - h H(x)``; ``h`` may be negative for backward differencing.

    ``filter_degree`` projects the nodal ``H`` onto ambient polynomials of
    that degree before the update; ``None`` uses the raw nodal values.
    """
    geo = mesh_geometry(state)
    H, kappa = geo.H, geo.kappa
    if check_step and kappa > 0 and abs(h) > 0.1 / kappa**2:
        raise FlowHaltError(f"step {h} exceeds 0.1 (min radius of curvature)^2 = {0.1 / kappa**2:.3g}")
    if filter_degree is not None:
        w = state.chart.param_weights * geo.area.ravel()
        H = _ambient_projection(state.points, w, H.reshape(-1, H.shape[-1]), filter_degree).reshape(H.shape)
    return FlowState(state.chart, state.X - h * H, state.t + h, H)


def weighted_mass(state: FlowState, u) -> float:
    """``int u dsigma_t`` on the current mesh."""
    area = mesh_geometry(state).area.ravel()
    u = ex.as_expr(u)
    vals = np.broadcast_to(ex.evaluate(u, state.points), area.size)
    return float(np.sum(state.chart.param_weights * area * vals))


def predicted_mass_derivative(state: FlowState, u) -> float:
    """``-int (u |H|^2 + tr_T Hess u) dsigma_t`` on the current mesh, classically."""
    geo = mesh_geometry(state)
    u = ex.as_expr(u)
    n = state.X.shape[-1]
    pts = state.points
    Hs = np.broadcast_to(u.hessian(pts, n), (len(pts), n, n))
    PT = geo.tangent_projector.reshape(-1, n, n)
    tr = np.einsum("sik,ski->s", PT, Hs)
    H2 = np.sum(geo.H.reshape(-1, n) ** 2, axis=-1)
    vals = np.broadcast_to(ex.evaluate(u, pts), H2.shape) * H2 + tr
    return -float(np.sum(state.chart.param_weights * geo.area.ravel() * vals))


def _hessian_pair(M: Submanifold, u) -> float:
    """``<[M]_s, dd#u ^ beta^{m-1}/(m-1)!>``."""
    n, m = M.n, M.m
    form = dd_sharp(ex.as_expr(u), n).at(M.points) ^ (wedge_power(beta(n), m - 1) / factorial(m - 1))
    return supercurrent_pair(M, form)


def volume_variation_check(M: Submanifold, u, h: float = 1e-4) -> tuple[float, float]:
    """Centred difference of ``int u dsigma_t`` across one flow step each way vs the variation formula.

    Returns ``(lhs, rhs)`` with
    ``rhs = -<[M]_s, u |H|^2 beta^m/m!> - <[M]_s, dd#u ^ beta^{m-1}/(m-1)!>``.
    """
    n, m = M.n, M.m
    u = ex.as_expr(u)
    s0 = initial_state(M)
    up = weighted_mass(mcf_step(s0, h, check_step=False, filter_degree=None), u)
    down = weighted_mass(mcf_step(s0, -h, check_step=False, filter_degree=None), u)
    lhs = (up - down) / (2 * h)
    H2 = np.sum(M.sff().H_vector ** 2, axis=-1)
    uvals = np.broadcast_to(ex.evaluate(u, M.points), H2.shape)
    top = wedge_power(beta(n), m) / factorial(m)
    first = supercurrent_pair(M, top * (uvals * H2))
    rhs = -first - _hessian_pair(M, u)
    return float(lhs), float(rhs)


def pullback_variation_check(M: Submanifold, u, h: float = 1e-4) -> tuple[float, float]:
    """``d/dt int u(x - tH) dS`` at ``t = 0`` against ``-<[M]_s, dd#u ^ beta^{m-1}/(m-1)!>``.

    The measure stays fixed here, unlike the variation of ``sigma_t``.
    """
    u = ex.as_expr(u)
    Hv = M.sff().H_vector
    plus = np.dot(M.dS, ex.evaluate(u, M.points - h * Hv))
    minus = np.dot(M.dS, ex.evaluate(u, M.points + h * Hv))
    return float((plus - minus) / (2 * h)), -_hessian_pair(M, u)


@dataclass
class FlowRun:
    times: np.ndarray
    masses: np.ndarray
    radii: np.ndarray
    final: FlowState


def run_flow(M: Submanifold, h: float, steps: int, u=None, filter_degree: int | None = 8) -> FlowRun:
    """Euler steps from ``M``; records ``int u dsigma_t`` and the mean distance to the origin."""
    u = ex.ONE if u is None else ex.as_expr(u)
    state = initial_state(M)
    times, masses, radii = [], [], []
    for k in range(steps + 1):
        times.append(state.t)
        masses.append(weighted_mass(state, u))
        radii.append(float(np.mean(np.linalg.norm(state.points, axis=-1))))
        if k < steps:
            state = mcf_step(state, h, filter_degree=filter_degree)
    return FlowRun(np.array(times), np.array(masses), np.array(radii), state)

