"""Tensor-product quadrature on boxes and balls."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "gauss_legendre",
    "trapezoid_periodic",
    "axis_rule",
    "tensor_rule",
    "Box",
    "Ball",
    "box_rule",
    "ball_rule",
    "unit_ball_volume",
]


def gauss_legendre(n: int, a: float = -1.0, b: float = 1.0, panels: int = 1):
    """Composite Gauss–Legendre nodes and weights on ``[a, b]``."""
    x, w = np.polynomial.legendre.leggauss(n)
    edges = np.linspace(a, b, panels + 1)
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        half = 0.5 * (hi - lo)
        nodes.append(lo + half * (x + 1.0))
        weights.append(half * w)
    return np.concatenate(nodes), np.concatenate(weights)


def trapezoid_periodic(n: int, a: float = 0.0, b: float = 2 * np.pi):
    h = (b - a) / n
    return a + h * np.arange(n), np.full(n, h)


def axis_rule(n: int, a: float, b: float, periodic: bool = False, panels: int = 1):
    if periodic:
        return trapezoid_periodic(n, a, b)
    return gauss_legendre(n, a, b, panels)


def tensor_rule(rules: Sequence[tuple[np.ndarray, np.ndarray]]):
    """Flattened tensor product of 1-D rules: ``(points (N, d), weights (N,))``."""
    grids = np.meshgrid(*[r[0] for r in rules], indexing="ij")
    wgrids = np.meshgrid(*[r[1] for r in rules], indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    w = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    return pts, w


def unit_ball_volume(m: int) -> float:
    """Volume of the unit ball in R^m, ``pi^{m/2} / Gamma(m/2 + 1)``."""
    from math import gamma, pi

    return pi ** (m / 2) / gamma(m / 2 + 1)


@dataclass(frozen=True)
class Box:
    lower: tuple[float, ...]
    upper: tuple[float, ...]

    @property
    def dim(self) -> int:
        return len(self.lower)

    def volume(self) -> float:
        return float(np.prod(np.subtract(self.upper, self.lower)))


@dataclass(frozen=True)
class Ball:
    center: tuple[float, ...]
    radius: float

    @property
    def dim(self) -> int:
        return len(self.center)


def box_rule(box: Box, nodes: int = 32, panels: int = 1):
    rules = [gauss_legendre(nodes, lo, hi, panels) for lo, hi in zip(box.lower, box.upper)]
    return tensor_rule(rules)


def ball_rule(ball: Ball, nodes: int = 32):
    """Polar / spherical product rule for balls in dimension 1, 2 or 3."""
    n = ball.dim
    c = np.asarray(ball.center, dtype=float)
    r = ball.radius
    if n == 1:
        x, w = gauss_legendre(nodes, -r, r)
        return c + x[:, None], w
    rs, wr = gauss_legendre(nodes, 0.0, r)
    if n == 2:
        th, wt = trapezoid_periodic(2 * nodes)
        R, T = np.meshgrid(rs, th, indexing="ij")
        W = np.outer(wr * rs, wt)
        pts = np.stack([R * np.cos(T), R * np.sin(T)], axis=-1).reshape(-1, 2)
        return c + pts, W.ravel()
    if n == 3:
        ct, wc = gauss_legendre(nodes, -1.0, 1.0)
        ph, wp = trapezoid_periodic(2 * nodes)
        R, C, P = np.meshgrid(rs, ct, ph, indexing="ij")
        W = (wr * rs * rs)[:, None, None] * wc[None, :, None] * wp[None, None, :]
        S = np.sqrt(1 - C * C)
        pts = np.stack([R * S * np.cos(P), R * S * np.sin(P), R * C], axis=-1).reshape(-1, 3)
        return c + pts, W.ravel()
    raise ValueError("ball quadrature implemented for dimensions 1..3")
