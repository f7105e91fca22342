"""Small quadrature and interpolation helpers shared by the tabulating modules."""

from __future__ import annotations

import numpy as np
from scipy.interpolate import CubicHermiteSpline

_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    if order not in _GL_CACHE:
        _GL_CACHE[order] = np.polynomial.legendre.leggauss(order)
    return _GL_CACHE[order]


def panel_integrals(f, nodes: np.ndarray, order: int = 10) -> np.ndarray:
    """Integral of ``f`` over each panel ``[nodes[i], nodes[i+1]]``.

    ``f`` must accept an ndarray and return an ndarray of the same shape.
    """
    x, w = gauss_legendre(order)
    a, b = nodes[:-1], nodes[1:]
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    pts = mid[:, None] + half[:, None] * x[None, :]
    return half * (f(pts) @ w)


def cumulative_integral(f, nodes: np.ndarray, order: int = 10) -> np.ndarray:
    """Running integral of ``f`` from ``nodes[0]`` to every node."""
    out = np.empty(len(nodes))
    out[0] = 0.0
    np.cumsum(panel_integrals(f, nodes, order), out=out[1:])
    return out


def hermite(x: np.ndarray, y: np.ndarray, dydx: np.ndarray) -> CubicHermiteSpline:
    return CubicHermiteSpline(x, y, dydx, extrapolate=False)


def vectorized_bisect(g, targets: np.ndarray, lo, hi, iters: int = 200) -> np.ndarray:
    """Solve ``g(x) = targets`` for increasing ``g`` on ``[lo, hi]``, elementwise."""
    lo = np.broadcast_to(np.asarray(lo, dtype=float), targets.shape).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), targets.shape).copy()
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if np.all((mid == lo) | (mid == hi)):
            break
        below = g(mid) < targets
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)
