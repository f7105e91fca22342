"""Measurements on computed fields: the ACF functional, growth and energy
ratios, density quantities, the square-root distance bound, the flatness
rescaling and harmonic deviation.

Radii refer to balls centered at ``center`` (the origin by default).
"""

from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .fields import ScalarField, _pair_mean, cell_ball_weights, cell_energy, cell_gradient, node_ball_mask
from .potential import PotentialSpec, eval_W
from .profiles import Profile1D, eval_profile, eval_profile_inverse

log = logging.getLogger(__name__)

_SUBSAMPLE = 8


@dataclass
class DiagnosticSeries:
    """Radius-indexed measurements with metadata."""

    label: str
    radii: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.radii = np.asarray(self.radii, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.radii.shape != self.values.shape:
            raise ValueError("radii and values must have the same length")
        if np.any(np.diff(self.radii) <= 0):
            raise ValueError("radii must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("series values must be finite")

    def __len__(self):
        return len(self.radii)

    def to_csv(self) -> str:
        lines = ["radius,value"]
        lines += [f"{r!r},{v!r}" for r, v in zip(self.radii.tolist(), self.values.tolist())]
        return "\n".join(lines) + "\n"

    def sidecar(self) -> str:
        def clean(v):
            if isinstance(v, (np.floating, float)):
                return None if not np.isfinite(v) else float(v)
            if isinstance(v, np.integer):
                return int(v)
            if isinstance(v, np.ndarray):
                return v.tolist()
            return v

        return json.dumps({"label": self.label, **{k: clean(v) for k, v in self.meta.items()}}, indent=2, sort_keys=True)

    def max_relative_drop(self) -> float:
        """Largest relative decrease between consecutive values (0 if nondecreasing)."""
        v = self.values
        if len(v) < 2:
            return 0.0
        prev = v[:-1]
        with np.errstate(divide="ignore", invalid="ignore"):
            drop = np.where(prev > 0, (prev - v[1:]) / prev, 0.0)
        return float(max(drop.max(), 0.0))


def loglog_exponent(radii, values) -> float:
    """Least-squares slope of log(values) against log(radii); NaN if undefined."""
    r = np.asarray(radii, dtype=float)
    v = np.asarray(values, dtype=float)
    ok = (r > 0) & (v > 0)
    if np.count_nonzero(ok) < 2 or np.ptp(np.log(r[ok])) == 0:
        return float("nan")
    return float(np.polyfit(np.log(r[ok]), np.log(v[ok]), 1)[0])


def _center(f: ScalarField, center) -> np.ndarray:
    return np.zeros(f.n) if center is None else np.broadcast_to(np.asarray(center, dtype=float), (f.n,))


def _check_radii(f: ScalarField, radii, c) -> np.ndarray:
    radii = np.asarray(radii, dtype=float)
    lo = np.asarray(f.origin)
    hi = np.asarray(f.upper)
    room = min(np.min(c - lo), np.min(hi - c))
    if np.any(radii > room + 1e-12):
        raise ValueError(f"radius {radii.max()} exceeds the grid around the center (room {room})")
    return radii


# -- ACF -------------------------------------------------------------------------


def _inv_norm_primitive(x, y, z):
    """F with d^3F/dxdydz = 1/|(x,y,z)|; zero-prefactor terms are dropped."""
    r = np.sqrt(x * x + y * y + z * z)

    def log_term(a, b, c):
        # b c log(a + r), with a + r evaluated stably for a < 0
        pre = b * c
        s = b * b + c * c
        with np.errstate(divide="ignore", invalid="ignore"):
            arg = np.where(a >= 0, a + r, s / (r - a))
            val = np.where(pre != 0, pre * np.log(np.where(arg > 0, arg, 1.0)), 0.0)
        return val

    def atan_term(a, b, c):
        with np.errstate(divide="ignore", invalid="ignore"):
            val = np.where(a != 0, 0.5 * a * a * np.arctan(b * c / (a * r)), 0.0)
        return val

    return (
        log_term(x, y, z) + log_term(y, z, x) + log_term(z, x, y)
        - atan_term(x, y, z) - atan_term(y, z, x) - atan_term(z, x, y)
    )


def box_integral_inv_norm(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Exact integral of 1/|x| over axis-aligned boxes [lo, hi] in 3D (rows)."""
    lo = np.atleast_2d(lo)
    hi = np.atleast_2d(hi)
    total = np.zeros(len(lo))
    for i in (0, 1):
        for j in (0, 1):
            for k in (0, 1):
                sign = (-1) ** (3 - i - j - k)
                x = hi[:, 0] if i else lo[:, 0]
                y = hi[:, 1] if j else lo[:, 1]
                z = hi[:, 2] if k else lo[:, 2]
                total += sign * _inv_norm_primitive(x, y, z)
    return total


def _acf_weights(f: ScalarField, c: np.ndarray, r: float) -> np.ndarray:
    """Per-cell integral of |x - c|^(2-n) over cell cap B_r(c)."""
    h = f.h
    frac = cell_ball_weights(f, c, r, sub=_SUBSAMPLE)
    if f.n <= 2:
        if f.n == 1:
            raise ValueError("the ACF functional needs n >= 2")
        return frac * h**2
    w = np.zeros(f.cell_shape)
    full = frac == 1.0
    idx = np.nonzero(full)
    lo = np.stack([f.origin[k] + h * idx[k] - c[k] for k in range(3)], axis=1)
    w[idx] = box_integral_inv_norm(lo, lo + h)
    cut = (frac > 0) & ~full
    idx = np.nonzero(cut)
    if len(idx[0]):
        offs = (np.arange(_SUBSAMPLE) + 0.5) / _SUBSAMPLE * h
        sub = np.stack(np.meshgrid(offs, offs, offs, indexing="ij"), -1).reshape(-1, 3)
        lo = np.stack([f.origin[k] + h * idx[k] - c[k] for k in range(3)], axis=1)
        p = lo[:, None, :] + sub[None]
        d = np.linalg.norm(p, axis=2)
        w[idx] = np.where(d <= r, 1.0 / d, 0.0).mean(axis=1) * h**3
    return w


def acf_phi(v_plus: ScalarField, v_minus: ScalarField, radii, center=None) -> DiagnosticSeries:
    """Phi(r) = I_+(r) I_-(r) / r^4 with I_pm = int_{B_r} |grad v_pm|^2 |x|^(2-n).

    Gradients are cell-centered; the weight is integrated exactly over each
    cell inside the ball (area fraction in 2D, closed form of 1/|x| over a
    box in 3D). Supports may touch across one cell layer; a node where both
    functions are positive is an error.
    """
    if v_plus.shape != v_minus.shape or v_plus.h != v_minus.h:
        raise ValueError("v_plus and v_minus must share a grid")
    if np.any(v_plus.values < 0) or np.any(v_minus.values < 0):
        raise ValueError("v_plus and v_minus must be nonnegative")
    both = (v_plus.values > 0) & (v_minus.values > 0)
    if np.any(both):
        raise ValueError(f"supports overlap at {int(both.sum())} nodes")
    n = v_plus.n
    pos_p = _pair_mean((v_plus.values > 0).astype(float), range(n)) > 0
    pos_m = _pair_mean((v_minus.values > 0).astype(float), range(n)) > 0
    shared = int(np.count_nonzero(pos_p & pos_m))
    c = _center(v_plus, center)
    radii = _check_radii(v_plus, radii, c)
    gp = sum(g * g for g in cell_gradient(v_plus.values, v_plus.h))
    gm = sum(g * g for g in cell_gradient(v_minus.values, v_minus.h))
    vals, ip, im = [], [], []
    for r in radii:
        w = _acf_weights(v_plus, c, r)
        a, b = float((gp * w).sum()), float((gm * w).sum())
        ip.append(a)
        im.append(b)
        vals.append(a * b / r**4)
    return DiagnosticSeries(
        "acf_phi", radii, vals,
        {"h": v_plus.h, "center": c.tolist(), "I_plus": ip, "I_minus": im, "shared_cells": shared},
    )


# -- growth, energy, density --------------------------------------------------------


def growth_series(f: ScalarField, radii, mode: str = "abs", center=None, window=None) -> DiagnosticSeries:
    """M(R) = max over nodes in B_R of |f| (``abs``) or (f - 1)^+ (``one-sided``).

    A log-log least-squares exponent over radii in ``window`` (all radii by
    default) is stored in ``meta['exponent']``; it is NaN when undefined.
    """
    if mode not in ("abs", "one-sided"):
        raise ValueError("mode must be 'abs' or 'one-sided'")
    c = _center(f, center)
    radii = _check_radii(f, radii, c)
    q = np.abs(f.values) if mode == "abs" else np.maximum(f.values - 1.0, 0.0)
    d2 = sum((m - ck) ** 2 for m, ck in zip(f.mesh(), c))
    d2 = np.broadcast_to(d2, f.shape)
    vals = [float(q[d2 <= r * r].max()) for r in radii]
    sel = np.ones(len(radii), dtype=bool)
    if window is not None:
        sel = (radii >= window[0]) & (radii <= window[1])
    expo = loglog_exponent(radii[sel], np.asarray(vals)[sel])
    return DiagnosticSeries(
        f"growth_{mode}", radii, vals,
        {"h": f.h, "center": c.tolist(), "exponent": expo, "window": None if window is None else list(window)},
    )


def energy_ratio_series(f: ScalarField, spec: PotentialSpec, radii, center=None) -> DiagnosticSeries:
    """J(f, B_R) / R^(n-1) over the given radii, with the log-log trend in meta."""
    c = _center(f, center)
    radii = _check_radii(f, radii, c)
    cells = cell_energy(f.values, f.h, spec)
    vals = [float((cells * cell_ball_weights(f, c, r)).sum()) / r ** (f.n - 1) for r in radii]
    return DiagnosticSeries(
        "energy_ratio", radii, vals,
        {"h": f.h, "center": c.tolist(), "trend_exponent": loglog_exponent(radii, vals), "max": max(vals)},
    )


def density_series(f: ScalarField, spec: PotentialSpec, radii, center=None):
    """V(R) = |{f >= 0} cap B_R|, A(R) = int_{B_R} W(f), omega = V + A.

    V counts cells whose corner mean is >= 0, weighted by ball coverage.
    """
    c = _center(f, center)
    radii = _check_radii(f, radii, c)
    f0 = _interp_node(f, c)
    if not -1.0 < f0 < 1.0:
        warnings.warn(f"f(center) = {f0:.4g} lies outside (-1, 1); density interpretation is off", stacklevel=2)
    n = f.n
    hn = f.h**n
    pos = (_pair_mean(f.values, range(n)) >= 0).astype(float)
    wcell = _pair_mean(eval_W(spec, f.values), range(n))
    V, A = [], []
    for r in radii:
        w = cell_ball_weights(f, c, r)
        V.append(float((pos * w).sum() * hn))
        A.append(float((wcell * w).sum() * hn))
    V, A = np.asarray(V), np.asarray(A)
    meta = {"h": f.h, "center": c.tolist(), "f_center": f0}
    return (
        DiagnosticSeries("V", radii, V, dict(meta)),
        DiagnosticSeries("A", radii, A, dict(meta)),
        DiagnosticSeries("omega", radii, V + A, dict(meta)),
    )


def _interp_node(f: ScalarField, x) -> float:
    """Multilinear interpolation of f at a single point."""
    pos = (np.asarray(x, dtype=float) - np.asarray(f.origin)) / f.h
    base = np.clip(np.floor(pos).astype(int), 0, np.array(f.shape) - 2)
    frac = pos - base
    total = 0.0
    for corner in np.ndindex(*([2] * f.n)):
        wgt = np.prod([fr if b else 1 - fr for fr, b in zip(frac, corner)])
        total += wgt * f.values[tuple(base + np.array(corner))]
    return float(total)


# -- square-root distance bound ---------------------------------------------------------


def interface_points(f: ScalarField, level: float = 1.0) -> np.ndarray:
    """Points where ``f - level`` changes sign along grid edges (linear interpolation)."""
    g = f.values - level
    pts = [f.points()[g.ravel() == 0]]
    mesh = f.mesh(sparse=False)
    for ax in range(f.n):
        a = [slice(None)] * f.n
        b = [slice(None)] * f.n
        a[ax] = slice(None, -1)
        b[ax] = slice(1, None)
        ga, gb = g[tuple(a)], g[tuple(b)]
        cross = ga * gb < 0
        if not np.any(cross):
            continue
        t = ga[cross] / (ga[cross] - gb[cross])
        p = np.stack([m[tuple(a)][cross] for m in mesh], axis=1)
        p[:, ax] += t * f.h
        pts.append(p)
    return np.concatenate(pts)


def sqrt_distance_bound(f: ScalarField) -> dict:
    """sup over nodes of (f - 1)^+ / dist(x, boundary of {f > 1})^(1/2).

    The boundary is sampled by edge crossings of the level 1; distances are
    exact nearest-neighbour distances to those samples.
    """
    gamma = interface_points(f, 1.0)
    if len(gamma) == 0:
        raise ValueError("the free boundary {f = 1} is empty on this grid")
    excess = np.maximum(f.values - 1.0, 0.0).ravel()
    sel = np.flatnonzero(excess > 0)
    if len(sel) == 0:
        return {"ratio": 0.0, "point": None, "n_interface": int(len(gamma))}
    pts = f.points()[sel]
    dist, _ = cKDTree(gamma).query(pts)
    ratio = excess[sel] / np.sqrt(dist)
    i = int(np.argmax(ratio))
    return {
        "ratio": float(ratio[i]),
        "point": pts[i].tolist(),
        "distance": float(dist[i]),
        "n_interface": int(len(gamma)),
    }


# -- flatness ---------------------------------------------------------------------------


@dataclass
class FlatnessField:
    """The rescaling on the unit-ball grid with its node mask and band flag."""

    field: ScalarField
    ball: np.ndarray
    within_band: bool
    sup_abs: float

    def values_in_ball(self) -> np.ndarray:
        return self.field.values[self.ball]


def flatness_rescale(f: ScalarField, p: Profile1D, eps: float, R: float, direction=None, center=None) -> FlatnessField:
    """u~(y) = (U_a^{-1}(f(R y)) - R y.nu) / (eps R) at f's own nodes mapped by y = x / R.

    The result lives on the grid of spacing h/R restricted to the bounding
    box of B_R; ``ball`` marks the nodes with |y| <= 1.
    """
    if eps <= 0 or R <= 0:
        raise ValueError("eps and R must be positive")
    nu = np.zeros(f.n)
    nu[-1] = 1.0
    if direction is not None:
        nu = np.asarray(direction, dtype=float)
        nu = nu / np.linalg.norm(nu)
    c = _center(f, center)
    lo_idx = np.maximum(np.ceil((c - R - np.asarray(f.origin)) / f.h - 1e-9).astype(int), 0)
    hi_idx = np.minimum(np.floor((c + R - np.asarray(f.origin)) / f.h + 1e-9).astype(int), np.array(f.shape) - 1)
    sl = tuple(slice(a, b + 1) for a, b in zip(lo_idx, hi_idx))
    u = f.values[sl]
    origin = np.asarray(f.origin) + f.h * lo_idx
    axes = [origin[k] + f.h * np.arange(u.shape[k]) - c[k] for k in range(f.n)]
    mesh = np.meshgrid(*axes, indexing="ij", sparse=True)
    proj = sum(m * nk for m, nk in zip(mesh, nu))
    if p.a == 0:
        bad = np.abs(u) >= p.spec.well
        if np.any(bad):
            nodes = np.argwhere(bad)[:10].tolist()
            raise ValueError(f"values outside the invertible range at nodes {nodes}")
    tilde = (eval_profile_inverse(p, u) - proj) / (eps * R)
    d2 = sum(m * m for m in mesh)
    ball = np.broadcast_to(d2 <= R * R * (1 + 1e-12), u.shape).copy()
    out = ScalarField(tilde, f.h / R, tuple((origin - c) / R))
    sup = float(np.abs(tilde[ball]).max()) if np.any(ball) else 0.0
    return FlatnessField(out, ball, sup <= 1.0, sup)


def band_check(f: ScalarField, p: Profile1D, eps: float, R: float, direction=None, center=None) -> bool:
    """U_a(x.nu - eps R) <= f <= U_a(x.nu + eps R) at every node of B_R."""
    nu = np.zeros(f.n)
    nu[-1] = 1.0
    if direction is not None:
        nu = np.asarray(direction, dtype=float) / np.linalg.norm(direction)
    c = _center(f, center)
    proj = np.broadcast_to(sum((m - ck) * nk for m, ck, nk in zip(f.mesh(), c, nu)), f.shape)
    ball = node_ball_mask(f, c, R)
    lo = eval_profile(p, proj[ball] - eps * R)
    hi = eval_profile(p, proj[ball] + eps * R)
    u = f.values[ball]
    tol = 1e-12
    return bool(np.all(u >= lo - tol) and np.all(u <= hi + tol))


def _linear_fit_residual(points: np.ndarray, values: np.ndarray) -> np.ndarray:
    A = np.hstack([np.ones((len(points), 1)), points])
    coef, *_ = np.linalg.lstsq(A, values, rcond=None)
    return values - A @ coef


def harmonic_deviation(g: ScalarField, ball: np.ndarray | None = None, rho: float = 0.25, rtol: float = 1e-10) -> dict:
    """Distance of ``g`` from its harmonic replacement in the unit ball.

    Nodes of the ball whose full stencil lies in the ball are free; the other
    ball nodes carry ``g`` as Dirichlet data. ``dev`` is the sup over free
    nodes of |g - w|. ``improvement`` is osc(g - L_rho) on B_rho divided by
    osc(g - L_1) on B_1, with L_r the least-squares affine fit on B_r.
    """
    from .minimize import harmonic_extension

    if ball is None:
        ball = node_ball_mask(g, np.zeros(g.n), 1.0)
    ball = np.asarray(ball, dtype=bool)
    if not np.all(np.isfinite(g.values[ball])):
        raise ValueError("g must be finite on the ball")
    interior = ball.copy()
    for ax in range(g.n):
        for step in (-1, 1):
            nb = np.zeros_like(ball)
            src = [slice(None)] * g.n
            dst = [slice(None)] * g.n
            if step == 1:
                src[ax], dst[ax] = slice(1, None), slice(None, -1)
            else:
                src[ax], dst[ax] = slice(None, -1), slice(1, None)
            nb[tuple(dst)] = ball[tuple(src)]
            interior &= nb
    vals = np.where(ball, g.values, 0.0)
    work = ScalarField(vals, g.h, g.origin, fixed=~interior)
    w = harmonic_extension(work, rtol)
    diff = np.abs(vals - w.values)[interior]
    dev = float(diff.max()) if diff.size else 0.0
    pts = g.points().reshape(g.shape + (g.n,))
    r2 = (pts**2).sum(axis=-1)
    osc = []
    for r in (rho, 1.0):
        sel = ball & (r2 <= r * r)
        if np.count_nonzero(sel) <= g.n + 1:
            raise ValueError(f"too few nodes in B_{r} for an affine fit")
        res = _linear_fit_residual(pts[sel], g.values[sel])
        osc.append(float(np.ptp(res)))
    improvement = osc[0] / osc[1] if osc[1] > 0 else 0.0
    return {"dev": dev, "improvement": improvement, "osc_rho": osc[0], "osc_1": osc[1], "rho": rho}
