"""Rescaled pairs, the functionals J_eps and I, recovery sequences and the
Gamma-convergence experiment.

A pair ``(v, E)`` on the unit scale comes from a field ``u`` on ``B_R`` by
``v = R^(-1/2) (u(Rx) - 1)^+`` and ``E = min(u(Rx), 1)``; then
``J(u, B_R) = R^(n-1) J_eps(v, E, B_1)`` with ``eps = 1/R``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .diagnostics import DiagnosticSeries
from .fields import IndicatorField, ScalarField, _clip_segments, box_shape, cell_energy, perimeter_TV, total_variation
from .potential import PotentialSpec, antiderivative_H, surface_tension_c0
from .profiles import build_profile, eval_profile

ADMISSIBLE_TOL = 1e-12


# -- geometry of limit sets ----------------------------------------------------------


@dataclass(frozen=True)
class HalfPlane:
    """E = {x . normal < offset}."""

    normal: tuple[float, ...]
    offset: float = 0.0

    def signed_distance(self, pts: np.ndarray) -> np.ndarray:
        nu = np.asarray(self.normal, dtype=float)
        nu = nu / np.linalg.norm(nu)
        return pts @ nu - self.offset

    def perimeter(self, lower, upper) -> float:
        """Length of the boundary line inside a planar box."""
        lo, hi = np.asarray(lower, float), np.asarray(upper, float)
        if lo.size != 2:
            raise NotImplementedError("exact perimeter is planar only")
        nu = np.asarray(self.normal, dtype=float)
        nu = nu / np.linalg.norm(nu)
        L = 2.0 * (np.linalg.norm(hi - lo) + np.linalg.norm((lo + hi) / 2) + abs(self.offset))
        base = self.offset * nu
        tang = np.array([-nu[1], nu[0]])
        P, Q = _clip_segments((base - L * tang)[None], (base + L * tang)[None], lo, hi)
        return float(np.linalg.norm(Q - P, axis=1).sum())


@dataclass(frozen=True)
class Disk:
    """E = {|x - center| < radius}."""

    center: tuple[float, ...]
    radius: float

    def signed_distance(self, pts: np.ndarray) -> np.ndarray:
        return np.linalg.norm(pts - np.asarray(self.center, dtype=float), axis=1) - self.radius

    def perimeter(self, lower, upper, samples: int = 1 << 20) -> float:
        """Length of the circle inside a planar box (midpoint rule when clipped)."""
        lo, hi = np.asarray(lower, float), np.asarray(upper, float)
        c = np.asarray(self.center, dtype=float)
        if lo.size != 2:
            raise NotImplementedError("exact perimeter is planar only")
        if np.all(c - self.radius >= lo) and np.all(c + self.radius <= hi):
            return 2.0 * math.pi * self.radius
        th = (np.arange(samples) + 0.5) * (2.0 * math.pi / samples)
        p = c + self.radius * np.stack([np.cos(th), np.sin(th)], axis=1)
        inside = np.all((p > lo) & (p < hi), axis=1)
        return 2.0 * math.pi * self.radius * inside.mean()


@dataclass(frozen=True)
class Polygon:
    """E = interior of a simple planar polygon (vertices in order)."""

    vertices: tuple[tuple[float, float], ...]

    def signed_distance(self, pts: np.ndarray) -> np.ndarray:
        v = np.asarray(self.vertices, dtype=float)
        a, b = v, np.roll(v, -1, axis=0)
        best = np.full(len(pts), np.inf)
        inside = np.zeros(len(pts), dtype=bool)
        for p, q in zip(a, b):
            d = q - p
            t = np.clip(((pts - p) @ d) / (d @ d), 0.0, 1.0)
            best = np.minimum(best, np.linalg.norm(pts - (p + t[:, None] * d), axis=1))
            # even-odd ray casting along +x
            cond = (p[1] > pts[:, 1]) != (q[1] > pts[:, 1])
            with np.errstate(divide="ignore", invalid="ignore"):
                xc = p[0] + (pts[:, 1] - p[1]) * d[0] / d[1]
            inside ^= cond & (pts[:, 0] < xc)
        return np.where(inside, -best, best)

    def perimeter(self, lower, upper) -> float:
        """Length of the polygon boundary inside a box."""
        v = np.asarray(self.vertices, dtype=float)
        P, Q = _clip_segments(v, np.roll(v, -1, axis=0), np.asarray(lower, float), np.asarray(upper, float))
        return float(np.linalg.norm(Q - P, axis=1).sum())


# -- pairs ---------------------------------------------------------------------------


@dataclass(eq=False)
class AdmissiblePair:
    """``v >= 0``, ``-1 <= E <= 1`` and ``E = 1`` wherever ``v > 0``, on a shared grid."""

    v: ScalarField
    E: ScalarField

    def __post_init__(self):
        self.check()

    def check(self) -> None:
        if self.v.shape != self.E.shape or self.v.h != self.E.h:
            raise ValueError("v and E must share a grid")
        if np.any(self.v.values < 0):
            raise ValueError("v must be nonnegative")
        if np.any(np.abs(self.E.values) > 1.0 + ADMISSIBLE_TOL):
            raise ValueError("E must lie in [-1, 1]")
        bad = (self.v.values > 0) & (np.abs(self.E.values - 1.0) > ADMISSIBLE_TOL)
        if np.any(bad):
            raise ValueError(f"{{v > 0}} is not contained in {{E = 1}} at {int(bad.sum())} nodes")

    @property
    def h(self) -> float:
        return self.v.h


@dataclass(eq=False)
class LimitPair:
    """``v >= 0`` with ``v = 0`` on the cells of ``E``; ``geometry`` gives a signed distance."""

    v: ScalarField
    E: IndicatorField
    geometry: object | None = None

    def __post_init__(self):
        if np.any(self.v.values < 0):
            raise ValueError("v must be nonnegative")
        if self.E.values.shape != self.v.cell_shape:
            raise ValueError("E must live on the cells of v's grid")
        n = self.v.n
        corner_max = self.v.values
        for ax in range(n):
            lo = [slice(None)] * n
            hi = [slice(None)] * n
            lo[ax] = slice(None, -1)
            hi[ax] = slice(1, None)
            corner_max = np.maximum(corner_max[tuple(lo)], corner_max[tuple(hi)])
        if np.any((self.E.values == 1) & (corner_max > ADMISSIBLE_TOL)):
            raise ValueError("v must vanish on E")


def limit_from_geometry(geometry, lower, upper, h: float, v_fn=None) -> LimitPair:
    """Limit pair with E = {signed distance < 0} (cell centers) and v = v_fn (default 0)."""
    v = ScalarField.from_function(v_fn or (lambda *x: 0.0 * sum(x)), lower, upper, h)
    shape = tuple(s - 1 for s in v.shape)
    centers = np.stack([m.ravel() for m in v.cell_centers(sparse=False)], axis=1)
    E = (geometry.signed_distance(centers) < 0).reshape(shape)
    return LimitPair(v, IndicatorField(E.astype(np.uint8), h, v.origin), geometry)


def rescale_pair(u: ScalarField, R: float, center=None) -> AdmissiblePair:
    """(R^(-1/2) (u(Rx) - 1)^+, min(u(Rx), 1)) at u's own nodes mapped by x = (y - center)/R."""
    if R <= 0:
        raise ValueError("R must be positive")
    c = np.zeros(u.n) if center is None else np.asarray(center, dtype=float)
    origin = tuple((np.asarray(u.origin) - c) / R)
    h = u.h / R
    v = ScalarField(np.maximum(u.values - 1.0, 0.0) / math.sqrt(R), h, origin)
    E = ScalarField(np.minimum(u.values, 1.0), h, origin)
    return AdmissiblePair(v, E)


def _masked(cells: np.ndarray, mask) -> float:
    return float(cells.sum() if mask is None else (cells * np.asarray(mask, dtype=float)).sum())


def dirichlet_energy(v: ScalarField, mask=None) -> float:
    return _masked(cell_energy(v.values, v.h, None, grad_coef=1.0, pot_coef=0.0), mask)


def eval_J_eps(pair: AdmissiblePair, spec: PotentialSpec, eps: float, mask=None) -> float:
    """int |grad v|^2/2 + eps |grad E|^2/2 + W(E)/eps with the energy_J quadrature."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    cells = cell_energy(pair.E.values, pair.h, spec, grad_coef=eps, pot_coef=1.0 / eps)
    if np.any(pair.v.values):
        cells = cells + cell_energy(pair.v.values, pair.h, None, grad_coef=1.0, pot_coef=0.0)
    return _masked(cells, mask)


def lower_bound_terms(pair: AdmissiblePair, spec: PotentialSpec, mask=None) -> float:
    """Dirichlet energy of v plus the total variation of H(E)."""
    hE = pair.E.with_values(antiderivative_H(spec, pair.E.values))
    return dirichlet_energy(pair.v, mask) + total_variation(hE, mask)


def limit_perimeter(limit: LimitPair, mask=None) -> float:
    """Perimeter of E in the box: exact from the geometry when available, else from the grid."""
    geo = limit.geometry
    if mask is None and geo is not None and hasattr(geo, "perimeter"):
        try:
            return geo.perimeter(limit.v.origin, limit.v.upper)
        except NotImplementedError:
            pass
    return perimeter_TV(limit.E, mask)


def eval_I(limit: LimitPair, c0: float, mask=None) -> float:
    """Dirichlet energy of v plus c0 times the perimeter of E."""
    return dirichlet_energy(limit.v, mask) + c0 * limit_perimeter(limit, mask)


# -- recovery sequence --------------------------------------------------------------


def smoothstep5(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * x * (10.0 - 15.0 * x + 6.0 * x * x)


def cutoff(d, eta: float):
    """1 on |d| <= eta/4, 0 on |d| >= eta/2, quintic smoothstep in between."""
    return 1.0 - smoothstep5((np.abs(d) - eta / 4.0) / (eta / 4.0))


def grid_spacing(eps: float, policy: str = "layer") -> float:
    """Grid spacing for the unit box: ``layer`` gives 1/ceil(8/eps) (about eps/8),
    ``refined`` gives 1/ceil(2 eps^(-3/2)), so that h/eps -> 0 with eps."""
    if policy == "layer":
        return 1.0 / math.ceil(8.0 / eps - 1e-9)
    if policy == "refined":
        return 1.0 / math.ceil(2.0 * eps**-1.5 - 1e-9)
    raise ValueError(f"unknown grid policy {policy!r}")


def build_recovery_sequence(
    limit: LimitPair,
    spec: PotentialSpec,
    eps: float,
    delta_margin: float | None = None,
    h: float | None = None,
    lower=None,
    upper=None,
) -> AdmissiblePair:
    """E_eps = phi(d) U_0(d/eps) + (1 - phi(d)) sgn(d), v_eps = (v - 2 delta)^+.

    ``d`` is the signed distance to the limit set (negative inside), ``phi``
    the cutoff with eta = 8 sqrt(eps). The pair lives on the box of the limit
    grid (or [lower, upper]) with spacing ``h`` (default about eps/8).
    """
    if limit.geometry is None:
        raise ValueError("recovery needs a limit set with a signed distance")
    if eps <= 0:
        raise ValueError("eps must be positive")
    h = grid_spacing(eps) if h is None else float(h)
    if h > eps / 8.0 * (1 + 1e-9):
        raise ValueError(f"h={h} under-resolves the transition layer (need h <= eps/8)")
    lower = limit.v.origin if lower is None else lower
    upper = limit.v.upper if upper is None else upper
    vmax = float(limit.v.values.max())
    delta = 0.01 * vmax if delta_margin is None else float(delta_margin)
    shape = box_shape(lower, upper, h)
    lower = np.atleast_1d(np.asarray(lower, dtype=float))
    axes = [lower[k] + h * np.arange(shape[k]) for k in range(len(shape))]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    del mesh
    d = limit.geometry.signed_distance(pts).reshape(shape)
    eta = 8.0 * math.sqrt(eps)
    phi = cutoff(d, eta)
    E = np.sign(d)
    layer = phi > 0
    p0 = build_profile(spec, 0.0)
    E[layer] = phi[layer] * eval_profile(p0, d[layer] / eps) + (1.0 - phi[layer]) * np.sign(d[layer])
    del phi, d
    if vmax > 0:
        src = limit.v
        interp = RegularGridInterpolator([src.axis(k) for k in range(src.n)], src.values, bounds_error=False, fill_value=None)
        v = np.maximum(interp(pts).reshape(shape) - 2.0 * delta, 0.0)
    else:
        v = np.zeros(shape)
    origin = tuple(lower)
    try:
        return AdmissiblePair(ScalarField(v, h, origin), ScalarField(E, h, origin))
    except ValueError as exc:
        raise ValueError(f"recovery pair is not admissible ({exc}); increase delta_margin") from exc


# -- experiment ------------------------------------------------------------------------


@dataclass
class GammaReport:
    recovery: DiagnosticSeries
    gaps: DiagnosticSeries
    lower_bound_ok: bool
    lower_bound_slack: list[float]
    limit_value: float
    minimized: DiagnosticSeries | None = None

    def gap_ratios(self) -> list[float]:
        g = self.gaps.values
        return (g[1:] / g[:-1]).tolist()

    def summary(self) -> dict:
        out = {
            "limit_value": self.limit_value,
            "eps": (1.0 / self.recovery.radii).tolist(),
            "J_eps": self.recovery.values.tolist(),
            "gap": self.gaps.values.tolist(),
            "gap_ratios": self.gap_ratios(),
            "lower_bound_ok": self.lower_bound_ok,
            "lower_bound_slack": self.lower_bound_slack,
            "h": self.recovery.meta.get("h"),
        }
        if self.minimized is not None:
            out["J_eps_minimized"] = self.minimized.values.tolist()
        return out


def lower_bound_tolerance(h: float, eps: float, scale: float) -> float:
    """Quadrature tolerance of the lower-bound check: (h/eps)^2 relative to ``scale``.

    A sampled optimal profile sits (h/eps)^2 c0/15 below its own TV(H(E)) on
    the grid, so this is about fifteen times the worst observed deficit.
    """
    return (h / eps) ** 2 * scale + 1e-12


def _minimized_pair(limit: LimitPair, spec: PotentialSpec, eps: float, h_u: float):
    """Minimize J on the box scaled by R = 1/eps with data from the recovery profile."""
    from .minimize import MinimizeConfig, minimize_energy

    R = 1.0 / eps
    h = h_u / R
    lo = np.asarray(limit.v.origin)
    hi = np.asarray(limit.v.upper)
    rec = build_recovery_sequence(limit, spec, eps, h=h, lower=lo, upper=hi)
    # undo the rescaling to get boundary data for u on the box of size R
    u_vals = np.where(rec.v.values > 0, 1.0 + math.sqrt(R) * rec.v.values, rec.E.values)
    u = ScalarField(u_vals, h_u, tuple(lo * R))
    res = minimize_energy(u, spec, MinimizeConfig(init="given", tol=1e-9))
    return rescale_pair(res.field, R)


def gamma_experiment(
    limit: LimitPair,
    eps_list,
    spec: PotentialSpec,
    grid_policy: str = "layer",
    minimized: bool = False,
    minimized_h: float = 0.125,
) -> GammaReport:
    """J_eps of recovery pairs along ``eps_list`` against I(limit).

    Every pair is also checked against the lower bound
    ``J_eps >= Dirichlet(v) + TV(H(E))`` within ``lower_bound_tolerance``.
    With ``minimized`` the same is done for minimizers of J at R = 1/eps.
    """
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps list must be decreasing")
    c0 = surface_tension_c0(spec)
    I_val = eval_I(limit, c0)
    J, gaps, slack, ok, hs = [], [], [], True, []
    for eps in eps_list:
        h = grid_spacing(eps, grid_policy)
        pair = build_recovery_sequence(limit, spec, eps, h=h)
        j = eval_J_eps(pair, spec, eps)
        lb = lower_bound_terms(pair, spec)
        tol = lower_bound_tolerance(h, eps, max(lb, 1.0))
        slack.append(j - lb)
        ok &= j >= lb - tol
        J.append(j)
        gaps.append(abs(j - I_val))
        hs.append(h)
        del pair
    radii = 1.0 / np.asarray(eps_list)
    meta = {"h": hs, "grid_policy": grid_policy, "limit_value": I_val}
    report = GammaReport(
        DiagnosticSeries("J_eps_recovery", radii, J, dict(meta)),
        DiagnosticSeries("gap", radii, gaps, dict(meta)),
        bool(ok), slack, I_val,
    )
    if minimized:
        Jm = []
        for eps in eps_list:
            pair = _minimized_pair(limit, spec, eps, minimized_h)
            j = eval_J_eps(pair, spec, eps)
            lb = lower_bound_terms(pair, spec)
            report.lower_bound_ok &= bool(j >= lb - lower_bound_tolerance(pair.h, eps, max(lb, 1.0)))
            report.lower_bound_slack.append(j - lb)
            Jm.append(j)
        report.minimized = DiagnosticSeries("J_eps_minimized", radii, Jm, {"h_u": minimized_h})
    return report
