"""Explicit comparison subsolutions and their numerical certification.

All three constructions describe an increasing generator ``g`` through
``g' = sqrt(2 h(g))``, so that ``g'' = h'(g)``. A radial function
``V(x) = g(rho0 - |x - c|)`` then has Laplacian ``g'' - (n-1)/|x-c| * g'`` and
the subsolution inequality ``lap V > W'(V)`` becomes a one-dimensional
inequality for ``h``:

* ``RadialBarrier``: ``h = W + (C/R)(s+1)`` on [-1, 1] and
  ``(sqrt(2C/R) + (C0/R)(s-1))^2`` beyond, with ``C0 = 2(n-1)``; ``V(x) = g(2R - |x|)``
  on the annulus ``R/2 <= |x| <= 2R``.
* ``AnnularSubsolution``: ``h = W_a + 1/2 + C(eps/R)s`` (slope-1 problem for the
  rescaled potential, multiplied back by ``a``); ``Phi(x) = g(R/eps - |x|)``.
* ``PolynomialSubsolution``: the annular construction placed on a sphere of
  radius ``R/(K eps)`` so that its flatness rescaling approximates ``P``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ._quad import cumulative_integral, hermite
from .potential import PotentialSpec, eval_W, eval_W_prime, slope_rescaled
from .profiles import build_profile, eval_profile, eval_profile_inverse

_CORE_NODES = 20_000
_MAX_DOUBLINGS = 20


class BarrierError(RuntimeError):
    pass


class _Generator:
    """Increasing g on [t_lo, t_hi] from a tabulated core and analytic tails.

    ``core`` is ``(t, s)`` with exact slopes taken from ``h``; the tails are
    callables returning ``s`` for ``t`` beyond the core.
    """

    def __init__(self, h, hprime, t, s, left=None, right=None):
        self.h, self.hprime = h, hprime
        self.t, self.s = t, s
        self._spline = hermite(t, s, np.sqrt(2.0 * np.maximum(h(s), 0.0)))
        self.left, self.right = left, right

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        out = self._spline(np.clip(t, self.t[0], self.t[-1]))
        if self.right is not None:
            hi = t > self.t[-1]
            if np.any(hi):
                out = np.where(hi, self.right(np.where(hi, t, self.t[-1])), out)
        if self.left is not None:
            lo = t < self.t[0]
            if np.any(lo):
                out = np.where(lo, self.left(np.where(lo, t, self.t[0])), out)
        return out

    def d1(self, t):
        return np.sqrt(2.0 * np.maximum(self.h(self(t)), 0.0))

    def d2(self, t):
        return self.hprime(self(t))


def _require_truncated(spec: PotentialSpec):
    if not spec.truncated:
        raise ValueError("barrier constructions need a potential vanishing outside its wells")


def _radial_margin(gen: _Generator, W: PotentialSpec, t, r, n: int, scale: float = 1.0):
    """g'' - (n-1)/r g' - W'(g), for V = scale * g."""
    return scale * (gen.d2(t) - (n - 1) / r * gen.d1(t)) - eval_W_prime(W, scale * gen(t))


# -- radial barrier --------------------------------------------------------------


@dataclass(eq=False)
class RadialBarrier:
    """Radial subsolution on the annulus R/2 <= |x - center| <= 2R."""

    spec: PotentialSpec
    R: float
    n: int
    C: float
    C0: float
    center: np.ndarray
    gen: _Generator = field(repr=False)
    t_one: float = 0.0
    C1: float = 0.0
    C_log: float = 0.0
    worst_s: float = 0.0
    worst_margin: float = 0.0

    def h(self, s):
        return _radial_h(self.spec, self.R, self.C, self.C0, s)[0]

    def g(self, t):
        return self.gen(t)

    def radius(self, x):
        x = np.atleast_2d(x)
        return np.linalg.norm(x - self.center, axis=1)

    def value(self, x):
        return self.gen(2.0 * self.R - self.radius(x))

    def exact_margin(self, x):
        r = self.radius(x)
        return _radial_margin(self.gen, self.spec, 2.0 * self.R - r, r, self.n)

    def to_dict(self) -> dict:
        return {
            "kind": "radial",
            "R": self.R,
            "n": self.n,
            "C": self.C,
            "C0": self.C0,
            "C1": self.C1,
            "C_log": self.C_log,
            "g_inverse_at_1": self.t_one,
            "g_at_3R_over_2": float(self.gen(1.5 * self.R)),
            "inequality_min_margin": self.worst_margin,
            "inequality_worst_s": self.worst_s,
        }


def _radial_h(spec, R, C, C0, s):
    s = np.asarray(s, dtype=float)
    beta = np.sqrt(2.0 * C / R)
    k = C0 / R
    core = eval_W(spec, s) + C / R * (s + 1.0)
    core_p = eval_W_prime(spec, s) + C / R
    root = beta + k * (s - 1.0)
    h = np.where(s > 1.0, root**2, core)
    hp = np.where(s > 1.0, 2.0 * k * root, core_p)
    return h, hp


def _build_radial_generator(spec, R, C, C0):
    h = lambda s: _radial_h(spec, R, C, C0, s)[0]
    hp = lambda s: _radial_h(spec, R, C, C0, s)[1]
    # s = -1 + sigma^2 removes the square-root singularity of 1/sqrt(2h) at s = -1
    sig = np.linspace(0.0, np.sqrt(2.0), _CORE_NODES + 1)

    def integrand(q):
        ss = -1.0 + q * q
        hh = h(ss)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = 2.0 * q / np.sqrt(2.0 * hh)
        # limit at q -> 0 from h ~ (C/R + W'(-1)) q^2
        lim = 2.0 / np.sqrt(2.0 * (C / R + eval_W_prime(spec, -1.0)))
        return np.where(q == 0, lim, val)

    t = cumulative_integral(integrand, sig)
    s = -1.0 + sig**2
    s[-1] = 1.0
    t_one = float(t[-1])
    beta = np.sqrt(2.0 * C / R)
    k = C0 / R

    def right(tt):
        return 1.0 + beta / k * np.expm1(np.sqrt(2.0) * k * (tt - t_one))

    return _Generator(h, hp, t, s, right=right), t_one


def build_radial_barrier(
    spec: PotentialSpec,
    R: float,
    C: float | None = None,
    n: int = 2,
    center=None,
    n_check: int = 200_001,
) -> RadialBarrier:
    """Build the radial barrier, doubling C until the inequality for h holds.

    The check is grid-free in the sense that it evaluates
    ``h' - (C0/R) sqrt(2h) - W'`` directly (no stencil) on ``n_check`` points
    of ``[-1, g(3R/2)]``; it also requires ``g(R) > 1``.
    """
    _require_truncated(spec)
    if R < 2:
        raise ValueError("R must be at least 2")
    C0 = 2.0 * (n - 1)
    C = 1.0 if C is None else float(C)
    for _ in range(_MAX_DOUBLINGS):
        gen, t_one = _build_radial_generator(spec, R, C, C0)
        s_max = float(gen(1.5 * R))
        s = np.concatenate([np.linspace(-1.0, 1.0, n_check), np.linspace(1.0, s_max, n_check)])
        hh, hp = _radial_h(spec, R, C, C0, s)
        margin = hp - C0 / R * np.sqrt(2.0 * hh) - eval_W_prime(spec, s)
        i = int(np.argmin(margin))
        if margin[i] > 0 and t_one < R:
            c = np.zeros(n) if center is None else np.asarray(center, dtype=float)
            return RadialBarrier(
                spec, float(R), n, C, C0, c, gen,
                t_one=t_one,
                C1=(s_max - 1.0) / np.sqrt(R),
                C_log=t_one / np.log(R),
                worst_s=float(s[i]),
                worst_margin=float(margin[i]),
            )
        C *= 2.0
    raise BarrierError(f"radial inequality fails at s={s[i]:.6g} (margin {margin[i]:.3e}) after C-escalation")


# -- annular subsolution ---------------------------------------------------------


@dataclass(eq=False)
class AnnularSubsolution:
    """``Phi(x) = a * G(rho0 - |x - center|)`` with ``G`` the slope-1 generator for ``W_a``.

    ``rho0`` defaults to ``R/eps`` and the center to ``rho0 e_n``, so that the
    sphere passes through the origin with ``Phi ~ U_a(x_n)`` nearby. ``G`` is
    defined for ``|t| <= 2R``.
    """

    spec: PotentialSpec
    a: float
    eps: float
    R: float
    n: int
    C: float
    kappa: float
    gen: _Generator = field(repr=False)
    center: np.ndarray | None = None
    rho0: float = 0.0
    tau_coeff: float = 0.0
    worst_margin: float = 0.0

    def g(self, t):
        return self.a * self.gen(t)

    def tau(self, t):
        return eval_profile_inverse(build_profile(self.spec, self.a), self.g(t))

    def signed_distance(self, x):
        """rho0 - |x - center|, computed without cancellation for huge rho0.

        Below the center (``x_n < c_n``) this is ``x_n + (rho0 - c_n)`` minus a
        small correction, which keeps full relative accuracy in ``d``.
        """
        x = np.atleast_2d(x)
        c = self.center
        y = x[:, :-1] - c[:-1]
        m = c[-1] - x[:, -1]
        yy = (y * y).sum(axis=1)
        am = np.abs(m)
        corr = yy / (np.sqrt(m * m + yy) + am)
        below = (x[:, -1] + (self.rho0 - c[-1])) - corr
        above = (self.rho0 - (x[:, -1] - c[-1])) - corr
        return np.where(m >= 0, below, above)

    def radius(self, x):
        return self.rho0 - self.signed_distance(x)

    def value(self, x):
        return self.g(self.signed_distance(x))

    def exact_margin(self, x):
        d = self.signed_distance(x)
        r = self.rho0 - d
        return self.a * (self.gen.d2(d) - (self.n - 1) / r * self.gen.d1(d)) - eval_W_prime(self.spec, self.g(d))

    def to_dict(self) -> dict:
        return {
            "kind": "annular",
            "a": self.a,
            "eps": self.eps,
            "R": self.R,
            "n": self.n,
            "C": self.C,
            "curvature_bound": self.kappa,
            "tau_coefficient": self.tau_coeff,
            "inequality_min_margin": self.worst_margin,
        }


def _annular_generator(Wa: PotentialSpec, R: float, eps: float, C: float, t_range: float):
    b = Wa.well
    lin = C * eps / R
    h = lambda s: eval_W(Wa, s) + 0.5 + lin * np.asarray(s, dtype=float)
    hp = lambda s: eval_W_prime(Wa, s) + lin
    s = np.linspace(-b, b, 2 * _CORE_NODES + 1)
    if np.any(h(s) <= 0):
        return None
    f = lambda q: 1.0 / np.sqrt(2.0 * h(q))
    t = cumulative_integral(f, s)
    t -= t[_CORE_NODES]
    r_lo, r_hi = np.sqrt(2.0 * h(-b)), np.sqrt(2.0 * h(b))
    t_lo, t_hi = float(t[0]), float(t[-1])

    # outside the wells h is affine, so sqrt(2h) is affine in t and
    # s - s0 = (root^2 - r0^2) / (2 lin) = (t - t0)(root + r0) / 2
    def tail(tt, t0, r0):
        root = r0 + lin * (tt - t0)
        s0 = b if t0 > 0 else -b
        return s0 + 0.5 * (tt - t0) * (root + r0)

    if lin and r_lo - lin * (t_range + t_lo) <= 0:
        return None
    gen = _Generator(h, hp, t, s, left=lambda tt: tail(tt, t_lo, r_lo), right=lambda tt: tail(tt, t_hi, r_hi))
    return gen


def build_annular_subsolution(
    spec: PotentialSpec,
    a: float,
    eps: float,
    R: float,
    n: int = 2,
    C: float | None = None,
    rho0: float | None = None,
    center=None,
    delta: float = 0.25,
    n_check: int = 200_001,
) -> AnnularSubsolution:
    """Annular perturbation of U_a; subsolution for ``|rho0 - |x - center|| <= 2R``.

    ``C`` is doubled from 1 until ``h' - kappa sqrt(2h) > W_a'`` on the whole
    range of ``G`` over [-2R, 2R], with ``kappa = (n-1) eps / (R (1 - 2 eps))``
    the largest curvature term on the domain, and ``h > 0`` there.
    """
    _require_truncated(spec)
    if a < delta:
        raise ValueError(f"slope a={a} below delta={delta}")
    if not 0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 1/2)")
    rho0 = R / eps if rho0 is None else float(rho0)
    if rho0 - 2 * R <= 0:
        raise ValueError("annulus must stay away from its center")
    kappa = (n - 1) / (rho0 - 2.0 * R)
    Wa = slope_rescaled(spec, a)
    C = 1.0 if C is None else float(C)
    for _ in range(_MAX_DOUBLINGS):
        gen = _annular_generator(Wa, R, eps, C, 2.0 * R)
        if gen is None:
            raise BarrierError(f"h is not positive on the needed range at C={C}; eps too large for R")
        s = np.linspace(float(gen(-2.0 * R)), float(gen(2.0 * R)), n_check)
        margin = gen.hprime(s) - kappa * np.sqrt(2.0 * gen.h(s)) - eval_W_prime(Wa, s)
        if margin.min() > 0:
            if center is None:
                c = np.zeros(n)
                c[-1] = rho0
            else:
                c = np.asarray(center, dtype=float)
            out = AnnularSubsolution(spec, float(a), float(eps), float(R), n, C, kappa, gen, c, rho0)
            t = np.linspace(-2.0 * R, 2.0 * R, 8001)
            t = t[t != 0]
            dev = np.abs(out.tau(t) - t) / t**2
            out.tau_coeff = float(dev.max() * R / eps)
            out.worst_margin = float(a * margin.min())
            return out
        C *= 2.0
    raise BarrierError("annular inequality fails after C-escalation")


# -- polynomial subsolution ----------------------------------------------------------


@dataclass(frozen=True)
class FlatnessPolynomial:
    """``P(x) = p + q.x - (K/2)|x'|^2`` with coefficients bounded by 1/mu and K >= mu.

    ``K = 0`` with ``q' = 0`` is accepted as the flat (translation) case.
    """

    p: float
    q: tuple[float, ...]
    K: float
    mu: float = 0.1

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        bound = 1.0 / self.mu
        if abs(self.p) > bound or np.linalg.norm(q) > bound or self.K > bound:
            raise ValueError("polynomial coefficients must be bounded by 1/mu")
        flat = self.K == 0 and np.all(q[:-1] == 0)
        if self.K < self.mu and not flat:
            raise ValueError("K must be at least mu")

    def __call__(self, x):
        x = np.atleast_2d(x)
        q = np.asarray(self.q, dtype=float)
        return self.p + x @ q - 0.5 * self.K * (x[:, :-1] ** 2).sum(axis=1)


@dataclass(eq=False)
class PolynomialSubsolution:
    poly: FlatnessPolynomial
    spec: PotentialSpec
    a: float
    eps: float
    R: float
    annular: AnnularSubsolution | None
    a_bar: float
    shift: float

    @property
    def n(self) -> int:
        return len(self.poly.q)

    def value(self, x):
        x = np.atleast_2d(x)
        if self.annular is None:
            return eval_profile(build_profile(self.spec, self.a_bar), x[:, -1] + self.shift)
        return self.annular.value(x)

    def exact_margin(self, x):
        if self.annular is None:
            return np.zeros(len(np.atleast_2d(x)))
        return self.annular.exact_margin(x)

    def rescaled(self, y):
        """Flatness rescaling on B_1: (U_a^{-1}(Phi(R y)) - R y_n) / (eps R)."""
        y = np.atleast_2d(y)
        u = self.value(self.R * y)
        return (eval_profile_inverse(build_profile(self.spec, self.a), u) - self.R * y[:, -1]) / (self.eps * self.R)

    def deviation(self, n_points: int = 100_000, strip: float = 0.2, seed: int = 0) -> dict:
        """sup over B_1 cap {|y_n| <= strip} of |rescaled - P| and C = sup / (strip^2 + eps)."""
        rng = np.random.Generator(np.random.Philox(seed))
        pts = []
        while sum(len(p) for p in pts) < n_points:
            y = rng.uniform(-1.0, 1.0, size=(n_points, self.n))
            y[:, -1] *= strip
            pts.append(y[(y * y).sum(axis=1) <= 1.0])
        y = np.concatenate(pts)[:n_points]
        dev = np.abs(self.rescaled(y) - self.poly(y))
        i = int(np.argmax(dev))
        sup = float(dev[i])
        return {"sup": sup, "C": sup / (strip**2 + self.eps), "worst_point": y[i].tolist()}


def build_polynomial_subsolution(
    poly: FlatnessPolynomial,
    a: float,
    eps: float,
    R: float,
    spec: PotentialSpec,
    delta: float = 0.25,
    eps0: float = 0.05,
) -> PolynomialSubsolution:
    """Annular subsolution with slope ``a(1 + eps q_n)`` on a sphere of radius ``R/(K eps)``.

    The sphere is centered at ``(R q'/K, R/(K eps) - p_bar R eps)`` with
    ``p_bar = p + |q'|^2/(2K)``, so that near the origin the signed distance
    is ``x_n + R eps P(x/R) + O(eps^2 R)``.
    """
    if a < delta:
        raise ValueError(f"slope a={a} below delta={delta}")
    if eps * R < poly.mu:
        raise ValueError("need eps R >= mu")
    if not 0 < eps <= eps0:
        raise ValueError(f"eps must lie in (0, {eps0}]")
    q = np.asarray(poly.q, dtype=float)
    a_bar = a * (1.0 + eps * q[-1])
    if a_bar < delta:
        raise ValueError("perturbed slope falls below delta")
    if poly.K == 0:
        return PolynomialSubsolution(poly, spec, a, eps, R, None, a_bar, poly.p * R * eps)
    qp = q[:-1]
    K = poly.K
    p_bar = poly.p + float(qp @ qp) / (2.0 * K)
    eps_bar = K * eps
    rho0 = R / eps_bar
    center = np.concatenate([R * qp / K, [rho0 - p_bar * R * eps]])
    ann = build_annular_subsolution(spec, a_bar, eps_bar, R, n=len(q), rho0=rho0, center=center, delta=delta)
    return PolynomialSubsolution(poly, spec, a, eps, R, ann, a_bar, 0.0)


# -- certification ---------------------------------------------------------------


def laplacian_at(value, x: np.ndarray, h: float) -> np.ndarray:
    """(2n+1)-point Laplacian of ``value`` at points ``x`` with spacing ``h``."""
    x = np.atleast_2d(x)
    n = x.shape[1]
    acc = -2.0 * n * value(x)
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        acc = acc + value(x + e) + value(x - e)
    return acc / h**2


def certify_subsolution(
    barrier,
    spec: PotentialSpec,
    points: np.ndarray,
    h_seq=(1 / 16, 1 / 32, 1 / 64),
    label: str = "",
    stabilize: float = 0.5,
    agree: float = 0.25,
) -> dict:
    """Stencil margins ``lap_h V - W'(V)`` at fixed ``points`` for three spacings.

    ``barrier`` needs ``value(x)`` and may provide ``exact_margin(x)``. With
    ``m1, m2, m3`` the minimum margins from coarse to fine, the stabilized
    margin is ``m3 + (m3 - m2)/3``. The verdict is PASS when the finest
    margins are positive at every point, ``|m3 - m2| <= stabilize * m3``, the
    stabilized margin is positive and, if an exact margin is available, the
    stabilized margin is within ``agree`` (relative) of its minimum.
    """
    h_seq = sorted((float(h) for h in h_seq), reverse=True)
    if len(h_seq) != 3:
        raise ValueError("need exactly three stencil spacings")
    x = np.atleast_2d(points)
    wp = eval_W_prime(spec, barrier.value(x))
    margins = [laplacian_at(barrier.value, x, h) - wp for h in h_seq]
    mins = [float(m.min()) for m in margins]
    m2, m3 = mins[1], mins[2]
    stabilized = m3 + (m3 - m2) / 3.0
    worst = int(np.argmin(margins[-1]))
    cert = {
        "label": label,
        "n_points": int(len(x)),
        "h": h_seq,
        "min_margin": mins,
        "argmin_margin": [x[int(np.argmin(m))].tolist() for m in margins],
        "stabilized_margin": stabilized,
        "finest_change": abs(m3 - m2),
        "worst_point": x[worst].tolist(),
    }
    ok = m3 > 0 and abs(m3 - m2) <= stabilize * m3 and stabilized > 0
    if hasattr(barrier, "exact_margin"):
        exact = barrier.exact_margin(x)
        e_min = float(exact.min())
        cert["exact_min_margin"] = e_min
        cert["exact_worst_point"] = x[int(np.argmin(exact))].tolist()
        cert["exact_agrees"] = bool(e_min > 0 and abs(stabilized - e_min) <= agree * e_min)
        ok = ok and cert["exact_agrees"]
    if hasattr(barrier, "to_dict"):
        cert["parameters"] = barrier.to_dict()
    cert["status"] = "PASS" if ok else "FAIL"
    return cert


def certificate_json(cert: dict) -> str:
    return json.dumps(cert, indent=2, sort_keys=True)


# -- sample sets -------------------------------------------------------------------


def annulus_points(center, r_in: float, r_out: float, spacing: float, n: int = 2, rays: int = 8, ray_spacing=None):
    """Grid points of the annulus plus dense samples along ``rays`` radial rays."""
    c = np.zeros(n) if center is None else np.asarray(center, dtype=float)
    ax = np.arange(-r_out, r_out + spacing / 2, spacing)
    mesh = np.meshgrid(*([ax] * n), indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    r = np.linalg.norm(pts, axis=1)
    pts = pts[(r >= r_in) & (r <= r_out)]
    if rays and n == 2:
        dr = ray_spacing or spacing / 16
        rr = np.arange(r_in, r_out + dr / 2, dr)
        th = np.linspace(0.0, np.pi / 4, rays)
        ray_pts = np.stack([np.outer(np.cos(th), rr).ravel(), np.outer(np.sin(th), rr).ravel()], axis=1)
        pts = np.concatenate([pts, ray_pts])
    return pts + c


def radial_certification_points(b: RadialBarrier, h_max: float, spacing=None):
    spacing = spacing or b.R / 32
    return annulus_points(b.center, b.R / 2 + h_max, 2 * b.R - h_max, spacing, b.n, ray_spacing=b.R / 2048)


def annular_certification_points(s: AnnularSubsolution, h_max: float, half_width=None, spacing=None, rays: int = 9):
    """Samples of the shell near ``center - rho0 e_n`` plus radial rays there."""
    n = s.n
    w = half_width if half_width is not None else 2.0 * s.R
    spacing = spacing or s.R / 32
    top = s.center.copy()
    top[-1] -= s.rho0
    ax = np.arange(-w, w + spacing / 2, spacing)
    mesh = np.meshgrid(*([ax] * n), indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1) + top
    d = s.signed_distance(pts)
    lim = 2.0 * s.R - 2.0 * h_max
    pts = pts[np.abs(d) <= lim]
    # dense radial rays through the transition layer
    dd = np.arange(-min(lim, 8.0), min(lim, 8.0), s.R / 4096)
    angles = np.linspace(-w / s.rho0, w / s.rho0, rays) if n == 2 else [0.0]
    ray_pts = []
    for th in angles:
        direction = np.zeros(n)
        direction[-1] = -np.cos(th)
        direction[0] = np.sin(th)
        ray_pts.append(s.center + np.outer(s.rho0 - dd, direction))
    return np.concatenate([pts] + ray_pts)
