"""One-dimensional solutions U_a of u'' = W'(u).

``U_a`` is the inverse of ``G_lambda(s) = int_0^s (2W + lambda)^(-1/2)``
with ``lambda = a^2``. For ``a > 0`` the profile is exactly linear with slope
``a`` once it leaves the well interval; ``U_0`` is the bounded heteroclinic.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ._quad import cumulative_integral, hermite, vectorized_bisect
from .potential import PotentialSpec, eval_W, eval_W_derivatives

DEFAULT_SAMPLES = 4096
DELTA_FLOOR = 0.01

_G_PANELS = 4096
# U_0 is tabulated until it is this close (relative) to the wells
_U0_GAP = 1e-10


class _GTable:
    """Tabulated G_lambda for one (potential, lambda) pair."""

    def __init__(self, spec: PotentialSpec, lam: float):
        self.spec = spec
        self.lam = lam
        b = spec.well
        self.b = b
        if lam > 0:
            nodes = np.linspace(-b, b, 2 * _G_PANELS + 1)
            f = lambda s: 1.0 / np.sqrt(2.0 * eval_W(spec, s) + lam)
            cum = cumulative_integral(f, nodes)
            cum -= cum[_G_PANELS]
            self._spline = hermite(nodes, cum, f(nodes))
            self.G_minus, self.G_plus = float(cum[0]), float(cum[-1])
        else:
            # log singularities at +-b are removed analytically; the bounded
            # remainder is tabulated in z with s = b tanh(z)
            w2p = eval_W_derivatives(spec, np.array([b, -b]))[1]
            if np.any(w2p <= 0):
                raise ValueError("U_0 needs W'' > 0 at the wells")
            self.k_plus, self.k_minus = np.sqrt(w2p)
            self.zmax = np.arctanh(1.0 - _U0_GAP)
            z = np.linspace(-self.zmax, self.zmax, 2 * _G_PANELS + 1)

            def integrand(zz):
                s = b * np.tanh(zz)
                return self._remainder(s) * b / np.cosh(zz) ** 2

            cum = cumulative_integral(integrand, z, order=12)
            cum -= cum[_G_PANELS]
            self._spline = hermite(z, cum, integrand(z))

    def _remainder(self, s):
        b = self.b
        w = np.maximum(2.0 * eval_W(self.spec, s), 1e-300)
        return 1.0 / np.sqrt(w) - 1.0 / (self.k_plus * (b - s)) - 1.0 / (self.k_minus * (b + s))

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        b = self.b
        if self.lam > 0:
            sc = np.clip(s, -b, b)
            core = self._spline(sc)
            slope = 1.0 / np.sqrt(self.lam)
            return np.where(
                s > b, self.G_plus + (s - b) * slope,
                np.where(s < -b, self.G_minus + (s + b) * slope, core),
            )
        if np.any(np.abs(s) >= b):
            raise ValueError("G_0 is only defined strictly between the wells")
        z = np.arctanh(s / b)
        zc = np.clip(z, -self.zmax, self.zmax)
        rem = self._spline(zc)
        # beyond the tabulated z-range the remainder is continued linearly
        rem = rem + (z - zc) * self._remainder(b * np.tanh(zc)) * b / np.cosh(zc) ** 2
        return rem - np.log1p(-s / b) / self.k_plus + np.log1p(s / b) / self.k_minus

    def derivative(self, s):
        s = np.asarray(s, dtype=float)
        return 1.0 / np.sqrt(2.0 * eval_W(self.spec, s) + self.lam)


@lru_cache(maxsize=64)
def _g_table(spec: PotentialSpec, lam: float) -> _GTable:
    return _GTable(spec, lam)


def eval_G_lambda(spec: PotentialSpec, lam: float, s):
    """G_lambda(s); linear with slope lambda^(-1/2) outside the wells when lambda > 0."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    if lam > 0 and not spec.truncated:
        s_arr = np.asarray(s, dtype=float)
        if np.any(np.abs(s_arr) > spec.well):
            raise ValueError("G_lambda beyond the wells needs a truncated potential")
    return _g_table(spec, float(lam))(s)


@dataclass(frozen=True, eq=False)
class Profile1D:
    """Tabulated one-dimensional solution U_a.

    ``t`` and ``u`` hold the core table; ``t_minus``/``t_plus`` are the anchors
    where the profile reaches the wells (for ``a = 0`` they bound the
    tabulated window instead).
    """

    spec: PotentialSpec
    a: float
    t: np.ndarray
    u: np.ndarray
    t_minus: float
    t_plus: float
    tail_rate: tuple[float, float] = (0.0, 0.0)
    tail_offset: tuple[float, float] = (0.0, 0.0)

    @property
    def lam(self) -> float:
        return self.a * self.a

    def slope(self, u):
        return np.sqrt(2.0 * eval_W(self.spec, u) + self.lam)

    def __call__(self, t):
        return eval_profile(self, t)

    def inverse(self, s):
        return eval_profile_inverse(self, s)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# a={self.a!r} t_minus={self.t_minus!r} t_plus={self.t_plus!r}\n")
        buf.write("t,U\n")
        np.savetxt(buf, np.column_stack([self.t, self.u]), delimiter=",", fmt="%.17g")
        return buf.getvalue()


@lru_cache(maxsize=64)
def build_profile(spec: PotentialSpec, a: float, samples: int = DEFAULT_SAMPLES) -> Profile1D:
    """Tabulate U_a as the numerical inverse of G_{a^2}.

    Each sample is found by bisection on G followed by one Newton polish.
    """
    if a < 0:
        raise ValueError("slope a must be nonnegative")
    lam = float(a) ** 2
    table = _g_table(spec, lam)
    b = spec.well
    if lam > 0:
        if not spec.truncated:
            raise ValueError("profiles with a > 0 need a truncated potential")
        t_minus, t_plus = table.G_minus, table.G_plus
        t = np.linspace(t_minus, t_plus, samples)
        s = vectorized_bisect(table, t[1:-1], -b, b)
        s = s - (table(s) - t[1:-1]) / table.derivative(s)
        u = np.concatenate([[-b], np.clip(s, -b, b), [b]])
        prof = Profile1D(spec, float(a), t, u, t_minus, t_plus)
    else:
        lo = -b * np.tanh(table.zmax)
        hi = b * np.tanh(table.zmax)
        T = float(min(table(hi), -table(lo)))
        t = np.linspace(-T, T, samples)
        z = vectorized_bisect(lambda zz: table(b * np.tanh(zz)), t, -table.zmax, table.zmax)
        s = b * np.tanh(z)
        s = s - (table(s) - t) / table.derivative(s)
        u = np.clip(s, lo, hi)
        rates, offsets = [], []
        # exponential tails fitted to the last decade of samples on each side
        k = max(samples // 10, 8)
        for tt, uu in [(-t[:k], b + u[:k]), (t[-k:], b - u[-k:])]:
            slope, icpt = np.polyfit(tt, np.log(uu), 1)
            rates.append(float(-slope))
            offsets.append(float(icpt))
        prof = Profile1D(spec, 0.0, t, u, -T, T, tuple(rates), tuple(offsets))
    object.__setattr__(prof, "_spline", hermite(prof.t, prof.u, prof.slope(prof.u)))
    return prof


def eval_profile(p: Profile1D, t):
    """U_a(t): Hermite interpolation on the core table, analytic tails."""
    t = np.asarray(t, dtype=float)
    tc = np.clip(t, p.t_minus, p.t_plus)
    core = p._spline(tc)
    b = p.spec.well
    if p.a > 0:
        return np.where(
            t > p.t_plus, b + p.a * (t - p.t_plus),
            np.where(t < p.t_minus, -b + p.a * (t - p.t_minus), core),
        )
    (r_lo, r_hi), (c_lo, c_hi) = p.tail_rate, p.tail_offset
    with np.errstate(over="ignore"):
        hi_tail = b - np.exp(c_hi - r_hi * t)
        lo_tail = -b + np.exp(c_lo + r_lo * t)
    return np.where(t > p.t_plus, hi_tail, np.where(t < p.t_minus, lo_tail, core))


def eval_profile_inverse(p: Profile1D, s):
    """U_a^{-1}(s), which is G_{a^2}(s) itself."""
    s = np.asarray(s, dtype=float)
    if p.a == 0 and np.any(np.abs(s) >= p.spec.well):
        raise ValueError("U_0^{-1} is only defined strictly between the wells")
    return _g_table(p.spec, p.lam)(s)


def profile_derivative(p: Profile1D, t):
    """U_a'(t) from the first integral (U')^2 = 2W(U) + a^2."""
    return p.slope(eval_profile(p, t))


def slope_composition_deviation(
    spec: PotentialSpec,
    a: float,
    gamma: float,
    window: tuple[float, float] = (-100.0, 100.0),
    n_points: int = 100_000,
    delta: float = DELTA_FLOOR,
) -> float:
    """sup over ``window`` of |U_a^{-1}(U_{gamma a}(t)) - gamma t|."""
    if a < delta:
        raise ValueError(f"slope a={a} below the floor delta={delta}")
    if not 0.5 < gamma < 2.0:
        raise ValueError("gamma must lie in (1/2, 2)")
    t = np.linspace(window[0], window[1], n_points)
    p_a = build_profile(spec, float(a))
    p_ga = build_profile(spec, float(gamma * a))
    dev = eval_profile_inverse(p_a, eval_profile(p_ga, t)) - gamma * t
    return float(np.max(np.abs(dev)))
