"""Double-well potentials W, their derivatives, the antiderivative H of sqrt(2W)
and the surface tension c0.

Every potential is a base shape rescaled as ``t -> (R/M)^2 * W_base(M t)``;
``R = M = 1`` gives the base shape itself. The slope rescaling
``W_a(t) = a^-2 W(a t)`` is the case ``M = a, R = 1``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.interpolate import PchipInterpolator

from ._quad import cumulative_integral, hermite

KINDS = ("quartic", "truncated-quartic", "generic-tabulated")

_H_PANELS = 2048


@dataclass(frozen=True, eq=False)
class PotentialSpec:
    """A double-well potential.

    Attributes:
        kind: one of ``KINDS``.
        M: argument scale; the wells sit at ``+-1/M``.
        R: radius parameter; the amplitude factor is ``(R/M)**2``.
        samples: ``(t, W)`` table on ``[-1, 1]`` for the tabulated kind.
    """

    kind: str = "truncated-quartic"
    M: float = 1.0
    R: float = 1.0
    samples: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if not (self.M > 0 and self.R > 0):
            raise ValueError("M and R must be positive")
        if self.kind == "generic-tabulated":
            if self.samples is None:
                raise ValueError("generic-tabulated potential needs samples")
            t, w = (np.asarray(a, dtype=float) for a in self.samples)
            if t.ndim != 1 or t.shape != w.shape or len(t) < 1001:
                raise ValueError("need at least 1001 (t, W) samples")
            if not (np.isclose(t[0], -1.0) and np.isclose(t[-1], 1.0)) or np.any(np.diff(t) <= 0):
                raise ValueError("samples must increase strictly from -1 to 1")
            if np.any(w < 0):
                raise ValueError("W must be nonnegative")
            object.__setattr__(self, "samples", (t, w))

    # -- scaling -----------------------------------------------------------

    @property
    def amplitude(self) -> float:
        return (self.R / self.M) ** 2

    @property
    def well(self) -> float:
        """Position of the right well; W vanishes beyond it for truncated kinds."""
        return 1.0 / self.M

    @property
    def truncated(self) -> bool:
        return self.kind != "quartic"

    # -- base shape --------------------------------------------------------

    @cached_property
    def _pchip(self) -> PchipInterpolator:
        t, w = self.samples
        return PchipInterpolator(t, w, extrapolate=False)

    def _base(self, x: np.ndarray, order: int) -> np.ndarray:
        inside = np.abs(x) <= 1.0
        if self.kind == "generic-tabulated":
            xc = np.clip(x, -1.0, 1.0)
            val = self._pchip(xc, order) if order else self._pchip(xc)
            return np.where(inside, val, 0.0)
        if order == 0:
            val = (1.0 - x * x) ** 2
        elif order == 1:
            val = -4.0 * x * (1.0 - x * x)
        else:
            val = 12.0 * x * x - 4.0
        if self.kind == "quartic":
            return val
        return np.where(inside, val, 0.0)

    def __call__(self, t):
        return eval_W(self, t)

    # -- tables ------------------------------------------------------------

    @cached_property
    def _H_base(self):
        # H_base(x) = int_0^x sqrt(2 W_base); tabulated on [-1, 1] with exact slopes
        nodes = np.linspace(-1.0, 1.0, 2 * _H_PANELS + 1)
        integrand = lambda x: np.sqrt(2.0 * np.maximum(self._base(x, 0), 0.0))
        cum = cumulative_integral(integrand, nodes)
        cum -= cum[_H_PANELS]
        return hermite(nodes, cum, integrand(nodes))

    def to_text(self) -> str:
        lines = [f"kind = {self.kind}", f"M = {self.M!r}", f"R = {self.R!r}"]
        if self.samples is not None:
            lines.append("samples:")
            lines.append("t,W")
            t, w = self.samples
            lines.extend(f"{a!r},{b!r}" for a, b in zip(t.tolist(), w.tolist()))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "PotentialSpec":
        params: dict[str, str] = {}
        rows = text.splitlines()
        samples = None
        for i, line in enumerate(rows):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if line == "samples:":
                data = np.loadtxt(io.StringIO("\n".join(rows[i + 2:])), delimiter=",", ndmin=2)
                samples = (data[:, 0], data[:, 1])
                break
            key, _, value = line.partition("=")
            params[key.strip()] = value.strip()
        return cls(
            kind=params.get("kind", "truncated-quartic"),
            M=float(params.get("M", 1.0)),
            R=float(params.get("R", 1.0)),
            samples=samples,
        )


def eval_W(spec: PotentialSpec, t):
    """Potential value W(t); vectorized over ``t``."""
    t = np.asarray(t, dtype=float)
    return spec.amplitude * spec._base(spec.M * t, 0)


def eval_W_derivatives(spec: PotentialSpec, t):
    """Return ``(W'(t), W''(t))``.

    At the wells of a truncated potential the one-sided values from inside the
    interval are returned; outside, both vanish.
    """
    t = np.asarray(t, dtype=float)
    x = spec.M * t
    a = spec.amplitude
    return a * spec.M * spec._base(x, 1), a * spec.M**2 * spec._base(x, 2)


def eval_W_prime(spec: PotentialSpec, t):
    t = np.asarray(t, dtype=float)
    return spec.amplitude * spec.M * spec._base(spec.M * t, 1)


def lipschitz_W_prime(spec: PotentialSpec) -> float:
    """sup |W''| over the well interval, the Lipschitz constant of W' there."""
    if spec.kind == "generic-tabulated":
        t = spec.samples[0]
        mids = 0.5 * (t[1:] + t[:-1])
        base = max(np.abs(spec._pchip(t, 2)).max(), np.abs(spec._pchip(mids, 2)).max())
    else:
        base = 8.0
    return spec.amplitude * spec.M**2 * float(base)


def sup_W(spec: PotentialSpec) -> float:
    if spec.kind == "generic-tabulated":
        base = float(spec.samples[1].max())
    else:
        base = 1.0
    return spec.amplitude * base


def antiderivative_H(spec: PotentialSpec, s):
    """H(s) = int_0^s sqrt(2 W(xi)) dxi, normalized by H(0) = 0.

    For truncated kinds H is constant beyond the wells.
    """
    s = np.asarray(s, dtype=float)
    x = spec.M * s
    scale = np.sqrt(spec.amplitude) / spec.M
    xc = np.clip(x, -1.0, 1.0)
    val = spec._H_base(xc)
    if spec.kind == "quartic":
        # sqrt(2W) = sqrt2 |1 - x^2| keeps growing past the wells
        out = np.abs(x) > 1.0
        ax = np.abs(x)
        tail = np.sqrt(2.0) * (ax**3 / 3.0 - ax + 2.0 / 3.0)
        val = np.where(out, val + np.sign(x) * tail, val)
    return scale * val


def surface_tension_c0(spec: PotentialSpec) -> float:
    """c0 = int over the well interval of sqrt(2W) = H(well) - H(-well)."""
    b = spec.well
    return float(antiderivative_H(spec, b) - antiderivative_H(spec, -b))


def rescaled_potential_WR(spec: PotentialSpec, R: float, M: float) -> PotentialSpec:
    """The potential ``v -> (R/M)^2 W(M v)``."""
    if R <= 0 or M <= 0:
        raise ValueError("R and M must be positive")
    return PotentialSpec(kind=spec.kind, M=spec.M * M, R=spec.R * R, samples=spec.samples)


def slope_rescaled(spec: PotentialSpec, a: float) -> PotentialSpec:
    """``W_a(t) = a^-2 W(a t)``."""
    return rescaled_potential_WR(spec, 1.0, a)


def tabulated_from(spec: PotentialSpec, n_samples: int = 2001) -> PotentialSpec:
    """Sample a (base-scale) potential on [-1, 1] into a generic-tabulated spec."""
    t = np.linspace(-1.0, 1.0, n_samples)
    return PotentialSpec(kind="generic-tabulated", samples=(t, spec._base(t, 0)))


TRUNCATED_QUARTIC = PotentialSpec()
