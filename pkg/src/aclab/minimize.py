"""Local minimization of the discrete Allen-Cahn energy with Dirichlet data, and
exact minimization of the one-dimensional Dirichlet/perimeter functional.

The descent scheme is the semi-implicit step

    (I + tau L) u_new = u - tau W'(u)        on free nodes,

with ``L = -lap_h``; it decreases the discrete energy for ``tau <= 2 / Lip(W')``.
A Newton iteration with Armijo backtracking on the same energy is used to
accelerate convergence once the flow is close to a nondegenerate critical point.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import RegularGridInterpolator

from .fields import ScalarField, _face_mask, cell_energy, euler_lagrange_residual
from .potential import PotentialSpec, eval_W_derivatives, eval_W_prime, lipschitz_W_prime

log = logging.getLogger(__name__)

INIT_MODES = ("harmonic", "profile", "constant", "given")
_DIRECT_LIMIT = 400_000
# minimum degree on A + A^T beats COLAMD on the symmetric grid operators here
_ORDERING = "MMD_AT_PLUS_A"
_ENERGY_SLACK = 1e-12


class ConvergenceError(RuntimeError):
    """Raised when a minimization exhausts its iteration budget."""

    def __init__(self, message: str, result: "MinimizeResult"):
        super().__init__(message)
        self.result = result


@dataclass
class MinimizeConfig:
    tau: float = 0.125
    max_iter: int = 20_000
    tol: float = 1e-8
    init: str = "harmonic"
    init_value: float = 0.0
    profile_a: float = 1.0
    direction: tuple[float, ...] | None = None
    newton: bool = True
    linear_rtol: float = 1e-10
    coarsen: int = 0

    def validate(self, spec: PotentialSpec) -> None:
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        lip = lipschitz_W_prime(spec)
        if self.tau > 2.0 / lip:
            raise ValueError(f"tau={self.tau} outside the stability window (<= {2.0 / lip:.4g})")
        if self.tol <= 0:
            raise ValueError("tolerance must be positive")
        if self.init not in INIT_MODES:
            raise ValueError(f"init must be one of {INIT_MODES}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")
        if self.coarsen < 0:
            raise ValueError("coarsen must be nonnegative")


@dataclass
class MinimizeResult:
    field: ScalarField
    converged: bool
    iterations: int
    residual: float
    energy_history: list[float] = field(default_factory=list)
    residual_history: list[float] = field(default_factory=list)
    steps: list[str] = field(default_factory=list)
    coarse_iterations: int = 0

    def metadata(self) -> dict:
        return {
            "coarse_iterations": self.coarse_iterations,
            "converged": self.converged,
            "iterations": self.iterations,
            "residual": self.residual,
            "energy": self.energy_history[-1] if self.energy_history else None,
            "newton_steps": self.steps.count("newton"),
            "flow_steps": self.steps.count("flow"),
            "convex_newton_steps": self.steps.count("convex-newton"),
        }


class _System:
    """-lap_h split into free/fixed blocks for one grid."""

    def __init__(self, f: ScalarField):
        if np.any(~f.fixed & _face_mask(f.shape)):
            raise ValueError("nodes on the box faces must be fixed")
        ops = []
        for k, m in enumerate(f.shape):
            d = sp.diags([-np.ones(m - 1), 2.0 * np.ones(m), -np.ones(m - 1)], [-1, 0, 1])
            eyes = [sp.identity(s) for s in f.shape]
            eyes[k] = d
            op = eyes[0]
            for e in eyes[1:]:
                op = sp.kron(op, e)
            ops.append(op)
        L = (sum(ops) / f.h**2).tocsr()
        flat = f.fixed.ravel()
        self.free = np.flatnonzero(~flat)
        self.fix = np.flatnonzero(flat)
        self.L_ff = L[self.free][:, self.free].tocsc()
        self.L_fb = L[self.free][:, self.fix].tocsr()
        self.shape = f.shape
        self._flow = {}

    def rhs_boundary(self, u: np.ndarray) -> np.ndarray:
        return self.L_fb @ u.ravel()[self.fix]

    def solve(self, A, b, x0=None, rtol=1e-10, spd=True):
        if A.shape[0] <= _DIRECT_LIMIT:
            return spla.spsolve(A.tocsc(), b, permc_spec=_ORDERING)
        if spd:
            x, info = spla.cg(A, b, x0=x0, rtol=rtol, atol=0.0, maxiter=20 * A.shape[0])
        else:
            x, info = spla.minres(A, b, x0=x0, rtol=rtol, maxiter=20 * A.shape[0])
        if info != 0:
            raise RuntimeError(f"linear solve failed (info={info})")
        return x

    def flow_matrix(self, tau):
        if tau not in self._flow:
            self._flow[tau] = (sp.identity(len(self.free), format="csc") + tau * self.L_ff).tocsc()
        return self._flow[tau]

    def flow_solve(self, tau, b, x0=None, rtol=1e-10):
        """Solve ``(I + tau L_ff) x = b`` reusing one factorization per ``tau``."""
        A = self.flow_matrix(tau)
        if A.shape[0] > _DIRECT_LIMIT:
            return self.solve(A, b, x0=x0, rtol=rtol)
        key = ("lu", tau)
        if key not in self._flow:
            self._flow[key] = spla.splu(A, permc_spec=_ORDERING).solve
        return self._flow[key](b)


_SYSTEMS: dict = {}


def _system(f: ScalarField) -> _System:
    key = (f.shape, f.h, f.fixed.tobytes())
    sys_ = _SYSTEMS.get(key)
    if sys_ is None:
        if len(_SYSTEMS) > 8:
            _SYSTEMS.clear()
        sys_ = _SYSTEMS[key] = _System(f)
    return sys_


def total_energy(f: ScalarField, spec: PotentialSpec) -> float:
    return float(cell_energy(f.values, f.h, spec).sum())


def harmonic_extension(f: ScalarField, rtol: float = 1e-10) -> ScalarField:
    """Discrete harmonic function with ``f``'s values on fixed nodes."""
    s = _system(f)
    u = f.values.copy().ravel()
    u[s.free] = s.solve(s.L_ff, -s.rhs_boundary(f.values), rtol=rtol)
    return f.with_values(u.reshape(f.shape))


def gradient_flow_step(f: ScalarField, spec: PotentialSpec, tau: float, rtol: float = 1e-10) -> ScalarField:
    """One semi-implicit step; fixed nodes are copied unchanged."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    s = _system(f)
    u = f.values.ravel().copy()
    uf = u[s.free]
    b = uf - tau * eval_W_prime(spec, uf) - tau * s.rhs_boundary(f.values)
    u[s.free] = s.flow_solve(tau, b, x0=uf, rtol=rtol)
    return f.with_values(u.reshape(f.shape))


def _newton_step(f: ScalarField, spec: PotentialSpec, energy: float, rtol: float, convexify: bool = False):
    """Newton direction with Armijo backtracking; ``convexify`` drops the negative
    part of W'' so the Hessian is positive definite and the direction descends."""
    s = _system(f)
    u = f.values.ravel()
    uf = u[s.free]
    w1, w2 = eval_W_derivatives(spec, uf)
    grad = s.L_ff @ uf + s.rhs_boundary(f.values) + w1
    if convexify:
        w2 = np.maximum(w2, 0.0)
    H = (s.L_ff + sp.diags(w2)).tocsc()
    try:
        d = s.solve(H, -grad, rtol=rtol, spd=convexify)
    except RuntimeError:
        return None
    if not np.all(np.isfinite(d)):
        return None
    slope = float(grad @ d) * f.h**f.n
    if slope >= 0:
        return None
    t = 1.0
    for _ in range(30):
        v = u.copy()
        v[s.free] = uf + t * d
        trial = f.with_values(v.reshape(f.shape))
        e = total_energy(trial, spec)
        if e <= energy + 1e-4 * t * slope:
            return trial, e
        t *= 0.5
    return None


def _initial(f: ScalarField, spec: PotentialSpec, cfg: MinimizeConfig) -> ScalarField:
    if cfg.init == "given":
        return f.copy()
    if cfg.init == "harmonic":
        return harmonic_extension(f, cfg.linear_rtol)
    u = f.values.copy()
    if cfg.init == "constant":
        u[~f.fixed] = cfg.init_value
    else:
        from .profiles import build_profile, eval_profile

        nu = np.zeros(f.n)
        nu[-1] = 1.0
        if cfg.direction is not None:
            nu = np.asarray(cfg.direction, dtype=float)
            nu = nu / np.linalg.norm(nu)
        proj = sum(m * c for m, c in zip(f.mesh(), nu))
        seed = np.broadcast_to(eval_profile(build_profile(spec, cfg.profile_a), proj), f.shape)
        u[~f.fixed] = seed[~f.fixed]
    return f.with_values(u)


def _coarse_start(f: ScalarField, spec: PotentialSpec, cfg: MinimizeConfig):
    """Minimize on every other node and interpolate back; None if the grid does not halve."""
    shape = np.array(f.shape)
    if np.any((shape - 1) % 2) or np.any((shape - 1) // 2 < 4):
        return None
    if not np.array_equal(f.fixed, _face_mask(f.shape)):
        return None
    sub = tuple(slice(None, None, 2) for _ in shape)
    coarse = ScalarField(f.values[sub].copy(), 2.0 * f.h, f.origin)
    c_cfg = replace(cfg, coarsen=cfg.coarsen - 1)
    res = minimize_energy(coarse, spec, c_cfg, strict=False)
    interp = RegularGridInterpolator([res.field.axis(k) for k in range(f.n)], res.field.values)
    mesh = np.meshgrid(*[np.clip(f.axis(k), res.field.axis(k)[0], res.field.axis(k)[-1]) for k in range(f.n)], indexing="ij")
    u = interp(np.stack([m.ravel() for m in mesh], axis=1)).reshape(f.shape)
    u[f.fixed] = f.values[f.fixed]
    return f.with_values(u), res.iterations + res.coarse_iterations


def minimize_energy(f: ScalarField, spec: PotentialSpec, cfg: MinimizeConfig | None = None, strict: bool = True) -> MinimizeResult:
    """Minimize the discrete energy with ``f``'s fixed-node values as Dirichlet data.

    Iterates until the Euler-Lagrange residual is below ``cfg.tol``. The energy
    is checked to be non-increasing at every step. With ``cfg.coarsen = k`` the
    problem is first solved on up to ``k`` nested grids of spacing ``2h, 4h, ...``
    and the interpolated coarse minimizer is the starting point.
    """
    cfg = cfg or MinimizeConfig()
    cfg.validate(spec)
    if not np.any(~f.fixed):
        return MinimizeResult(f.copy(), True, 0, 0.0)
    start = _coarse_start(f, spec, cfg) if cfg.coarsen > 0 else None
    if start is not None:
        cur, coarse_its = start
    else:
        cur, coarse_its = _initial(f, spec, cfg), 0
    energy = total_energy(cur, spec)
    res = euler_lagrange_residual(cur, spec)
    out = MinimizeResult(cur, res <= cfg.tol, 0, res, [energy], [res], coarse_iterations=coarse_its)
    use_newton = cfg.newton
    it = 0
    while res > cfg.tol and it < cfg.max_iter:
        it += 1
        step = None
        if use_newton:
            step = _newton_step(cur, spec, energy, cfg.linear_rtol)
            kind = "newton"
            if step is None:
                step = _newton_step(cur, spec, energy, cfg.linear_rtol, convexify=True)
                kind = "convex-newton"
        if step is not None:
            nxt, e_new = step
        else:
            nxt = gradient_flow_step(cur, spec, cfg.tau, cfg.linear_rtol)
            e_new = total_energy(nxt, spec)
            kind = "flow"
        if e_new > energy + _ENERGY_SLACK * max(1.0, abs(energy)):
            raise AssertionError(f"energy increased at iteration {it}: {energy!r} -> {e_new!r}")
        cur, energy = nxt, e_new
        res = euler_lagrange_residual(cur, spec)
        out.energy_history.append(energy)
        out.residual_history.append(res)
        out.steps.append(kind)
    out.field = cur
    out.iterations = it
    out.residual = res
    out.converged = res <= cfg.tol
    log.debug("minimize_energy: %s", out.metadata())
    if not out.converged and strict:
        raise ConvergenceError(f"no convergence after {it} iterations, residual {res:.3e}", out)
    return out


# -- one-dimensional Dirichlet/perimeter problem -------------------------------


@dataclass
class I1DResult:
    """Minimizer of the Dirichlet/perimeter functional on an interval.

    ``knots``/``v`` describe the piecewise-linear ``v``; ``intervals`` is the
    set ``E`` as a list of closed intervals.
    """

    knots: np.ndarray
    v: np.ndarray
    intervals: list[tuple[float, float]]
    value: float

    def __call__(self, x):
        return np.interp(x, self.knots, self.v)


def minimize_I_1d(v_left: float, v_right: float, c0: float, length: float, n_grid: int = 64) -> I1DResult:
    """Minimize ``int v'^2/2 + c0 * #(interior interface points)`` over v >= 0, v = 0 on E.

    Candidates are E empty, E = [0, s], E = [s, length], E = [s1, s2] and
    E = the whole interval, with v linear off E. Interval endpoints are taken on
    a uniform grid plus the degenerate limits. Ties go to E empty.
    """
    if v_left < 0 or v_right < 0:
        raise ValueError("boundary data must be nonnegative")
    if c0 <= 0 or length <= 0:
        raise ValueError("c0 and length must be positive")
    L = float(length)
    vl, vr = float(v_left), float(v_right)
    best = I1DResult(np.array([0.0, L]), np.array([vl, vr]), [], (vr - vl) ** 2 / (2 * L))
    s = np.linspace(0.0, L, n_grid + 1)[1:-1]

    def offer(value, knots, v, intervals):
        nonlocal best
        if value < best.value - 1e-15 * max(1.0, abs(best.value)):
            best = I1DResult(np.asarray(knots, float), np.asarray(v, float), intervals, float(value))

    if vl == 0 and vr == 0:
        offer(0.0, [0.0, L], [0.0, 0.0], [(0.0, L)])
    if vl == 0:
        vals = c0 + vr**2 / (2 * (L - s))
        i = int(np.argmin(vals))
        offer(vals[i], [0.0, s[i], L], [0.0, 0.0, vr], [(0.0, float(s[i]))])
    if vr == 0:
        vals = c0 + vl**2 / (2 * s)
        i = int(np.argmin(vals))
        offer(vals[i], [0.0, s[i], L], [vl, 0.0, 0.0], [(float(s[i]), L)])
    s1, s2 = np.meshgrid(s, s, indexing="ij")
    ok = s1 < s2
    vals = np.where(ok, 2 * c0 + vl**2 / (2 * s1) + vr**2 / (2 * (L - np.where(ok, s2, 0.0))), np.inf)
    i, j = np.unravel_index(int(np.argmin(vals)), vals.shape)
    if np.isfinite(vals[i, j]):
        a, b = float(s[i]), float(s[j])
        offer(vals[i, j], [0.0, a, b, L], [vl, 0.0, 0.0, vr], [(a, b)])
    return best
