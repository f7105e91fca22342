"""Batch runner: ``aclab <subcommand> [--config FILE] [--key value ...]``.

Parameters are flat ``key = value`` pairs with at most one dotted level
(``grid.h``). Defaults are overridden by the config file, which is
overridden by flags. Every run writes its artifacts plus ``manifest.json``
echoing the fully resolved parameters, so the manifest alone reproduces it.

Exit codes: 0 success, 2 validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import traceback
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3


class NumericalFailure(RuntimeError):
    """A computation finished but its verdict is negative."""


# -- parameter types -----------------------------------------------------------------


def real(text) -> float:
    if isinstance(text, (int, float)):
        return float(text)
    return float(Fraction(str(text).strip()))


def reals(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [real(t) for t in text]
    text = str(text).strip()
    return [real(t) for t in text.split(",")] if text else []


def optional_real(text):
    return None if text in (None, "", "auto", "none") else real(text)


def boolean(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def choice(*options):
    def conv(text):
        t = str(text).strip()
        if t not in options:
            raise ValueError(f"{t!r} is not one of {options}")
        return t

    return conv


def text(value) -> str:
    return str(value).strip()


COMMON = {
    "potential": (choice("truncated-quartic", "quartic"), "truncated-quartic", "double-well potential"),
    "out": (text, ".", "output directory"),
    "seed": (int, 0, "seed of the Philox generator"),
}

FIELD_INPUT = {
    "input": (text, "", "field file (.csv or .bin)"),
    "center": (reals, "", "ball center (default: box center)"),
    "radii": (reals, "2,4,8,16", "radii of the sweep"),
}

SCHEMAS = {
    "profile": {
        "a": (real, 0.0, "tail slope"),
        "samples": (int, 4096, "profile table size"),
        "t.min": (real, -10.0, "first output abscissa"),
        "t.max": (real, 10.0, "last output abscissa"),
        "t.step": (real, 0.01, "output spacing"),
    },
    "minimize": {
        "input": (text, "", "field file with boundary data (default: profile data on a box)"),
        "dim": (int, 2, "dimension of the generated box"),
        "box.lower": (real, -8.0, "lower box corner (all axes)"),
        "box.upper": (real, 8.0, "upper box corner (all axes)"),
        "grid.h": (real, 0.125, "grid spacing"),
        "boundary.a": (real, 1.0, "slope of the profile boundary data"),
        "boundary.direction": (reals, "", "profile direction (default e_n)"),
        "solver.tau": (real, 0.125, "flow step"),
        "solver.tol": (real, 1e-8, "residual tolerance"),
        "solver.max_iter": (int, 20000, "iteration cap"),
        "solver.init": (choice("harmonic", "profile", "constant", "given"), "harmonic", "initial guess"),
        "solver.newton": (boolean, True, "Newton acceleration"),
        "output.format": (choice("csv", "bin"), "csv", "field dump format"),
    },
    "barrier": {
        "kind": (choice("radial", "annular", "polynomial"), "radial", "construction"),
        "R": (real, 64.0, "radius"),
        "n": (int, 2, "dimension"),
        "a": (real, 1.0, "profile slope"),
        "eps": (real, 0.05, "flatness parameter"),
        "C": (optional_real, "auto", "constant (auto: doubling from 1)"),
        "h.seq": (reals, "", "three stencil spacings (default per kind)"),
        "poly.p": (real, 0.3, "polynomial constant"),
        "poly.q": (reals, "0,0.1", "polynomial gradient"),
        "poly.K": (real, 0.1, "polynomial curvature"),
    },
    "acf": {
        "pair": (choice("linear", "files"), "linear", "linear test pair or two field files"),
        "plus": (text, "", "field file of v+"),
        "minus": (text, "", "field file of v-"),
        "grid.h": (real, 0.03125, "spacing of the linear pair"),
        "box.half": (real, 1.0, "half width of the linear pair box"),
        "center": (reals, "", "center"),
        "radii": (reals, "0.125,0.25,0.5,0.875", "radii"),
    },
    "density": dict(FIELD_INPUT),
    "growth": {**FIELD_INPUT, "mode": (choice("abs", "one-sided"), "abs", "sup of |u| or (u-1)^+"),
               "window": (reals, "", "fit window lo,hi")},
    "flatness": {
        "input": (text, "", "field file"),
        "a": (real, 1.0, "profile slope"),
        "eps": (real, 0.1, "flatness parameter"),
        "R": (real, 8.0, "radius"),
        "direction": (reals, "", "normal (default e_n)"),
        "center": (reals, "", "center"),
        "rho": (real, 0.25, "inner radius of the improvement ratio"),
    },
    "gamma": {
        "limit": (choice("half-plane", "disk"), "half-plane", "limit set"),
        "eps": (reals, "1/32,1/64,1/128", "decreasing eps list"),
        "grid.policy": (choice("layer", "refined"), "refined", "layer: h ~ eps/8; refined: h ~ eps^1.5/2"),
        "normal": (reals, "", "half-plane normal (default e_n)"),
        "radius": (real, 0.3, "disk radius"),
        "limit.h": (real, 1 / 64, "grid of the limit pair"),
    },
    "mm-check": {
        "count": (int, 100, "number of random fields"),
        "dim": (int, 2, "dimension"),
        "grid.h": (real, 1 / 32, "spacing on the unit box"),
        "tol": (real, 1e-6, "quadrature tolerance"),
    },
}


def parse_config_text(body: str) -> dict:
    """Parse ``key = value`` lines; a run manifest (JSON) is accepted as well."""
    if body.lstrip().startswith("{"):
        cfg = json.loads(body).get("config")
        if not isinstance(cfg, dict):
            raise ValueError("manifest has no config section")
        return cfg
    out = {}
    for num, raw in enumerate(body.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {num}: expected 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        if k.count(".") > 1:
            raise ValueError(f"config line {num}: at most one dotted level in {k!r}")
        out[k] = v
    return out


def resolve(command: str, file_values: dict, flag_values: dict) -> dict:
    schema = {**COMMON, **SCHEMAS[command]}
    unknown = set(file_values) - set(schema)
    if unknown:
        raise ValueError(f"unknown keys for {command}: {sorted(unknown)}")
    cfg = {}
    for key, (conv, default, _) in schema.items():
        raw = flag_values.get(key, file_values.get(key, default))
        try:
            cfg[key] = conv(raw) if raw is not None else None
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"bad value for {key}: {raw!r} ({exc})") from exc
    return cfg


# -- output helpers ------------------------------------------------------------------


def write_atomic(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if np.isfinite(obj) else None
    return obj


def dump_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


class Run:
    def __init__(self, command: str, cfg: dict):
        self.command = command
        self.cfg = cfg
        self.out = Path(cfg["out"])
        self.outputs: list[str] = []
        self.rng = np.random.Generator(np.random.Philox(cfg["seed"]))

    def write(self, name: str, data) -> None:
        write_atomic(self.out / name, data)
        self.outputs.append(name)

    def manifest(self, status: str, summary=None, error=None) -> None:
        body = {
            "subcommand": self.command,
            "config": self.cfg,
            "version": __version__,
            "rng": "numpy Philox(seed)",
            "status": status,
            "outputs": self.outputs,
            "partial": status != "ok" and bool(self.outputs),
        }
        if summary is not None:
            body["summary"] = summary
        if error is not None:
            body["error"] = error
        write_atomic(self.out / "manifest.json", dump_json(body))


# -- subcommands --------------------------------------------------------------------


def _spec(cfg):
    from .potential import PotentialSpec

    return PotentialSpec(kind=cfg["potential"])


def _load_field(path: str):
    from .fields import ScalarField

    if not path:
        raise ValueError("an input field file is required")
    p = Path(path)
    if not p.is_file():
        raise ValueError(f"input field {path!r} not found")
    if p.suffix == ".bin":
        return ScalarField.from_bytes(p.read_bytes())
    return ScalarField.from_csv(p.read_text())


def _center_arg(cfg, n):
    c = cfg.get("center") or []
    if c and len(c) != n:
        raise ValueError(f"center needs {n} coordinates")
    return c or None


def cmd_profile(run: Run) -> dict:
    from .profiles import build_profile, eval_profile

    cfg = run.cfg
    if cfg["t.step"] <= 0 or cfg["t.max"] <= cfg["t.min"]:
        raise ValueError("need t.step > 0 and t.max > t.min")
    p = build_profile(_spec(cfg), cfg["a"], cfg["samples"])
    count = int(round((cfg["t.max"] - cfg["t.min"]) / cfg["t.step"])) + 1
    t = cfg["t.min"] + cfg["t.step"] * np.arange(count)
    u = eval_profile(p, t)
    lines = ["t,U"] + [f"{a!r},{b!r}" for a, b in zip(t.tolist(), u.tolist())]
    run.write("profile.csv", "\n".join(lines) + "\n")
    run.write("profile_table.csv", p.to_csv())
    return {"t_minus": p.t_minus, "t_plus": p.t_plus, "samples": len(p.t)}


def cmd_minimize(run: Run) -> dict:
    from .fields import ScalarField
    from .minimize import ConvergenceError, MinimizeConfig, minimize_energy
    from .profiles import build_profile, eval_profile

    cfg = run.cfg
    spec = _spec(cfg)
    if cfg["input"]:
        f = _load_field(cfg["input"])
    else:
        n = cfg["dim"]
        nu = np.zeros(n)
        nu[-1] = 1.0
        if cfg["boundary.direction"]:
            nu = np.asarray(cfg["boundary.direction"], dtype=float)
            if nu.size != n:
                raise ValueError("boundary.direction has the wrong length")
            nu /= np.linalg.norm(nu)
        cfg["boundary.direction"] = nu.tolist()
        p = build_profile(spec, cfg["boundary.a"])
        f = ScalarField.from_function(
            lambda *x: eval_profile(p, sum(xk * nk for xk, nk in zip(x, nu))),
            [cfg["box.lower"]] * n, [cfg["box.upper"]] * n, cfg["grid.h"],
        )
    mc = MinimizeConfig(
        tau=cfg["solver.tau"], tol=cfg["solver.tol"], max_iter=cfg["solver.max_iter"],
        init=cfg["solver.init"], newton=cfg["solver.newton"],
    )
    try:
        res = minimize_energy(f, spec, mc)
    except ConvergenceError as exc:
        res = exc.result
        _write_minimized(run, res, cfg["output.format"])
        raise NumericalFailure(str(exc)) from exc
    _write_minimized(run, res, cfg["output.format"])
    return res.metadata()


def _write_minimized(run: Run, res, fmt: str) -> None:
    if res is None:
        return
    if fmt == "bin":
        run.write("field.bin", res.field.to_bytes())
    else:
        run.write("field.csv", res.field.to_csv())
    rows = ["iteration,energy,residual"] + [
        f"{i},{e!r},{r!r}" for i, (e, r) in enumerate(zip(res.energy_history, res.residual_history))
    ]
    run.write("history.csv", "\n".join(rows) + "\n")
    run.write("result.json", dump_json(res.metadata()))


def cmd_barrier(run: Run) -> dict:
    from .barriers import (
        BarrierError,
        FlatnessPolynomial,
        annular_certification_points,
        build_annular_subsolution,
        build_polynomial_subsolution,
        build_radial_barrier,
        certificate_json,
        certify_subsolution,
        radial_certification_points,
    )

    cfg = run.cfg
    spec = _spec(cfg)
    kind = cfg["kind"]
    h_seq = cfg["h.seq"] or ([1 / 16, 1 / 32, 1 / 64] if kind == "radial" else [1 / 512, 1 / 1024, 1 / 2048])
    if len(h_seq) != 3:
        raise ValueError("h.seq needs three spacings")
    cfg["h.seq"] = list(h_seq)
    try:
        if kind == "radial":
            b = build_radial_barrier(spec, cfg["R"], C=cfg["C"], n=cfg["n"])
            pts = radial_certification_points(b, max(h_seq))
        elif kind == "annular":
            b = build_annular_subsolution(spec, cfg["a"], cfg["eps"], cfg["R"], n=cfg["n"], C=cfg["C"])
            pts = annular_certification_points(b, max(h_seq))
        else:
            poly = FlatnessPolynomial(cfg["poly.p"], tuple(cfg["poly.q"]), cfg["poly.K"])
            if len(poly.q) != cfg["n"]:
                raise ValueError("poly.q must have n entries")
            b = build_polynomial_subsolution(poly, cfg["a"], cfg["eps"], cfg["R"], spec)
            if b.annular is None:
                raise ValueError("flat polynomial: the barrier is an exact profile, nothing to certify")
            pts = annular_certification_points(b.annular, max(h_seq), half_width=cfg["R"])
    except BarrierError as exc:
        raise NumericalFailure(str(exc)) from exc
    cert = certify_subsolution(b if kind != "polynomial" else b.annular, spec, pts, h_seq, label=kind)
    if kind == "polynomial":
        cert["deviation"] = b.deviation(seed=cfg["seed"])
    run.write("certificate.json", certificate_json(_jsonable(cert)) + "\n")
    if cert["status"] != "PASS":
        raise NumericalFailure(f"certificate FAIL (stabilized margin {cert['stabilized_margin']:.3e})")
    return {"status": cert["status"], "stabilized_margin": cert["stabilized_margin"]}


def _write_series(run: Run, name: str, series) -> None:
    run.write(f"{name}.csv", series.to_csv())
    run.write(f"{name}.json", series.sidecar() + "\n")


def cmd_acf(run: Run) -> dict:
    from .diagnostics import acf_phi
    from .fields import ScalarField

    cfg = run.cfg
    if cfg["pair"] == "linear":
        L, h = cfg["box.half"], cfg["grid.h"]
        vp = ScalarField.from_function(lambda x, y: np.maximum(x + 0 * y, 0.0), (-L, -L), (L, L), h)
        vm = vp.with_values(np.maximum(-vp.mesh()[0] + 0 * vp.values, 0.0))
    else:
        vp, vm = _load_field(cfg["plus"]), _load_field(cfg["minus"])
    s = acf_phi(vp, vm, cfg["radii"], _center_arg(cfg, vp.n))
    _write_series(run, "acf", s)
    return {"values": s.values, "max_relative_drop": s.max_relative_drop()}


def cmd_density(run: Run) -> dict:
    from .diagnostics import density_series

    cfg = run.cfg
    f = _load_field(cfg["input"])
    V, A, om = density_series(f, _spec(cfg), cfg["radii"], _center_arg(cfg, f.n))
    for name, s in (("volume", V), ("potential", A), ("omega", om)):
        _write_series(run, f"density_{name}", s)
    return {"omega_over_Rn": (om.values / om.radii**f.n).tolist()}


def cmd_growth(run: Run) -> dict:
    from .diagnostics import energy_ratio_series, growth_series

    cfg = run.cfg
    f = _load_field(cfg["input"])
    window = cfg["window"] or None
    if window is not None and len(window) != 2:
        raise ValueError("window needs two radii")
    g = growth_series(f, cfg["radii"], cfg["mode"], _center_arg(cfg, f.n), window)
    e = energy_ratio_series(f, _spec(cfg), cfg["radii"], _center_arg(cfg, f.n))
    _write_series(run, "growth", g)
    _write_series(run, "energy_ratio", e)
    return {"exponent": g.meta["exponent"], "energy_max": e.meta["max"], "energy_trend": e.meta["trend_exponent"]}


def cmd_flatness(run: Run) -> dict:
    from .diagnostics import flatness_rescale, harmonic_deviation
    from .profiles import build_profile

    cfg = run.cfg
    spec = _spec(cfg)
    f = _load_field(cfg["input"])
    p = build_profile(spec, cfg["a"])
    ff = flatness_rescale(f, p, cfg["eps"], cfg["R"], cfg["direction"] or None, _center_arg(cfg, f.n))
    hd = harmonic_deviation(ff.field, ff.ball, rho=cfg["rho"])
    run.write("rescaled.csv", ff.field.to_csv())
    summary = {"within_band": ff.within_band, "sup_abs": ff.sup_abs, **hd}
    run.write("flatness.json", dump_json(summary))
    return summary


def cmd_gamma(run: Run) -> dict:
    from .gamma import Disk, HalfPlane, gamma_experiment, limit_from_geometry

    cfg = run.cfg
    spec = _spec(cfg)
    if cfg["limit"] == "half-plane":
        nu = cfg["normal"] or [0.0, 1.0]
        cfg["normal"] = list(nu)
        geo = HalfPlane(tuple(nu), 0.0)
    else:
        geo = Disk((0.0, 0.0), cfg["radius"])
    limit = limit_from_geometry(geo, (-0.5, -0.5), (0.5, 0.5), cfg["limit.h"])
    rep = gamma_experiment(limit, cfg["eps"], spec, grid_policy=cfg["grid.policy"])
    _write_series(run, "gamma_recovery", rep.recovery)
    _write_series(run, "gamma_gap", rep.gaps)
    summary = rep.summary()
    run.write("gamma.json", dump_json(summary))
    if not rep.lower_bound_ok:
        raise NumericalFailure("lower bound violated beyond quadrature tolerance")
    return summary


def cmd_mm_check(run: Run) -> dict:
    from .fields import modica_mortola_gap, random_lipschitz_field

    cfg = run.cfg
    spec = _spec(cfg)
    n = cfg["dim"]
    rows = ["index,J,TV_H,slack"]
    worst = np.inf
    for i in range(cfg["count"]):
        f = random_lipschitz_field(run.rng, [0.0] * n, [1.0] * n, cfg["grid.h"])
        J, tv = modica_mortola_gap(f, spec)
        worst = min(worst, J - tv)
        rows.append(f"{i},{J!r},{tv!r},{J - tv!r}")
    run.write("mm_check.csv", "\n".join(rows) + "\n")
    summary = {"count": cfg["count"], "min_slack": worst, "violated": bool(worst < -cfg["tol"])}
    run.write("mm_check.json", dump_json(summary))
    if summary["violated"]:
        raise NumericalFailure(f"inequality violated (slack {worst:.3e})")
    return summary


COMMANDS = {
    "profile": cmd_profile,
    "minimize": cmd_minimize,
    "barrier": cmd_barrier,
    "acf": cmd_acf,
    "density": cmd_density,
    "growth": cmd_growth,
    "flatness": cmd_flatness,
    "gamma": cmd_gamma,
    "mm-check": cmd_mm_check,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aclab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="key = value file")
        for key, (_, default, helptext) in {**COMMON, **SCHEMAS[name]}.items():
            sp.add_argument(f"--{key}", dest=key, default=None, help=f"{helptext} (default: {default})")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    command = args.command
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config") and v is not None}
    try:
        file_values = parse_config_text(Path(args.config).read_text()) if args.config else {}
        cfg = resolve(command, file_values, flags)
    except (OSError, ValueError) as exc:
        print(dump_json({"status": "invalid", "error": str(exc)}), file=sys.stderr, end="")
        return EXIT_INVALID
    run = Run(command, cfg)
    try:
        summary = COMMANDS[command](run)
    except ValueError as exc:
        run.manifest("invalid", error={"type": type(exc).__name__, "message": str(exc)})
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericalFailure, ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
        run.manifest("failed", error={"type": type(exc).__name__, "message": str(exc), "trace": traceback.format_exc()})
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    run.manifest("ok", summary)
    print(dump_json(summary), end="")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
