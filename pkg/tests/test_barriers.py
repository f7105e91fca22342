from decimal import Decimal, getcontext

import numpy as np
import pytest

from aclab.barriers import (
    FlatnessPolynomial,
    annular_certification_points,
    build_annular_subsolution,
    build_polynomial_subsolution,
    build_radial_barrier,
    certify_subsolution,
    laplacian_at,
    radial_certification_points,
)
from aclab.potential import TRUNCATED_QUARTIC as W
from aclab.profiles import build_profile, eval_profile


def test_radial_barrier_certifies_at_R16():
    b = build_radial_barrier(W, 16.0)
    cert = certify_subsolution(b, W, radial_certification_points(b, 1 / 16))
    assert cert["status"] == "PASS"
    assert cert["exact_min_margin"] > 0
    assert abs(cert["stabilized_margin"] - cert["exact_min_margin"]) < 0.25 * cert["exact_min_margin"]
    # g reaches 1 before R and lies below -1 nowhere
    assert b.t_one < b.R
    assert b.g(np.array([0.0]))[0] == pytest.approx(-1.0)
    assert b.g(np.array([b.R]))[0] > 1.0


def test_radial_generator_solves_its_ode():
    b = build_radial_barrier(W, 16.0)
    t = np.linspace(0.5, 20.0, 400)
    d = 1e-4
    d1 = (b.g(t + d) - b.g(t - d)) / (2 * d)
    assert np.allclose(d1, b.gen.d1(t), atol=1e-5)
    assert np.allclose(0.5 * d1**2, b.h(b.g(t)), atol=1e-5)


def test_annular_subsolution_certifies():
    s = build_annular_subsolution(W, 1.0, 0.05, 40.0)
    pts = annular_certification_points(s, 1 / 512)
    cert = certify_subsolution(s, W, pts, h_seq=(1 / 512, 1 / 1024, 1 / 2048))
    assert cert["status"] == "PASS"
    assert s.rho0 == pytest.approx(800.0)


def test_annular_subsolution_is_close_to_profile_at_origin():
    s = build_annular_subsolution(W, 1.0, 0.05, 40.0)
    x = np.array([[0.0, t] for t in np.linspace(-3, 3, 13)])
    u = eval_profile(build_profile(W, 1.0), x[:, 1])
    assert np.max(np.abs(s.value(x) - u)) < 0.05


def test_constant_below_zero_is_not_a_subsolution():
    class Const:
        def value(self, x):
            return np.full(len(np.atleast_2d(x)), -0.5)

    pts = np.random.default_rng(0).uniform(-1, 1, size=(50, 2))
    assert certify_subsolution(Const(), W, pts)["status"] == "FAIL"


def test_laplacian_at_is_exact_on_quadratics():
    q = lambda x: (np.atleast_2d(x) ** 2).sum(axis=1) * 1.5
    x = np.random.default_rng(1).normal(size=(20, 3))
    assert np.allclose(laplacian_at(q, x, 0.1), 9.0)


def test_signed_distance_has_no_cancellation():
    s = build_annular_subsolution(W, 1.0, 0.05, 40.0)
    getcontext().prec = 50
    pts = np.array([[0.0, 1e-3], [3.0, -2.0], [1e-6, 0.0], [25.0, 7.5]])
    got = s.signed_distance(pts)
    for (x, y), d in zip(pts, got):
        cx, cy = (Decimal(float(c)) for c in s.center)
        r = ((Decimal(float(x)) - cx) ** 2 + (Decimal(float(y)) - cy) ** 2).sqrt()
        ref = float(Decimal(s.rho0) - r)
        assert d == pytest.approx(ref, rel=1e-12, abs=1e-15)


def test_flat_polynomial_is_a_translate():
    p = build_polynomial_subsolution(FlatnessPolynomial(0.5, (0.0, 0.0), 0.0), 1.0, 0.02, 20.0, W)
    assert p.annular is None
    assert p.deviation(5000)["sup"] < 1e-10


def test_curved_polynomial_deviation_is_small():
    poly = FlatnessPolynomial(0.5, (0.3, 1.0), 1.0)
    p = build_polynomial_subsolution(poly, 1.0, 0.02, 20.0, W)
    dev = p.deviation(20000)
    assert dev["sup"] < 0.1
    # shrinking the strip shrinks the error
    assert p.deviation(20000, strip=0.05)["sup"] < dev["sup"]


@pytest.mark.parametrize(
    "args",
    [(20.0, (0.0, 1.0), 1.0), (0.0, (30.0, 1.0), 1.0), (0.0, (0.0, 1.0), 0.05), (0.0, (0.3, 1.0), 0.0)],
)
def test_flatness_polynomial_validation(args):
    with pytest.raises(ValueError):
        FlatnessPolynomial(*args)


def test_builder_input_validation():
    with pytest.raises(ValueError):
        build_radial_barrier(W, 1.0)
    with pytest.raises(ValueError):
        build_annular_subsolution(W, 0.1, 0.05, 40.0)
    with pytest.raises(ValueError):
        build_annular_subsolution(W, 1.0, 0.6, 40.0)
