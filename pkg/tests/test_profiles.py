import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad, solve_ivp

from aclab.potential import TRUNCATED_QUARTIC as W4
from aclab.potential import PotentialSpec, eval_W, eval_W_prime
from aclab.profiles import (
    build_profile,
    eval_G_lambda,
    eval_profile,
    eval_profile_inverse,
    profile_derivative,
    slope_composition_deviation,
)

SQ2 = math.sqrt(2.0)


def test_heteroclinic_matches_tanh():
    p = build_profile(W4, 0.0)
    t = np.linspace(-12, 12, 4001)
    assert np.max(np.abs(eval_profile(p, t) - np.tanh(SQ2 * t))) < 1e-9
    assert float(eval_profile(p, 1.0)) == pytest.approx(0.888385561585, abs=1e-9)


def test_G0_matches_closed_form():
    s = np.linspace(-0.999, 0.999, 301)
    assert np.allclose(eval_G_lambda(W4, 0.0, s), np.arctanh(s) / SQ2, atol=1e-11)
    with pytest.raises(ValueError):
        eval_G_lambda(W4, 0.0, 1.0)
    with pytest.raises(ValueError):
        eval_G_lambda(W4, -1.0, 0.0)


@pytest.mark.parametrize("lam", [0.25, 1.0, 4.0])
def test_G_lambda_against_quadrature(lam):
    for s in (-1.0, -0.4, 0.3, 1.0):
        ref = quad(lambda x: 1.0 / math.sqrt(2.0 * (1 - x * x) ** 2 + lam), 0.0, s, epsabs=1e-14)[0]
        assert float(eval_G_lambda(W4, lam, s)) == pytest.approx(ref, abs=1e-11)
    # linear beyond the wells with slope lambda^(-1/2)
    g1 = float(eval_G_lambda(W4, lam, 1.0))
    assert float(eval_G_lambda(W4, lam, 3.0)) == pytest.approx(g1 + 2.0 / math.sqrt(lam), abs=1e-12)


@pytest.mark.parametrize("a", [0.5, 1.0, 2.0])
def test_profile_solves_ode(a):
    # shooting oracle: U(0) = 0, U'(0) = sqrt(2 W(0) + a^2)
    p = build_profile(W4, a)
    sol = solve_ivp(
        lambda t, y: [y[1], float(eval_W_prime(W4, y[0]))],
        (0.0, 4.0), [0.0, math.sqrt(2.0 + a * a)], rtol=1e-12, atol=1e-13, dense_output=True,
    )
    t = np.linspace(0.0, 4.0, 81)
    assert np.max(np.abs(eval_profile(p, t) - sol.sol(t)[0])) < 1e-8


@pytest.mark.parametrize("a", [0.3, 1.0])
def test_tails_are_linear_with_slope_a(a):
    p = build_profile(W4, a)
    assert float(eval_profile(p, p.t_plus)) == pytest.approx(1.0, abs=1e-12)
    assert float(eval_profile(p, p.t_plus + 2.0)) == pytest.approx(1.0 + 2.0 * a, abs=1e-12)
    assert float(eval_profile(p, p.t_minus - 1.0)) == pytest.approx(-1.0 - a, abs=1e-12)
    assert p.t_minus == pytest.approx(-p.t_plus, abs=1e-12)


def test_profile_is_odd_and_increasing():
    for a in (0.0, 1.0):
        p = build_profile(W4, a)
        t = np.linspace(-6, 6, 2001)
        u = eval_profile(p, t)
        assert np.all(np.diff(u) > 0)
        assert np.allclose(u, -eval_profile(p, -t), atol=1e-10)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 2.0), st.floats(-9.0, 9.0))
def test_inverse_round_trip(a, t):
    p = build_profile(W4, round(a, 2))
    u = float(eval_profile(p, t))
    if p.a == 0 and abs(u) > 1 - 1e-9:
        return
    assert float(eval_profile_inverse(p, u)) == pytest.approx(t, abs=1e-7)


@settings(max_examples=40, deadline=None)
@given(st.floats(-8.0, 8.0))
def test_equipartition(t):
    p = build_profile(W4, 0.0)
    u = float(eval_profile(p, t))
    du = float(profile_derivative(p, t))
    assert 0.5 * du * du == pytest.approx(float(eval_W(W4, u)), abs=1e-12)


def test_inverse_of_heteroclinic_rejects_wells():
    with pytest.raises(ValueError):
        eval_profile_inverse(build_profile(W4, 0.0), 1.0)


def test_slope_composition_deviation():
    # identity composition is exact
    assert slope_composition_deviation(W4, 1.0, 1.0) < 1e-9
    # frozen value for a = 1, gamma = 1.5
    assert slope_composition_deviation(W4, 1.0, 1.5) == pytest.approx(0.107, abs=2e-3)
    with pytest.raises(ValueError):
        slope_composition_deviation(W4, 0.001, 1.5)
    with pytest.raises(ValueError):
        slope_composition_deviation(W4, 1.0, 2.5)


def test_invalid_profile_requests():
    with pytest.raises(ValueError):
        build_profile(W4, -1.0)
    with pytest.raises(ValueError):
        build_profile(PotentialSpec(kind="quartic"), 1.0)


def test_csv_export():
    text = build_profile(W4, 1.0, 64).to_csv()
    rows = text.splitlines()
    assert rows[1] == "t,U" and len(rows) == 66
