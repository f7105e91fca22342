import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from aclab.potential import (
    TRUNCATED_QUARTIC,
    PotentialSpec,
    antiderivative_H,
    eval_W,
    eval_W_derivatives,
    eval_W_prime,
    lipschitz_W_prime,
    rescaled_potential_WR,
    slope_rescaled,
    sup_W,
    surface_tension_c0,
    tabulated_from,
)

C0 = 4.0 * math.sqrt(2.0) / 3.0


def test_values_at_wells_and_center():
    assert np.allclose(eval_W(TRUNCATED_QUARTIC, [1.0, 0.0, 2.0, -1.0, -3.0]), [0, 1, 0, 0, 0])
    assert eval_W_prime(TRUNCATED_QUARTIC, 0.5) == pytest.approx(-1.5)


def test_quartic_keeps_growing_past_wells():
    q = PotentialSpec(kind="quartic")
    assert eval_W(q, 2.0) == pytest.approx(9.0)
    assert eval_W_prime(q, 2.0) == pytest.approx(24.0)


def test_surface_tension_closed_form():
    assert surface_tension_c0(TRUNCATED_QUARTIC) == pytest.approx(C0, abs=1e-12)


def test_H_against_quadrature():
    for s in (-0.9, -0.3, 0.2, 0.75, 1.0):
        ref = quad(lambda x: math.sqrt(2.0) * (1 - x * x), 0.0, s)[0]
        assert float(antiderivative_H(TRUNCATED_QUARTIC, s)) == pytest.approx(ref, abs=1e-13)
    # constant beyond the wells
    assert float(antiderivative_H(TRUNCATED_QUARTIC, 3.0)) == pytest.approx(C0 / 2, abs=1e-13)


def test_second_derivative_is_one_sided_at_wells():
    w1, w2 = eval_W_derivatives(TRUNCATED_QUARTIC, np.array([1.0, -1.0, 1.5]))
    assert np.allclose(w1, 0.0)
    assert np.allclose(w2, [8.0, 8.0, 0.0])
    assert lipschitz_W_prime(TRUNCATED_QUARTIC) == 8.0
    assert sup_W(TRUNCATED_QUARTIC) == 1.0


@settings(max_examples=60, deadline=None)
@given(st.floats(-0.98, 0.98))
def test_derivative_matches_finite_difference(t):
    d = 1e-6
    fd = (eval_W(TRUNCATED_QUARTIC, t + d) - eval_W(TRUNCATED_QUARTIC, t - d)) / (2 * d)
    assert float(eval_W_prime(TRUNCATED_QUARTIC, t)) == pytest.approx(float(fd), abs=1e-7)


@settings(max_examples=60, deadline=None)
@given(st.floats(-5, 5))
def test_nonnegative_and_even(t):
    w = float(eval_W(TRUNCATED_QUARTIC, t))
    assert w >= 0.0
    assert w == pytest.approx(float(eval_W(TRUNCATED_QUARTIC, -t)))


@settings(max_examples=30, deadline=None)
@given(st.floats(0.2, 5.0), st.floats(0.2, 5.0), st.floats(-2.0, 2.0))
def test_rescaling_identity(R, M, v):
    spec = rescaled_potential_WR(TRUNCATED_QUARTIC, R, M)
    assert float(eval_W(spec, v)) == pytest.approx((R / M) ** 2 * float(eval_W(TRUNCATED_QUARTIC, M * v)), rel=1e-12, abs=1e-14)


def test_rescaled_tension_scales():
    # W_R(v) = (R/M)^2 W(M v) has c0 scaled by R/M^2
    spec = rescaled_potential_WR(TRUNCATED_QUARTIC, 3.0, 2.0)
    assert surface_tension_c0(spec) == pytest.approx(C0 * 3.0 / 4.0, rel=1e-12)
    assert slope_rescaled(TRUNCATED_QUARTIC, 2.0).well == pytest.approx(0.5)


def test_tabulated_matches_analytic():
    tab = tabulated_from(TRUNCATED_QUARTIC, 4001)
    t = np.linspace(-1.2, 1.2, 97)
    assert np.allclose(eval_W(tab, t), eval_W(TRUNCATED_QUARTIC, t), atol=1e-6)
    assert surface_tension_c0(tab) == pytest.approx(C0, rel=1e-5)


def test_text_round_trip():
    spec = PotentialSpec(kind="quartic", M=2.0, R=3.5)
    back = PotentialSpec.from_text(spec.to_text())
    assert (back.kind, back.M, back.R) == ("quartic", 2.0, 3.5)
    tab = tabulated_from(TRUNCATED_QUARTIC, 1001)
    back = PotentialSpec.from_text(tab.to_text())
    assert np.array_equal(back.samples[1], tab.samples[1])


@pytest.mark.parametrize("kwargs", [dict(kind="sextic"), dict(M=0.0), dict(R=-1.0), dict(kind="generic-tabulated")])
def test_invalid_specs(kwargs):
    with pytest.raises(ValueError):
        PotentialSpec(**kwargs)
