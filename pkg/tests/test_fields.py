import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aclab.fields import (
    IndicatorField,
    ScalarField,
    box_shape,
    cell_ball_weights,
    cell_energy,
    discrete_laplacian,
    energy_gradient,
    energy_J,
    euler_lagrange_residual,
    modica_mortola_gap,
    node_ball_mask,
    perimeter_TV,
    random_lipschitz_field,
    total_variation,
)
from aclab.potential import TRUNCATED_QUARTIC as W4
from aclab.potential import surface_tension_c0

C0 = surface_tension_c0(W4)


def test_box_shape():
    assert box_shape((0, 0), (1, 2), 0.25) == (5, 9)
    with pytest.raises(ValueError):
        box_shape((0,), (1,), 0.3)


def test_laplacian_exact_on_quadratics():
    f = ScalarField.from_function(lambda x, y: x * x + 3 * y * y - x * y, (-1, -1), (1, 1), 0.125)
    lap = discrete_laplacian(f).values[1:-1, 1:-1]
    assert np.allclose(lap, 8.0, atol=1e-10)


def test_laplacian_second_order_on_eigenfunction():
    errs = []
    for h in (1 / 32, 1 / 64):
        f = ScalarField.from_function(lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y), (0, 0), (1, 1), h)
        lap = discrete_laplacian(f).values
        errs.append(np.abs(lap + 2 * np.pi**2 * f.values)[1:-1, 1:-1].max())
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)


def test_energy_of_constants():
    one = ScalarField.constant(1.0, (0, 0), (1, 1), 0.1)
    zero = ScalarField.constant(0.0, (0, 0), (1, 1), 0.1)
    assert energy_J(one, W4) == pytest.approx(0.0)
    assert energy_J(zero, W4) == pytest.approx(1.0)


def test_energy_of_linear_field():
    f = ScalarField.from_function(lambda x, y: 3 * x + 4 * y + 5, (0, 0), (1, 1), 0.1)
    assert energy_J(f, W4) == pytest.approx(12.5)


def test_heteroclinic_energy_is_c0():
    from aclab.profiles import build_profile, eval_profile

    p = build_profile(W4, 0.0)
    f = ScalarField.from_function(lambda x: eval_profile(p, x), (-10,), (10,), 1e-3)
    assert energy_J(f, W4) == pytest.approx(C0, rel=1e-6)


def test_gradient_matches_finite_difference():
    rng = np.random.Generator(np.random.Philox(3))
    f = ScalarField(rng.uniform(-1.2, 1.2, (9, 9)), 0.2, (0, 0))
    g = energy_gradient(f, W4)
    i, j, d = 4, 5, 1e-6
    up, dn = f.values.copy(), f.values.copy()
    up[i, j] += d
    dn[i, j] -= d
    fd = (energy_J(f.with_values(up), W4) - energy_J(f.with_values(dn), W4)) / (2 * d)
    assert g[i, j] * f.h**2 == pytest.approx(fd, rel=1e-5, abs=1e-9)


def test_euler_lagrange_residual_of_constant_well():
    assert euler_lagrange_residual(ScalarField.constant(1.0, (0, 0), (1, 1), 0.1), W4) == 0.0


def test_total_variation_of_linear_field():
    f = ScalarField.from_function(lambda x, y: 3 * x + 4 * y, (0, 0), (1, 1), 0.05)
    assert total_variation(f) == pytest.approx(5.0)


@pytest.mark.parametrize("nu", [(0.0, 1.0), (1.0, 0.0)])
def test_half_plane_perimeter_exact(nu):
    e = IndicatorField.from_predicate(lambda x, y: x * nu[0] + y * nu[1] < 0.0, (-0.5, -0.5), (0.5, 0.5), 1 / 64)
    assert perimeter_TV(e) == pytest.approx(1.0, abs=1e-12)
    assert perimeter_TV(e.complement()) == pytest.approx(perimeter_TV(e), abs=1e-12)


def test_disk_perimeter():
    r = 0.3
    e = IndicatorField.from_predicate(lambda x, y: x * x + y * y < r * r, (-0.5, -0.5), (0.5, 0.5), 1 / 256)
    assert perimeter_TV(e) == pytest.approx(2 * math.pi * r, rel=0.01)


def test_sphere_area_3d():
    r = 0.3
    e = IndicatorField.from_predicate(lambda x, y, z: x * x + y * y + z * z < r * r, (-0.5,) * 3, (0.5,) * 3, 1 / 64)
    assert perimeter_TV(e) == pytest.approx(4 * math.pi * r * r, rel=0.015)


def test_empty_and_full_sets_have_zero_perimeter():
    e = IndicatorField(np.zeros((16, 16), dtype=np.uint8), 0.1, (0, 0))
    assert perimeter_TV(e) == 0.0
    assert perimeter_TV(e.complement()) == 0.0


def test_ball_weights():
    f = ScalarField.constant(0.0, (-1, -1), (1, 1), 1 / 64)
    w = cell_ball_weights(f, (0.1, -0.2), 0.5)
    assert w.sum() * f.h**2 == pytest.approx(math.pi * 0.25, rel=1e-4)
    m = node_ball_mask(f, (0, 0), 0.5)
    assert m[64, 64] and not m[0, 0]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([1, 2, 3]))
def test_io_round_trip(seed, n):
    rng = np.random.Generator(np.random.Philox(seed))
    shape = tuple(int(s) for s in rng.integers(2, 6, n))
    fixed = rng.random(shape) < 0.5
    f = ScalarField(rng.normal(size=shape), 0.37, tuple(rng.normal(size=n)), fixed=fixed)
    for back in (ScalarField.from_csv(f.to_csv()), ScalarField.from_bytes(f.to_bytes())):
        assert np.array_equal(back.values, f.values)
        assert np.array_equal(back.fixed, f.fixed)
        assert back.h == f.h and back.origin == f.origin


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_cellwise_energy_dominates_tv_of_H(seed):
    rng = np.random.Generator(np.random.Philox(seed))
    f = random_lipschitz_field(rng, (0, 0), (1, 1), 1 / 32)
    J, tv = modica_mortola_gap(f, W4)
    assert J >= tv - 1e-6


def test_cell_energy_without_potential():
    v = np.arange(12.0).reshape(3, 4)
    cells = cell_energy(v, 1.0, None, pot_coef=0.0)
    # |grad|^2 = 16 + 1 on every cell
    assert np.allclose(cells, 8.5)


def test_invalid_fields():
    with pytest.raises(ValueError):
        ScalarField(np.zeros((3, 3)), 0.0, (0, 0))
    with pytest.raises(ValueError):
        ScalarField(np.zeros((3, 3)), 0.1, (0,))
    with pytest.raises(ValueError):
        IndicatorField(np.full((3, 3), 0.5), 0.1, (0, 0))
