import numpy as np
import pytest

from dfsphere.dfs import (
    SphereFunction,
    double_up,
    latitude_weights,
    pole_residual,
    restrict,
    restricted_colatitudes,
    sphere_l2_norm,
    symmetry_residual,
)
from dfsphere.fourier_core import GridSpec, make_grid, vals_to_coeffs
from dfsphere.problems import ginzburg_landau, spherical_harmonic


def smooth(lam, theta):
    return np.cos(1 + np.cos(lam) * np.sin(2 * theta))


def test_double_up_constants_and_cosine():
    spec = GridSpec(8, 8)
    np.testing.assert_array_equal(double_up(lambda lam, th: np.ones_like(lam), spec), 1)
    theta, _ = make_grid(spec)
    v = double_up(lambda lam, th: np.cos(th), spec)
    np.testing.assert_allclose(v, np.cos(theta)[:, None] * np.ones(8), atol=1e-15)


def test_double_up_x_is_smooth_extension():
    spec = GridSpec(8, 8)
    theta, lam = make_grid(spec)
    v = double_up(lambda la, th: np.sin(th) * np.cos(la), spec)
    # sin(theta) cos(lambda) is already bi-periodic, so doubling reproduces it
    np.testing.assert_allclose(v, np.outer(np.sin(theta), np.cos(lam)), atol=1e-15)


def test_restrict():
    spec = GridSpec(16, 8)
    half = restrict(double_up(lambda la, th: np.ones_like(la), spec))
    assert half.shape == (9, 8)
    np.testing.assert_array_equal(half, 1)
    v = double_up(smooth, spec)
    _, lam = make_grid(spec)
    th = restricted_colatitudes(16)
    # the last row is theta = pi, reached from theta = -pi with a half-turn shift in lambda
    np.testing.assert_allclose(restrict(v)[:-1], smooth(lam[None, :], th[:-1, None]), atol=1e-15)
    np.testing.assert_allclose(restrict(v)[-1], smooth(lam + np.pi, np.pi), atol=1e-15)


def test_double_restrict_double_idempotent():
    spec = GridSpec(16, 16)
    v = double_up(smooth, spec)
    half = restrict(v)
    m = spec.m
    # rebuild the full grid from the half grid using the doubling symmetry
    rebuilt = np.empty_like(v)
    rebuilt[m // 2:] = half[:-1]
    rebuilt[0] = half[-1]
    rows = np.arange(1, m // 2)
    rebuilt[rows] = np.roll(v[m - rows], spec.n // 2, axis=1)
    np.testing.assert_allclose(rebuilt, v, atol=1e-15)


def test_pole_residual_examples():
    spec = GridSpec(64, 64)
    c = vals_to_coeffs(np.full(spec.shape, 3.0))
    assert pole_residual(c) < 1e-15
    c = vals_to_coeffs(double_up(smooth, spec))
    assert pole_residual(c) <= 1e-10
    single = np.zeros((8, 8), dtype=complex)
    single[4, 5] = 1
    assert pole_residual(single) == 1


def test_pole_residual_decays_with_resolution():
    res = [pole_residual(vals_to_coeffs(double_up(smooth, GridSpec(m, m)))) for m in (16, 32, 64)]
    assert max(res) < 1e-13


def test_symmetry_residual():
    spec = GridSpec(16, 16)
    c = vals_to_coeffs(double_up(smooth, spec))
    assert symmetry_residual(c) < 1e-14
    v = double_up(smooth, spec)
    v[3, 5] += 0.2
    assert symmetry_residual(vals_to_coeffs(v)) >= 0.1


def test_latitude_weights_against_quadrature():
    from scipy.integrate import quad

    w = latitude_weights(8)
    for idx, j in enumerate(range(-4, 4)):
        re = quad(lambda t: np.sin(t) * np.cos(j * t), 0, np.pi)[0]
        im = quad(lambda t: np.sin(t) * np.sin(j * t), 0, np.pi)[0]
        assert w[idx] == pytest.approx(re + 1j * im, abs=1e-13)


def test_sphere_norms():
    spec = GridSpec(16, 16)
    one = vals_to_coeffs(np.ones(spec.shape))
    assert sphere_l2_norm(one) == pytest.approx(np.sqrt(4 * np.pi), rel=1e-14)
    z = SphereFunction(evaluator=lambda la, th: np.cos(th)).on_grid(spec)
    assert sphere_l2_norm(z) == pytest.approx(np.sqrt(4 * np.pi / 3), rel=1e-14)
    assert sphere_l2_norm(spherical_harmonic(3, 3, spec)) == pytest.approx(1, abs=1e-10)


def test_norm_rotation_invariant():
    spec = GridSpec(128, 128)
    rotated = ginzburg_landau().initial.on_grid(spec)
    plain = SphereFunction.from_xyz(
        lambda x, y, z: (np.cos(40 * x) + np.cos(40 * y) + np.cos(40 * z)) / 3).on_grid(spec)
    assert sphere_l2_norm(rotated) == pytest.approx(sphere_l2_norm(plain), rel=1e-10)


def test_sphere_function_requires_one_source():
    with pytest.raises(ValueError):
        SphereFunction()
    with pytest.raises(ValueError):
        SphereFunction(evaluator=smooth, coeffs=np.zeros((4, 4)))
