import numpy as np
import pytest
from numpy.testing import assert_allclose

from robust_elasticity.analytic import (
    LOAD_NAMES,
    cube_f1,
    cube_f1_curl,
    cube_f1_jacobian,
    cube_grad_phi,
    cube_phi,
    cube_phi_mean,
    cube_total,
    fd_jacobian,
    get_load,
    lshape_A,
    lshape_f1,
    self_check,
)
from robust_elasticity.ref_fe import gauss_rule

RNG = np.random.default_rng(11)


def _cube_integral(fn, n=10):
    r = gauss_rule(n, 3)
    return float(np.sum(8 * r.weights * fn(2 * r.points - 1)))


@pytest.mark.parametrize("name", LOAD_NAMES)
def test_declared_identities_hold(name):
    rep = self_check(get_load(name, mu=0.3))
    assert rep["ok"], rep


def test_unknown_load_rejected():
    with pytest.raises(ValueError):
        get_load("sphere")


def test_phi_mean_matches_quadrature():
    assert_allclose(_cube_integral(cube_phi) / 8, cube_phi_mean(), rtol=1e-13)
    assert cube_phi_mean() == pytest.approx(0.1517, abs=1e-4)


def test_grad_phi_is_gradient_of_phi():
    x = RNG.uniform(-0.9, 0.9, (20, 3))
    J = fd_jacobian(lambda y: cube_phi(y)[:, None] * np.ones(3), x)
    assert_allclose(cube_grad_phi(x), J[:, 0, :], atol=1e-8)


def test_grad_phi_peak_value():
    # |d/dx (1-x^2)^2| peaks at x = 1/sqrt(3) with value 8 / (3 sqrt 3)
    peak = 8 / (3 * np.sqrt(3))
    assert cube_grad_phi(np.array([-1 / np.sqrt(3), 0.0, 0.0]))[0] == pytest.approx(peak, rel=1e-14)
    t = np.linspace(-1, 1, 2001)
    pts = np.column_stack([t, np.zeros_like(t), np.zeros_like(t)])
    assert np.abs(cube_grad_phi(pts)[:, 0]).max() == pytest.approx(1.5396, abs=5e-5)


def test_f1_closed_forms():
    x = RNG.uniform(-1, 1, (15, 3))
    assert_allclose(cube_f1_jacobian(x), fd_jacobian(cube_f1, x), atol=1e-8)
    J = cube_f1_jacobian(x)
    assert_allclose(np.trace(J, axis1=1, axis2=2), 0.0, atol=1e-14)
    assert_allclose(cube_f1_curl(x)[:, 2], J[:, 1, 0] - J[:, 0, 1], atol=1e-14)
    # peak of the first component: 2 (1 - 0) * 1 at x = 0, y = -1
    assert cube_f1(np.array([0.0, -1.0, 0.3]))[0] == pytest.approx(2.0)


def test_cube_total_combines_parts():
    x = RNG.uniform(-1, 1, (6, 3))
    assert_allclose(cube_total(x, 1e-4), 1e-4 * cube_f1(x) + cube_grad_phi(x))
    with pytest.raises(ValueError):
        cube_total(x, 0.0)


def test_single_point_shape():
    assert cube_f1(np.zeros(3)).shape == (3,)
    assert np.ndim(cube_phi(np.zeros(3))) == 0
    assert cube_f1_jacobian(np.zeros(3)).shape == (3, 3)


def test_lshape_f1_is_curl_of_potential():
    x = RNG.uniform(-1, 1, (25, 3))
    J = fd_jacobian(lshape_A, x, step=1e-5)
    curl = np.stack([J[:, 2, 1] - J[:, 1, 2], J[:, 0, 2] - J[:, 2, 0], J[:, 1, 0] - J[:, 0, 1]], axis=1)
    assert_allclose(lshape_f1(x), curl, atol=1e-6 * np.abs(curl).max())


def test_lshape_potential_vanishes_on_all_walls():
    t = RNG.uniform(-1, 1, (10, 2))
    for d in range(3):
        for side in (-1.0, 0.0, 1.0):
            pts = np.insert(t, d, side, axis=1)
            tang = np.delete(lshape_A(pts), d, axis=1)
            assert np.abs(tang).max() < 1e-12


def test_load_function_adapter():
    load = get_load("cube_f1").as_load()
    x = RNG.uniform(-1, 1, (4, 3))
    assert_allclose(load(x), cube_f1(x))
    assert load.degree == 3 and load.name == "cube_f1"
