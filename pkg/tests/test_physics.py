import numpy as np
import pytest
from numpy.testing import assert_allclose

from robust_elasticity.analytic import cube_f1, get_load
from robust_elasticity.forms import LoadFunction
from robust_elasticity.mesh import build_box_mesh, build_lshape_mesh
from robust_elasticity.physics import (
    FEField,
    LEOperator,
    eval_field,
    extrema,
    h1_norm,
    h1_seminorm,
    l2_error,
    l2_norm,
    locate_cells,
    nodal_values,
    reentrant_mass_fraction,
    run_three_step,
    solve_AUX,
    solve_correction,
    solve_HD,
    solve_LE,
    traction_from_field,
    transfer_load,
)
from robust_elasticity.spaces import Family, build_space, interpolate

CUBE = ((-1, -1, -1), (1, 1, 1))
RNG = np.random.default_rng(3)


def vec(fx, fy, fz):
    return lambda x: np.stack([fx(x), fy(x), fz(x)], axis=1)


ZERO = lambda x: 0 * x[:, 0]  # noqa: E731


@pytest.fixture(scope="module")
def mesh():
    return build_box_mesh(*CUBE, (2, 2, 2))


# ---------------------------------------------------------------- evaluation


def test_eval_field_shapes(mesh):
    V = build_space(mesh, Family.NODAL_VECTOR, 2)
    fld = FEField(V, np.zeros(V.n_dofs))
    xi = RNG.random((4, 3))
    assert eval_field(fld, None, xi).shape == (8, 4, 3)
    assert eval_field(fld, 3, xi, "grad").shape == (4, 3, 3)
    assert eval_field(fld, 3, xi[0], "div").shape == ()
    with pytest.raises(ValueError):
        eval_field(FEField(build_space(mesh, Family.DISC_PRESSURE, 1), np.zeros(32)), None, xi, "grad")
    with pytest.raises(ValueError):
        FEField(V, np.zeros(3))


def test_nodal_vector_derivatives():
    m = build_lshape_mesh(1)
    V = build_space(m, Family.NODAL_VECTOR, 2)
    fld = FEField(V, interpolate(V, vec(lambda x: x[:, 1] ** 2, lambda x: x[:, 0] * x[:, 2], lambda x: x[:, 2])))
    xi = RNG.random((5, 3))
    x = m.map_points(xi)
    X, Y, Z = x[..., 0], x[..., 1], x[..., 2]
    assert_allclose(eval_field(fld, None, xi, "div"), 1.0, atol=1e-12)
    curl = eval_field(fld, None, xi, "curl")
    assert_allclose(curl, np.stack([-X, 0 * X, Z - 2 * Y], -1), atol=1e-12)


def test_edge_field_curl_and_gradient(mesh):
    E = build_space(mesh, Family.EDGE, 1)
    fld = FEField(E, interpolate(E, vec(ZERO, ZERO, lambda x: (1 - x[:, 0] ** 2) * (1 - x[:, 1] ** 2))))
    xi = RNG.random((6, 3))
    x = mesh.map_points(xi).reshape(-1, 3)
    assert_allclose(eval_field(fld, None, xi, "curl").reshape(-1, 3), cube_f1(x), atol=1e-12)
    J = eval_field(fld, None, xi, "grad").reshape(-1, 3, 3)
    assert_allclose(J[:, 2, 0], -2 * x[:, 0] * (1 - x[:, 1] ** 2), atol=1e-12)
    assert_allclose(eval_field(fld, None, xi, "div"), 0.0, atol=1e-12)


def test_norms_of_simple_fields(mesh):
    S = build_space(mesh, Family.NODAL_SCALAR, 2)
    one = FEField(S, np.ones(S.n_dofs))
    assert l2_norm(one) == pytest.approx(np.sqrt(8), rel=1e-13)
    assert h1_seminorm(one) == pytest.approx(0.0, abs=1e-13)
    x = FEField(S, interpolate(S, lambda p: p[:, 0]))
    assert h1_seminorm(x) == pytest.approx(np.sqrt(8), rel=1e-13)
    assert h1_norm(x) == pytest.approx(np.sqrt(8 / 3 + 8), rel=1e-13)
    assert l2_error(x, lambda p: p[:, 0]) < 1e-13


def test_extrema_on_lobatto_lattice(mesh):
    S = build_space(mesh, Family.NODAL_SCALAR, 2)
    fld = FEField(S, interpolate(S, lambda p: p[:, 0] ** 2 - p[:, 1]))
    ex = extrema(fld)
    assert ex["max"] == pytest.approx(2.0) and ex["min"] == pytest.approx(-1.0)
    assert ex["sampling"] == {"lattice": "gauss-lobatto", "points_per_axis": 3}


def test_nodal_values_roundtrip(mesh):
    V = build_space(mesh, Family.NODAL_VECTOR, 3)
    S = build_space(mesh, Family.NODAL_SCALAR, 3)
    u = interpolate(V, vec(lambda x: x[:, 0] * x[:, 1], ZERO, lambda x: x[:, 2] ** 3))
    assert_allclose(nodal_values(FEField(V, u), S).ravel(), u, atol=1e-13)


def test_field_addition_requires_same_space(mesh):
    S1 = build_space(mesh, Family.NODAL_SCALAR, 2)
    S2 = build_space(mesh, Family.NODAL_SCALAR, 2)
    with pytest.raises(ValueError):
        FEField(S1, np.zeros(S1.n_dofs)) + FEField(S2, np.zeros(S2.n_dofs))


def test_transfer_load(mesh):
    E = build_space(mesh, Family.EDGE, 1)
    A = FEField(E, interpolate(E, vec(ZERO, ZERO, lambda x: (1 - x[:, 0] ** 2) * (1 - x[:, 1] ** 2))))
    f1 = LoadFunction(cube_f1, 3, "f1")
    rest = transfer_load(A, "curl", -1.0, plus=f1)
    xi = RNG.random((3, 3))
    assert np.abs(rest.at_quadrature(mesh, xi)).max() < 1e-12
    with pytest.raises(ValueError):
        rest.at_quadrature(build_box_mesh(*CUBE, (2, 2, 2)), xi)
    with pytest.raises(ValueError):
        transfer_load(A, "grad")


# ------------------------------------------------------------------ problems


def test_le_patch_test_reproduces_quadratic_solution(mesh):
    # u = (y^2, 0, 0), p = x: -div(2 mu e(u)) + grad p = (1 - 2 mu, 0, 0)
    mu = 0.7
    op = LEOperator(mesh, 2, "clamped", mu, None)
    exact = vec(lambda x: x[:, 1] ** 2, ZERO, ZERO)
    vals = interpolate(op.V, exact)[op.bc_u.fixed]
    f = LoadFunction(vec(lambda x: 1 - 2 * mu + 0 * x[:, 0], ZERO, ZERO), 0, "patch")
    res = op.solve([f], bc_values=vals)[0]
    assert l2_error(res.u, exact) < 1e-11
    assert l2_error(res.p, lambda x: x[:, 0]) < 1e-11
    assert res.diagnostics["weak_divergence_residual"] < 1e-12


def test_le_rejects_unstable_order(mesh):
    with pytest.raises(ValueError):
        LEOperator(mesh, 1, "clamped", 1.0)


def test_neumann_problem_with_balanced_traction(mesh):
    # uniform tension sigma = diag(1, 0, 0): traction n_x e_x, no body force
    res = solve_LE(mesh, 2, "neumann", 1.0, 1e4, None, s=lambda x, n: np.stack([n[:, 0], 0 * n[:, 0], 0 * n[:, 0]], 1))
    ex = extrema(res.u, "div")
    # stress 2 mu dev e - p I = diag(1, 0, 0) with p = -kappa div u, kappa = 1e4
    assert ex["max"] == pytest.approx(ex["min"], abs=1e-9)
    assert ex["max"] == pytest.approx(1 / 3 / 1e4, rel=1e-8)
    assert res.stats.functional_error < 1e-12


def test_helmholtz_potential_exact_for_polynomial_load(mesh):
    res = solve_HD(mesh, 1, LoadFunction(cube_f1, 3, "f1"))
    d = res.diagnostics
    assert d["pi_relative"] < 1e-12
    assert d["orthogonality_relative"] < 1e-12
    assert l2_error(res.A, cube_f1, "curl") < 1e-12
    assert d["curlA_extrema"]["x"]["max"] == pytest.approx(2.0, rel=1e-12)


def test_helmholtz_gradient_load_has_zero_curl(mesh):
    res = solve_HD(mesh, 1, get_load("cube_gradphi").as_load())
    assert res.diagnostics["curlA_l2"] < 1e-10


def test_aux_no_penetration(mesh):
    f1 = LoadFunction(cube_f1, 3, "f1")
    res = solve_AUX(mesh, 1, "no_penetration", 2.0, f1)
    assert res.diagnostics["pi_relative"] < 1e-12
    # a gradient of s = xyz (in Q_2) is absorbed entirely by the multiplier
    grad = LoadFunction(vec(lambda x: x[:, 1] * x[:, 2], lambda x: x[:, 0] * x[:, 2], lambda x: x[:, 0] * x[:, 1]), 2)
    res = solve_AUX(mesh, 1, "no_penetration", 2.0, grad)
    assert res.diagnostics["u_relative"] < 1e-12
    assert l2_error(res.pi, lambda x: x[:, 0] * x[:, 1] * x[:, 2]) < 1e-12
    with pytest.raises(ValueError):
        solve_AUX(mesh, 1, "clamped", 1.0, f1)


def test_aux_no_slip_runs(mesh):
    res = solve_AUX(mesh, 1, "no_slip", 1.0, LoadFunction(cube_f1, 3, "f1"))
    assert res.stats.residual < 1e-10
    assert res.diagnostics["divergence_constraint"] < 1e-12


@pytest.fixture(scope="module")
def three_step_runs(mesh):
    return {mu: run_three_step(mesh, 2, "no_penetration", mu, 1e7, get_load("cube_total", mu).as_load())
            for mu in (1.0, 1e-4)}


def test_three_step_superposition(three_step_runs):
    for out in three_step_runs.values():
        assert out.diagnostics["superposition_deviation"] < 1e-9
        assert out.diagnostics["u2_discardable"]


def test_step_one_is_mu_independent(three_step_runs):
    a, b = (three_step_runs[mu].fields for mu in (1.0, 1e-4))
    diff = FEField(a["u1"].space, a["u1"].coeffs - b["u1"].coeffs)
    assert h1_norm(diff) <= 1e-8 * h1_norm(a["u1"])
    # Step-2 load does not depend on mu either, so neither does p2
    assert l2_norm(FEField(a["p2"].space, a["p2"].coeffs - b["p2"].coeffs)) <= 1e-8 * l2_norm(a["p2"])


def test_traction_from_linear_field(mesh):
    V = build_space(mesh, Family.NODAL_VECTOR, 2)
    u0 = FEField(V, interpolate(V, vec(lambda x: x[:, 0], ZERO, ZERO)))
    s = traction_from_field(u0, 1.5)
    x = np.array([[1.0, 0.3, -0.2], [-0.5, 1.0, 0.5]])
    n = np.array([[1.0, 0, 0], [0, 1.0, 0]])
    # 2 mu dev e = 3 diag(2/3, -1/3, -1/3)
    assert_allclose(s(x, n), [[2.0, 0, 0], [0, -1.0, 0]], atol=1e-13)


def test_locate_cells(mesh):
    cells = locate_cells(mesh, np.array([[-0.5, -0.5, -0.5], [1.0, 1.0, 1.0]]), np.array([[0, 0, 0], [1.0, 0, 0]]))
    assert_allclose(mesh.lo[cells[0]], [-1, -1, -1])
    assert_allclose(mesh.lo[cells[1]], [0, 0, 0])
    with pytest.raises(ValueError):
        locate_cells(mesh, np.array([[2.0, 0, 0]]))


@pytest.mark.parametrize("kind", ["dirichlet_extension", "neumann_traction"])
def test_correction_ratio_independent_of_mu(mesh, kind):
    V = build_space(mesh, Family.NODAL_VECTOR, 2)
    # the traction of this source is not balanced by a constant body force, so r does not vanish
    src = FEField(V, interpolate(V, vec(lambda x: x[:, 1] ** 2 * x[:, 2], lambda x: x[:, 0] * x[:, 2] ** 2, ZERO)))
    ratios = [solve_correction(kind, mesh, 2, mu, 1e7, source=src).ratio for mu in (1.0, 1e-4)]
    assert ratios[0] > 1e-6
    assert abs(ratios[0] - ratios[1]) <= 1e-8 * ratios[0]


def test_correction_rejects_unknown_kind(mesh):
    with pytest.raises(ValueError):
        solve_correction("robin", mesh, 2, 1.0)
    with pytest.raises(ValueError):
        solve_correction("neumann_traction", mesh, 2, 1.0)


def test_reentrant_mass_fraction():
    m = build_lshape_mesh(2)
    Q = build_space(m, Family.DISC_PRESSURE, 1)
    const = FEField(Q, interpolate(Q, lambda x: 1 + 0 * x[:, 0]))
    near = FEField(Q, interpolate(Q, lambda x: np.exp(-50 * np.sum(x**2, axis=1))))
    far = FEField(Q, interpolate(Q, lambda x: (np.max(x, axis=1) < -0.5).astype(float)))
    assert 0 < reentrant_mass_fraction(const) < 0.2
    assert reentrant_mass_fraction(near) > 2 * reentrant_mass_fraction(const)
    assert reentrant_mass_fraction(far) == 0.0
