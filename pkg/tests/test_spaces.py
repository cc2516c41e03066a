import numpy as np
import pytest
from numpy.testing import assert_allclose

from robust_elasticity.mesh import build_box_mesh, build_lshape_mesh
from robust_elasticity.physics import FEField, eval_field
from robust_elasticity.spaces import (
    BCKind,
    BCRegime,
    Family,
    boundary_dofs,
    build_space,
    classify_boundary,
    edge_space_bc,
    interpolate,
    mean_functional,
    pressure_gauge,
    rigid_body_functionals,
    scalar_h10_bc,
)

CUBE = ((-1, -1, -1), (1, 1, 1))
RNG = np.random.default_rng(5)


@pytest.fixture(scope="module")
def mesh2():
    return build_box_mesh(*CUBE, (2, 2, 2))


def _edge_count(n_edges, n_faces, n_cells, p):
    return n_edges * (p + 1) + n_faces * 2 * p * (p + 1) + n_cells * 3 * p * p * (p + 1)


@pytest.mark.parametrize("p", [2, 3])
def test_nodal_counts(mesh2, p):
    assert build_space(mesh2, Family.NODAL_SCALAR, p).n_dofs == (2 * p + 1) ** 3
    assert build_space(mesh2, Family.NODAL_VECTOR, p).n_dofs == 3 * (2 * p + 1) ** 3


@pytest.mark.parametrize("p", [0, 1, 2])
def test_edge_counts(mesh2, p):
    E = build_space(mesh2, Family.EDGE, p)
    assert E.n_dofs == _edge_count(54, 36, 8, p)
    assert E.n_local == 3 * (p + 1) * (p + 2) ** 2


def test_pressure_counts(mesh2):
    Q = build_space(mesh2, Family.DISC_PRESSURE, 2)
    assert Q.n_dofs == 8 * 10


def test_full_size_helmholtz_dof_count():
    """Edge order 3 plus Q_4 multiplier on the 10^3 cube: 270,641 unknowns."""
    m = build_box_mesh(*CUBE, (10, 10, 10))
    E = build_space(m, Family.EDGE, 3)
    S = build_space(m, Family.NODAL_SCALAR, 4)
    assert E.n_dofs + S.n_dofs == 270641


def test_full_size_displacement_dof_counts():
    """Q_4 vectors: 206,763 on the 10^3 cube, 1,402,323 on the 7 x 10^3 L-shape."""
    cube = build_box_mesh(*CUBE, (10, 10, 10))
    assert build_space(cube, Family.NODAL_VECTOR, 4).n_dofs == 206763
    assert 3 * (81**3 - 40**3) == 1402323
    assert build_space(build_lshape_mesh(10), Family.NODAL_VECTOR, 4).n_dofs == 1402323


def test_order_validation(mesh2):
    with pytest.raises(ValueError):
        build_space(mesh2, Family.NODAL_VECTOR, 1)
    with pytest.raises(ValueError):
        build_space(mesh2, Family.EDGE, -1)


def test_shared_dofs_agree_on_interfaces():
    m = build_lshape_mesh(1)
    V = build_space(m, Family.NODAL_SCALAR, 3)
    # every global node has one physical location regardless of the owning cell
    from robust_elasticity.ref_fe import nodal_lattice

    x = m.map_points(nodal_lattice(3))
    assert_allclose(V.node_coords[V.cell_nodes], x, atol=1e-14)


@pytest.mark.parametrize("family, order, fn, what", [
    (Family.NODAL_VECTOR, 2, lambda x: np.stack([x[:, 0] ** 2, x[:, 1] * x[:, 2], x[:, 0] - x[:, 2]], 1), "value"),
    (Family.NODAL_SCALAR, 3, lambda x: x[:, 0] ** 3 * x[:, 1] - x[:, 2], "value"),
    (Family.DISC_PRESSURE, 2, lambda x: x[:, 0] ** 2 + x[:, 1] * x[:, 2], "value"),
    (Family.EDGE, 1, lambda x: np.stack([x[:, 1] * x[:, 2], x[:, 0] ** 2, x[:, 2]], 1), "value"),
])
def test_interpolation_reproduces_polynomials(family, order, fn, what):
    m = build_lshape_mesh(1)
    S = build_space(m, family, order)
    fld = FEField(S, interpolate(S, fn))
    xi = RNG.random((7, 3))
    got = eval_field(fld, None, xi, what)
    want = np.asarray(fn(m.map_points(xi).reshape(-1, 3))).reshape(got.shape)
    assert_allclose(got, want, atol=1e-12)


def test_edge_interpolant_tangentially_continuous():
    m = build_box_mesh(*CUBE, (2, 2, 2))
    E = build_space(m, Family.EDGE, 1)
    fld = FEField(E, interpolate(E, lambda x: np.stack([np.sin(x[:, 1]), np.cos(x[:, 0] * x[:, 2]), x[:, 0] ** 3], 1)))
    # face x = 0 shared by cells with lo_x = -1 (side 1) and lo_x = 0 (side 0)
    yz = RNG.random((5, 2))
    left = np.array([c for c in range(8) if m.lo[c, 0] < -0.5])
    right = np.array([c for c in range(8) if m.lo[c, 0] > -0.5])
    for a in left:
        b = right[np.all(np.isclose(m.lo[right, 1:], m.lo[a, 1:]), axis=1)][0]
        va = eval_field(fld, int(a), np.column_stack([np.ones(5), yz]))
        vb = eval_field(fld, int(b), np.column_stack([np.zeros(5), yz]))
        assert_allclose(va[:, 1:], vb[:, 1:], atol=1e-13)


def test_boundary_classification_counts(mesh2):
    V = build_space(mesh2, Family.NODAL_VECTOR, 2)
    n_bnd_nodes = 5**3 - 3**3
    clamped = classify_boundary(V, BCRegime(BCKind.CLAMPED))
    np_ = classify_boundary(V, BCRegime(BCKind.NO_PENETRATION))
    ns = classify_boundary(V, BCRegime(BCKind.NO_SLIP))
    assert len(clamped.fixed) == 3 * n_bnd_nodes == 294
    # one normal component per face node, two on edges, three at corners
    faces, edges, corners = 6 * 9, 12 * 3, 8
    assert len(np_.fixed) == faces + 2 * edges + 3 * corners == 150
    assert len(ns.fixed) == 2 * faces + 3 * edges + 3 * corners == 240
    assert set(clamped.fixed) == set(np_.fixed) | set(ns.fixed)


def test_neumann_has_six_independent_rigid_functionals(mesh2):
    V = build_space(mesh2, Family.NODAL_VECTOR, 2)
    cs = classify_boundary(V, BCRegime("neumann"))
    assert len(cs.fixed) == 0 and cs.functional_rank() == 6
    F, labels = rigid_body_functionals(V)
    # a rigid rotation about the centroid has zero mean but non-zero moment
    rot = interpolate(V, lambda x: np.stack([-x[:, 1], x[:, 0], 0 * x[:, 0]], 1))
    m = F @ rot
    assert_allclose(m[:3], 0.0, atol=1e-13)
    assert abs(m[5]) > 1.0 and labels[5] == "moment_z"


def test_clamped_values_are_prescribed(mesh2):
    V = build_space(mesh2, Family.NODAL_VECTOR, 2)
    cs = classify_boundary(V, BCRegime("clamped", value=lambda x: x))
    nodes, comps = np.divmod(cs.fixed, 3)
    assert_allclose(cs.values, V.node_coords[nodes, comps])


def test_pressure_gauge_by_regime(mesh2):
    Q = build_space(mesh2, Family.DISC_PRESSURE, 1)
    assert pressure_gauge(Q, "clamped").n_functionals == 1
    assert pressure_gauge(Q, "no_penetration").n_functionals == 1
    assert pressure_gauge(Q, "no_slip").n_functionals == 0
    assert pressure_gauge(Q, "neumann").n_functionals == 0


@pytest.mark.parametrize("family, order", [(Family.DISC_PRESSURE, 2), (Family.NODAL_SCALAR, 2)])
def test_mean_functional_integrates(mesh2, family, order):
    S = build_space(mesh2, family, order)
    q = interpolate(S, lambda x: 1 + x[:, 0] ** 2)
    assert_allclose(mean_functional(S) @ q, 8 + 8 / 3, rtol=1e-12)


def test_edge_boundary_dofs(mesh2):
    E0 = build_space(mesh2, Family.EDGE, 0)
    # boundary edges of the 2^3 cube: 6 faces x 12 edges per 2x2 face grid, shared on the 12 cube edges
    assert len(edge_space_bc(E0).fixed) == 6 * 12 - 12 * 2 == 48
    assert len(edge_space_bc(E0, homogeneous=False).fixed) == 0


def test_scalar_h10_bc_is_boundary_nodes(mesh2):
    S = build_space(mesh2, Family.NODAL_SCALAR, 2)
    cs = scalar_h10_bc(S)
    assert len(cs.fixed) == 5**3 - 3**3
    on_bnd = np.any(np.isclose(np.abs(S.node_coords), 1.0), axis=1)
    assert set(cs.fixed) == set(np.nonzero(on_bnd)[0])
    assert len(boundary_dofs(build_space(mesh2, Family.DISC_PRESSURE, 1))) == 0
