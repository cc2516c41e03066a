import numpy as np
import pytest
from numpy.testing import assert_allclose

from robust_elasticity.ref_fe import (
    LOCAL_EDGES,
    LOCAL_FACES,
    LOCAL_VERTICES,
    edge_face_trace_dofs,
    edge_layout,
    eval_edge,
    eval_nodal,
    eval_pdisc,
    gauss_rule,
    gll_nodes,
    lagrange_1d,
    nodal_count,
    nodal_lattice,
    pdisc_count,
)

RNG = np.random.default_rng(2024)


def _fd(fn, x, step=1e-6):
    """Central differences of ``fn(points) -> (npts, ...)`` along each reference axis."""
    out = []
    for d in range(3):
        e = np.zeros(3)
        e[d] = step
        out.append((fn(x + e) - fn(x - e)) / (2 * step))
    return np.stack(out, axis=-1)


@pytest.mark.parametrize("n", range(1, 9))
def test_gauss_1d_exact_up_to_degree_2n_minus_1(n):
    r = gauss_rule(n, 1)
    for k in range(2 * n):
        assert abs(np.sum(r.weights * r.points[:, 0] ** k) - 1.0 / (k + 1)) < 1e-14


def test_gauss_1d_not_exact_at_degree_2n():
    r = gauss_rule(3, 1)
    assert abs(np.sum(r.weights * r.points[:, 0] ** 6) - 1.0 / 7) > 1e-6


def test_gauss_3d_monomials_and_ordering():
    r = gauss_rule(4, 3)
    assert r.points.shape == (64, 3)
    assert r.degree == 7
    # x varies fastest
    assert r.points[0, 0] < r.points[1, 0] and r.points[0, 1] == r.points[1, 1]
    for a, b, c in [(0, 0, 0), (7, 0, 0), (3, 5, 7), (2, 2, 6)]:
        val = np.sum(r.weights * r.points[:, 0] ** a * r.points[:, 1] ** b * r.points[:, 2] ** c)
        assert abs(val - 1.0 / ((a + 1) * (b + 1) * (c + 1))) < 1e-14


def test_gauss_rule_rejects_zero_points():
    with pytest.raises(ValueError):
        gauss_rule(0)


@pytest.mark.parametrize("p", range(1, 7))
def test_gll_nodes_endpoints_and_symmetry(p):
    g = gll_nodes(p)
    assert len(g) == p + 1
    assert g[0] == 0.0 and g[-1] == 1.0
    assert_allclose(g + g[::-1], 1.0, atol=1e-15)
    assert np.all(np.diff(g) > 0)


def test_lagrange_kronecker_partition_and_derivative():
    nodes = gll_nodes(4)
    v, _ = lagrange_1d(nodes, nodes)
    assert_allclose(v, np.eye(5), atol=1e-13)
    x = RNG.random(20)
    v, d = lagrange_1d(nodes, x)
    assert_allclose(v.sum(axis=1), 1.0, atol=1e-13)
    assert_allclose(d.sum(axis=1), 0.0, atol=1e-11)
    # reproduces x^3 and its derivative
    assert_allclose(v @ nodes**3, x**3, atol=1e-13)
    assert_allclose(d @ nodes**3, 3 * x**2, atol=1e-11)


def test_local_entity_tables():
    assert LOCAL_VERTICES.shape == (8, 3)
    assert_allclose(LOCAL_VERTICES[5], [1, 0, 1])  # v = a + 2b + 4c
    # every local edge joins vertices differing in exactly one coordinate, low -> high
    for a, b in LOCAL_EDGES:
        diff = LOCAL_VERTICES[b] - LOCAL_VERTICES[a]
        assert np.count_nonzero(diff) == 1 and diff.sum() == 1
    # local face 2d + side contains the vertices with xi_d = side
    for f, verts in enumerate(LOCAL_FACES):
        d, side = divmod(f, 2)
        assert np.all(LOCAL_VERTICES[verts][:, d] == side)


@pytest.mark.parametrize("p", range(1, 6))
def test_nodal_dimension_kronecker_and_partition(p):
    assert nodal_count(p) == (p + 1) ** 3
    lat = nodal_lattice(p)
    v, g = eval_nodal(p, lat)
    assert v.shape == (nodal_count(p), nodal_count(p))
    assert_allclose(v, np.eye(nodal_count(p)), atol=1e-12)
    x = RNG.random((10, 3))
    v, g = eval_nodal(p, x)
    assert_allclose(v.sum(axis=1), 1.0, atol=1e-12)
    assert_allclose(g.sum(axis=1), 0.0, atol=1e-10)


def test_nodal_gradient_matches_finite_differences():
    x = 0.1 + 0.8 * RNG.random((6, 3))
    _, g = eval_nodal(3, x)
    fd = _fd(lambda y: eval_nodal(3, y)[0], x)
    assert_allclose(g, fd, atol=1e-7)


@pytest.mark.parametrize("p", range(1, 7))
def test_pdisc_dimension(p):
    # P^disc_{p-1} has p(p+1)(p+2)/6 functions
    assert pdisc_count(p - 1) == p * (p + 1) * (p + 2) // 6


@pytest.mark.parametrize("degree", range(0, 5))
def test_pdisc_orthonormal_with_constant_first(degree):
    r = gauss_rule(degree + 2, 3)
    v = eval_pdisc(degree, r.points)
    assert v.shape[1] == pdisc_count(degree)
    gram = (v * r.weights[:, None]).T @ v
    assert_allclose(gram, np.eye(v.shape[1]), atol=1e-12)
    assert_allclose(v[:, 0], 1.0)


def test_pdisc_gradients_match_finite_differences():
    x = 0.1 + 0.8 * RNG.random((5, 3))
    _, g = eval_pdisc(3, x, derivatives=True)
    fd = _fd(lambda y: eval_pdisc(3, y), x)
    assert_allclose(g, fd, atol=1e-6)


def test_lowest_order_edge_element_has_12_functions():
    lay = edge_layout(0)
    assert lay.size == 12
    assert np.all(lay.kind == 0)
    assert sorted(lay.entity.tolist()) == list(range(12))


@pytest.mark.parametrize("p", range(0, 4))
def test_edge_layout_counts(p):
    lay = edge_layout(p)
    assert lay.size == 3 * (p + 1) * (p + 2) ** 2
    assert np.sum(lay.kind == 0) == 12 * lay.per_edge()
    assert np.sum(lay.kind == 1) == 6 * lay.per_face()
    assert np.sum(lay.kind == 2) == lay.per_cell()


@pytest.mark.parametrize("p", range(0, 4))
def test_edge_functions_interpolatory_at_their_points(p):
    lay = edge_layout(p)
    v, _ = eval_edge(p, lay.points)
    tang = v[np.arange(lay.size)[:, None], np.arange(lay.size)[None, :], lay.entries[:, 0][:, None]]
    assert_allclose(tang, np.eye(lay.size), atol=1e-12)


@pytest.mark.parametrize("p", [0, 1, 2])
def test_edge_curl_and_jacobian_match_finite_differences(p):
    x = 0.1 + 0.8 * RNG.random((4, 3))
    v, c, jac = eval_edge(p, x, jacobian=True)
    fd = _fd(lambda y: eval_edge(p, y)[0], x)
    assert_allclose(jac, fd, atol=1e-6)
    curl = np.stack([fd[..., 2, 1] - fd[..., 1, 2], fd[..., 0, 2] - fd[..., 2, 0], fd[..., 1, 0] - fd[..., 0, 1]], -1)
    assert_allclose(c, curl, atol=1e-6)


@pytest.mark.parametrize("p", [0, 1, 2])
def test_edge_face_traces_vanish_for_other_functions(p):
    traces = edge_face_trace_dofs(p)
    x = RNG.random((8, 3))
    for lf in range(6):
        d, side = divmod(lf, 2)
        pts = x.copy()
        pts[:, d] = side
        v, _ = eval_edge(p, pts)
        others = np.setdiff1d(np.arange(edge_layout(p).size), traces[lf])
        tangential = np.delete(v[:, others, :], d, axis=2)
        assert np.abs(tangential).max() < 1e-12


@pytest.mark.parametrize("p", [0, 1, 2, 3])
def test_exact_sequence_gradients_lie_in_edge_space(p):
    """grad Q_{p+1} is contained in the order-p edge space (least-squares fit residual)."""
    xi = RNG.random((3 * (p + 1) * (p + 2) ** 2 * 3, 3))
    ev, _ = eval_edge(p, xi)
    _, g = eval_nodal(p + 1, xi)
    M = ev.transpose(0, 2, 1).reshape(-1, ev.shape[1])
    R = g.transpose(0, 2, 1).reshape(-1, g.shape[1])
    coef, *_ = np.linalg.lstsq(M, R, rcond=None)
    assert np.abs(M @ coef - R).max() <= 1e-10 * np.abs(R).max()
    # and the fitted coefficients are curl free
    _, curls = eval_edge(p, xi)
    assert np.abs(np.einsum("qai,ab->qbi", curls, coef)).max() < 1e-9
