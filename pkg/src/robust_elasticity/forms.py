"""Assembly of the bilinear forms and load vectors.

Element matrices depend only on the cell extents, so they are computed once
per extent class and scattered with the cell sign tables.  Cells are split
into fixed-size chunks; chunk matrices are merged by a balanced pairwise sum
in chunk order, which keeps the result independent of the thread count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.io
import scipy.sparse as sp

from .mesh import HexMesh
from .ref_fe import eval_nodal, gauss_rule
from .spaces import Family, FESpace, local_basis

CHUNK_ENTRIES = 4_000_000


@dataclass(frozen=True)
class MaterialParams:
    mu: float
    kappa_ratio: float | None = 1e7  # kappa / mu; None means incompressible (eps = 0)

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"shear modulus must be positive, got {self.mu}")
        if self.kappa_ratio is not None and not self.kappa_ratio > 0:
            raise ValueError(f"kappa/mu must be positive, got {self.kappa_ratio}")

    @property
    def eps(self) -> float:
        """Volumetric compliance ``1 / kappa``."""
        return 0.0 if self.kappa_ratio is None else 1.0 / (self.kappa_ratio * self.mu)


@dataclass(frozen=True)
class LoadFunction:
    """Vector density evaluated at physical points.

    ``fn`` maps ``(n, 3)`` points to ``(n, 3)`` values.  ``cell_eval`` (optional)
    maps ``(mesh, xi)`` to ``(ncell, nq, 3)`` and takes precedence; it is how
    finite-element fields are consumed directly at quadrature points.
    """

    fn: Callable | None = None
    degree: int = 0
    name: str = "load"
    cell_eval: Callable | None = None

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if self.fn is None:
            raise TypeError(f"load {self.name!r} is only defined at quadrature points")
        return self.fn(np.asarray(x, dtype=float))

    def at_quadrature(self, mesh: HexMesh, xi: np.ndarray) -> np.ndarray:
        if self.cell_eval is not None:
            return self.cell_eval(mesh, xi)
        x = mesh.map_points(xi)
        return np.asarray(self.fn(x.reshape(-1, 3)), dtype=float).reshape(x.shape)


def zero_load() -> LoadFunction:
    return LoadFunction(lambda x: np.zeros((len(x), 3)), 0, "zero")


def constant_load(value) -> LoadFunction:
    value = np.asarray(value, dtype=float)
    return LoadFunction(lambda x: np.tile(value, (len(x), 1)), 0, "constant")


# --------------------------------------------------------------------------
# generic scatter
# --------------------------------------------------------------------------


def _chunks(n: int, per_cell: int) -> list[slice]:
    size = max(1, CHUNK_ENTRIES // max(per_cell, 1))
    return [slice(s, min(s + size, n)) for s in range(0, n, size)]


def _tree_sum(mats: list[sp.csr_matrix]) -> sp.csr_matrix:
    while len(mats) > 1:
        nxt = [mats[i] + mats[i + 1] for i in range(0, len(mats) - 1, 2)]
        if len(mats) % 2:
            nxt.append(mats[-1])
        mats = nxt
    return mats[0]


def scatter(row_space: FESpace, col_space: FESpace, elem: Callable, threads: int = 1,
            cell_order: np.ndarray | None = None) -> sp.csr_matrix:
    """Assemble ``sum_cells S_r Ke S_c`` where ``elem(h) -> Ke`` per extent class."""
    mesh = row_space.mesh
    if col_space.mesh is not mesh:
        raise ValueError("spaces live on different meshes")
    shape = (row_space.n_dofs, col_space.n_dofs)
    cells = np.arange(mesh.n_cells) if cell_order is None else np.asarray(cell_order)
    klass = np.empty(mesh.n_cells, dtype=np.int64)
    mats = []
    for idx, (h, members) in enumerate(mesh.cell_classes()):
        klass[members] = idx
        mats.append(elem(np.array(h)))
    nr, ncl = row_space.n_local, col_space.n_local

    def work(sl: slice) -> sp.csr_matrix:
        cl = cells[sl]
        ke = np.stack(mats)[klass[cl]] if len(mats) > 1 else mats[0][None]
        data = row_space.cell_signs[cl][:, :, None] * ke * col_space.cell_signs[cl][:, None, :]
        r = np.broadcast_to(row_space.cell_dofs[cl][:, :, None], data.shape)
        c = np.broadcast_to(col_space.cell_dofs[cl][:, None, :], data.shape)
        return sp.coo_matrix((data.ravel(), (r.ravel(), c.ravel())), shape=shape).tocsr()

    parts = _chunks(len(cells), nr * ncl)
    if threads > 1 and len(parts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(work, parts))
    else:
        out = [work(s) for s in parts]
    A = _tree_sum(out)
    A.sum_duplicates()
    A.sort_indices()
    return A


def _rule(space: FESpace, n: int | None = None):
    return gauss_rule(n or space.quadrature_order(), 3)


# --------------------------------------------------------------------------
# bilinear forms
# --------------------------------------------------------------------------


def _require(space: FESpace, *families: Family) -> None:
    if space.family not in families:
        raise ValueError(f"expected {[f.value for f in families]}, got {space.family.value}")


def elastic_element(space_u: FESpace, mu: float, h) -> np.ndarray:
    """Element matrix of ``int 2 mu e(u):e(v)`` with the deviatoric strain ``e``."""
    rule = _rule(space_u)
    det = float(np.prod(h))
    _, g = eval_nodal(space_u.order, rule.points)
    g = g / h
    wg = g * (rule.weights * det)[:, None, None]
    L = np.einsum("qai,qbi->ab", wg, g)
    T = np.einsum("qac,qbd->abcd", wg, g)  # g_a[c] g_b[d]
    nb = g.shape[1]
    A = np.zeros((nb, 3, nb, 3))
    eye = np.eye(3)
    # A[(a,c),(b,d)] = mu (delta_cd L_ab + g_a[d] g_b[c]) - 2mu/3 g_a[c] g_b[d]
    A += mu * eye[None, :, None, :] * L[:, None, :, None]
    A += mu * T.transpose(0, 3, 1, 2)
    A -= (2.0 * mu / 3.0) * T.transpose(0, 2, 1, 3)
    return A.reshape(3 * nb, 3 * nb)


def assemble_elastic_A(space_u: FESpace, mu: float, threads: int = 1) -> sp.csr_matrix:
    _require(space_u, Family.NODAL_VECTOR)
    return scatter(space_u, space_u, lambda h: elastic_element(space_u, mu, h), threads)


def assemble_div_B(space_u: FESpace, space_p: FESpace, threads: int = 1) -> sp.csr_matrix:
    """``B[k, i] = -int q_k div phi_i``."""
    _require(space_u, Family.NODAL_VECTOR)
    _require(space_p, Family.DISC_PRESSURE, Family.NODAL_SCALAR)
    rule = _rule(space_u)

    def elem(h):
        det = float(np.prod(h))
        bu = local_basis(space_u, rule.points, h)
        bp = local_basis(space_p, rule.points, h)
        return -np.einsum("q,qk,qi->ki", rule.weights * det, bp["val"], bu["div"])

    return scatter(space_p, space_u, elem, threads)


def mass_element(space: FESpace, h, n: int | None = None) -> np.ndarray:
    rule = _rule(space, n)
    det = float(np.prod(h))
    v = local_basis(space, rule.points, h)["val"]
    if v.ndim == 2:
        return np.einsum("q,qa,qb->ab", rule.weights * det, v, v)
    return np.einsum("q,qai,qbi->ab", rule.weights * det, v, v)


def assemble_mass(space: FESpace, threads: int = 1) -> sp.csr_matrix:
    return scatter(space, space, lambda h: mass_element(space, h), threads)


def assemble_penalty_C(space_p: FESpace, eps: float, threads: int = 1) -> sp.csr_matrix:
    """``eps`` times the pressure mass matrix."""
    if eps < 0:
        raise ValueError("volumetric compliance must be non-negative")
    if eps == 0:
        return sp.csr_matrix((space_p.n_dofs, space_p.n_dofs))
    return eps * assemble_mass(space_p, threads)


def assemble_curlcurl_K(space_A: FESpace, mu: float = 1.0, threads: int = 1) -> sp.csr_matrix:
    _require(space_A, Family.EDGE, Family.NODAL_VECTOR)
    rule = _rule(space_A)

    def elem(h):
        det = float(np.prod(h))
        b = local_basis(space_A, rule.points, h)
        if "curl" in b:
            c = b["curl"]
        else:
            g = b["grad"]
            c = np.stack([g[..., 2, 1] - g[..., 1, 2], g[..., 0, 2] - g[..., 2, 0], g[..., 1, 0] - g[..., 0, 1]], -1)
        return mu * np.einsum("q,qai,qbi->ab", rule.weights * det, c, c)

    return scatter(space_A, space_A, elem, threads)


def assemble_grad_G(space_vec: FESpace, space_scalar: FESpace, threads: int = 1) -> sp.csr_matrix:
    """``G[i, k] = int phi_i . grad psi_k``."""
    _require(space_vec, Family.EDGE, Family.NODAL_VECTOR)
    _require(space_scalar, Family.NODAL_SCALAR)
    n = max(space_vec.order, space_scalar.order) + 2
    rule = gauss_rule(n, 3)

    def elem(h):
        det = float(np.prod(h))
        v = local_basis(space_vec, rule.points, h)["val"]
        g = local_basis(space_scalar, rule.points, h)["grad"]
        return np.einsum("q,qai,qki->ak", rule.weights * det, v, g)

    return scatter(space_vec, space_scalar, elem, threads)


# --------------------------------------------------------------------------
# load vectors
# --------------------------------------------------------------------------


def load_quadrature(space: FESpace, f: LoadFunction) -> int:
    """Points per axis for load vectors: ``max(p + 2, 7)`` and enough for the degree hint."""
    need = (space.order + 1 + f.degree) // 2 + 1
    return max(space.order + 2, 7, need)


def _scatter_vector(space: FESpace, local: np.ndarray) -> np.ndarray:
    out = np.zeros(space.n_dofs)
    np.add.at(out, space.cell_dofs.ravel(), (local * space.cell_signs).ravel())
    return out


def _per_class_basis(space: FESpace, xi: np.ndarray, key: str) -> np.ndarray:
    """Basis table ``key`` for every cell, ``(nc, nq, nl, ...)`` (shared per class)."""
    mesh = space.mesh
    out = None
    for h, members in mesh.cell_classes():
        t = local_basis(space, xi, np.array(h))[key]
        if out is None:
            out = np.empty((mesh.n_cells,) + t.shape)
        out[members] = t
    return out


def assemble_body_load(space: FESpace, f: LoadFunction, n_quad: int | None = None) -> np.ndarray:
    """``int v . f`` for every basis function ``v`` of a vector space."""
    _require(space, Family.NODAL_VECTOR, Family.EDGE)
    rule = gauss_rule(n_quad or load_quadrature(space, f), 3)
    mesh = space.mesh
    fq = f.at_quadrature(mesh, rule.points)  # (nc, nq, 3)
    wdet = rule.weights[None, :] * mesh.det[:, None]
    if space.family is Family.NODAL_VECTOR:
        v, _ = eval_nodal(space.order, rule.points)
        local = np.einsum("cq,qa,cqi->cai", wdet, v, fq).reshape(mesh.n_cells, -1)
    else:
        v = _per_class_basis(space, rule.points, "val")
        local = np.einsum("cq,cqai,cqi->ca", wdet, v, fq)
    return _scatter_vector(space, local)


def assemble_curl_load(space_A: FESpace, f: LoadFunction, n_quad: int | None = None) -> np.ndarray:
    """``int curl v . f`` over the edge space (right-hand side of the potential problem)."""
    _require(space_A, Family.EDGE)
    rule = gauss_rule(n_quad or load_quadrature(space_A, f), 3)
    mesh = space_A.mesh
    fq = f.at_quadrature(mesh, rule.points)
    wdet = rule.weights[None, :] * mesh.det[:, None]
    c = _per_class_basis(space_A, rule.points, "curl")
    local = np.einsum("cq,cqai,cqi->ca", wdet, c, fq)
    return _scatter_vector(space_A, local)


def _face_rule(lf: int, n: int):
    r = gauss_rule(n, 2)
    d, side = divmod(lf, 2)
    t1, t2 = (a for a in range(3) if a != d)
    pts = np.zeros((len(r.weights), 3))
    pts[:, d] = side
    pts[:, t1], pts[:, t2] = r.points[:, 0], r.points[:, 1]
    return pts, r.weights


def assemble_traction_load(space: FESpace, s: Callable, faces: np.ndarray | None = None,
                           n_quad: int | None = None) -> np.ndarray:
    """``int_Gamma v . s`` with ``s(points, normals) -> (n, 3)``.

    ``faces`` indexes rows of ``mesh.boundary_cell_faces`` (all boundary faces
    by default).
    """
    _require(space, Family.NODAL_VECTOR, Family.EDGE)
    mesh = space.mesh
    n = n_quad or max(space.order + 2, 7)
    bcf = mesh.boundary_cell_faces
    sel = np.arange(len(bcf)) if faces is None else np.asarray(faces)
    out = np.zeros(space.n_dofs)
    for lf in range(6):
        rows = sel[bcf[sel, 1] == lf]
        if len(rows) == 0:
            continue
        cells = bcf[rows, 0]
        pts, w = _face_rule(lf, n)
        x = mesh.map_points(pts, cells)
        normals = np.repeat(mesh.boundary_normals[rows][:, None, :], len(w), axis=1)
        sv = np.asarray(s(x.reshape(-1, 3), normals.reshape(-1, 3)), dtype=float).reshape(x.shape)
        h = mesh.h[cells]
        area = np.prod(h, axis=1) / h[:, lf // 2]
        local = np.zeros((len(cells), space.n_local))
        for h_cls in np.unique(h, axis=0):
            m = np.all(h == h_cls, axis=1)
            v = local_basis(space, pts, h_cls)["val"]
            local[m] = np.einsum("cq,qai,cqi->ca", area[m, None] * w[None, :], v, sv[m])
        np.add.at(out, space.cell_dofs[cells].ravel(), (local * space.cell_signs[cells]).ravel())
    return out


# --------------------------------------------------------------------------
# identity check and export
# --------------------------------------------------------------------------


def _curl_from_jac(J: np.ndarray) -> np.ndarray:
    return np.stack([J[..., 2, 1] - J[..., 1, 2], J[..., 0, 2] - J[..., 2, 0], J[..., 1, 0] - J[..., 0, 1]], -1)


def _dev_sym(J: np.ndarray) -> np.ndarray:
    e = 0.5 * (J + np.swapaxes(J, -1, -2))
    tr = np.trace(e, axis1=-2, axis2=-1)
    return e - tr[..., None, None] * np.eye(3) / 3.0


def curl_curl_identity_check(jac_u: Callable, jac_v: Callable, mu: float, mesh: HexMesh,
                             n_quad: int = 8) -> tuple[float, float, float]:
    """Compare ``int mu curl u . curl v`` with ``int 2 mu e(u):e(v)``.

    ``jac_u``/``jac_v`` map points ``(n, 3)`` to Jacobians ``(n, 3, 3)``
    indexed ``[component, derivative]``.
    """
    rule = gauss_rule(n_quad, 3)
    x = mesh.map_points(rule.points).reshape(-1, 3)
    w = (rule.weights[None, :] * mesh.det[:, None]).ravel()
    Ju, Jv = np.asarray(jac_u(x)), np.asarray(jac_v(x))
    lhs = float(np.sum(w * mu * np.einsum("qi,qi->q", _curl_from_jac(Ju), _curl_from_jac(Jv))))
    rhs = float(np.sum(w * 2 * mu * np.einsum("qij,qij->q", _dev_sym(Ju), _dev_sym(Jv))))
    return lhs, rhs, abs(lhs - rhs)


def dump_matrix_market(path, matrix, comment: str = "") -> Path:
    """Write a sparse matrix in MatrixMarket coordinate format (atomic)."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        scipy.io.mmwrite(fh, sp.coo_matrix(matrix), comment=comment)
    tmp.replace(path)
    return path
