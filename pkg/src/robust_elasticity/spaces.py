"""Global finite-element spaces, boundary classification and constraint functionals.

Global numbering always runs over vertices, then edges, then faces, then
cells, in mesh-entity order.  Vector nodal spaces interleave components
(``3 * node + comp``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .mesh import HexMesh
from .ref_fe import (
    edge_face_trace_dofs,
    edge_layout,
    eval_edge,
    eval_nodal,
    eval_pdisc,
    gauss_rule,
    nodal_face_dofs,
    nodal_lattice,
    nodal_multi_index,
    pdisc_count,
)


class Family(str, Enum):
    NODAL_VECTOR = "NodalVector"
    NODAL_SCALAR = "NodalScalar"
    DISC_PRESSURE = "DiscPressure"
    EDGE = "Edge"


MIN_ORDER = {
    Family.NODAL_VECTOR: 2,
    Family.NODAL_SCALAR: 1,
    Family.DISC_PRESSURE: 0,
    Family.EDGE: 0,
}


@dataclass(frozen=True, eq=False)
class FESpace:
    mesh: HexMesh
    family: Family
    order: int
    cell_dofs: np.ndarray  # (nc, n_local) global indices
    cell_signs: np.ndarray  # (nc, n_local) +-1.0
    n_dofs: int
    node_coords: np.ndarray | None = None  # nodal families only
    cell_nodes: np.ndarray | None = None  # nodal families only
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_components(self) -> int:
        return 3 if self.family in (Family.NODAL_VECTOR, Family.EDGE) else 1

    @property
    def n_local(self) -> int:
        return self.cell_dofs.shape[1]

    def quadrature_order(self) -> int:
        """Points per axis used for bilinear forms (``p + 2``)."""
        return self.order + 2


def _nodal_numbering(mesh: HexMesh, p: int) -> tuple[np.ndarray, int]:
    """Global scalar node index of every local lattice node, ``(nc, (p+1)^3)``."""
    mi = nodal_multi_index(p)
    nv, ne, nf, nc = mesh.n_vertices, len(mesh.edges), len(mesh.faces), mesh.n_cells
    m = p - 1
    off_e, off_f, off_c = nv, nv + ne * m, nv + ne * m + nf * m * m
    out = np.empty((nc, len(mi)), dtype=np.int64)
    for a, (i, j, k) in enumerate(mi):
        at_end = [v in (0, p) for v in (i, j, k)]
        idx = (i, j, k)
        nb = sum(at_end)
        if nb == 3:
            lv = (i // p) + 2 * (j // p) + 4 * (k // p)
            out[:, a] = mesh.cells[:, lv]
        elif nb == 2:
            d = at_end.index(False)
            o = [ax for ax in range(3) if ax != d]
            le = 4 * d + idx[o[0]] // p + 2 * (idx[o[1]] // p)
            t = idx[d] - 1
            signs = mesh.cell_edge_signs[:, le]
            t_glob = np.where(signs > 0, t, m - 1 - t)
            out[:, a] = off_e + mesh.cell_edges[:, le] * m + t_glob
        elif nb == 1:
            d = at_end.index(True)
            t1, t2 = (ax for ax in range(3) if ax != d)
            lf = 2 * d + idx[d] // p
            # axis-aligned cells share the face parametrisation: no permutation needed
            out[:, a] = off_f + mesh.cell_faces[:, lf] * m * m + (idx[t1] - 1) + m * (idx[t2] - 1)
        else:
            out[:, a] = off_c + np.arange(nc) * m ** 3 + (i - 1) + m * ((j - 1) + m * (k - 1))
    return out, off_c + nc * m ** 3


def _edge_numbering(mesh: HexMesh, p: int) -> tuple[np.ndarray, np.ndarray, int]:
    lay = edge_layout(p)
    ne, nf, nc = len(mesh.edges), len(mesh.faces), mesh.n_cells
    pe, pf, pc = lay.per_edge(), lay.per_face(), lay.per_cell()
    off_f, off_c = ne * pe, ne * pe + nf * pf
    dofs = np.empty((nc, lay.size), dtype=np.int64)
    signs = np.ones((nc, lay.size))
    for n in range(lay.size):
        kind, ent, pos = lay.kind[n], lay.entity[n], lay.position[n]
        if kind == 0:
            s = mesh.cell_edge_signs[:, ent].astype(float)
            gpos = np.where(s > 0, pos, p - pos)
            dofs[:, n] = mesh.cell_edges[:, ent] * pe + gpos
            signs[:, n] = s
        elif kind == 1:
            dofs[:, n] = off_f + mesh.cell_faces[:, ent] * pf + pos
        else:
            dofs[:, n] = off_c + np.arange(nc) * pc + pos
    return dofs, signs, off_c + nc * pc


def build_space(mesh: HexMesh, family, order: int) -> FESpace:
    """Global space of the given family; ``order`` is ``p`` (``p-1`` for DiscPressure)."""
    family = Family(family)
    order = int(order)
    if order < MIN_ORDER[family]:
        raise ValueError(f"{family.value} needs order >= {MIN_ORDER[family]}, got {order}")
    nc = mesh.n_cells
    if family in (Family.NODAL_SCALAR, Family.NODAL_VECTOR):
        nodes, n_nodes = _nodal_numbering(mesh, order)
        coords = np.empty((n_nodes, 3))
        coords[nodes.ravel()] = mesh.map_points(nodal_lattice(order)).reshape(-1, 3)
        if family is Family.NODAL_VECTOR:
            dofs = (3 * nodes[:, :, None] + np.arange(3)).reshape(nc, -1)
            n = 3 * n_nodes
        else:
            dofs, n = nodes, n_nodes
        return FESpace(mesh, family, order, dofs, np.ones(dofs.shape), n, coords, nodes)
    if family is Family.DISC_PRESSURE:
        nl = pdisc_count(order)
        dofs = np.arange(nc * nl, dtype=np.int64).reshape(nc, nl)
        return FESpace(mesh, family, order, dofs, np.ones(dofs.shape), nc * nl)
    dofs, signs, n = _edge_numbering(mesh, order)
    return FESpace(mesh, family, order, dofs, signs, n)


# --------------------------------------------------------------------------
# local basis tables in physical units
# --------------------------------------------------------------------------


def local_basis(space: FESpace, xi: np.ndarray, h) -> dict:
    """Physical-space basis tables on a cell with extents ``h`` (unsigned).

    Returns a dict with ``val`` (nq, nl) or (nq, nl, 3) and, as applicable,
    ``grad`` (nq, nl, 3) / (nq, nl, 3, 3) indexed ``[comp, deriv]``,
    ``div`` and ``curl``.
    """
    h = np.asarray(h, dtype=float)
    fam, p = space.family, space.order
    if fam in (Family.NODAL_SCALAR, Family.NODAL_VECTOR):
        v, g = eval_nodal(p, xi)
        g = g / h
        if fam is Family.NODAL_SCALAR:
            return {"val": v, "grad": g}
        nq, nb = v.shape
        val = np.zeros((nq, nb, 3, 3))
        grad = np.zeros((nq, nb, 3, 3, 3))
        for c in range(3):
            val[:, :, c, c] = v
            grad[:, :, c, c, :] = g
        val = val.reshape(nq, 3 * nb, 3)
        grad = grad.reshape(nq, 3 * nb, 3, 3)
        return {"val": val, "grad": grad, "div": np.trace(grad, axis1=2, axis2=3)}
    if fam is Family.DISC_PRESSURE:
        return {"val": eval_pdisc(p, xi)}
    v, c = eval_edge(p, xi)
    det = float(np.prod(h))
    return {"val": v / h, "curl": c * h / det}


# --------------------------------------------------------------------------
# interpolation
# --------------------------------------------------------------------------


def interpolate(space: FESpace, fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Canonical interpolant of a vectorised function ``fn(points (n,3))``.

    Nodal spaces use nodal values, edge spaces the tangential point values
    that define their degrees of freedom, and the discontinuous pressure a
    cell-wise L2 projection.
    """
    mesh = space.mesh
    fam = space.family
    if fam in (Family.NODAL_SCALAR, Family.NODAL_VECTOR):
        vals = np.asarray(fn(space.node_coords), dtype=float)
        return vals.reshape(-1).copy()
    if fam is Family.DISC_PRESSURE:
        rule = gauss_rule(space.order + 3, 3)
        x = mesh.map_points(rule.points)
        vals = np.asarray(fn(x.reshape(-1, 3)), dtype=float).reshape(mesh.n_cells, -1)
        basis = eval_pdisc(space.order, rule.points)  # orthonormal on [0,1]^3
        return ((vals * rule.weights) @ basis).ravel()
    lay = edge_layout(space.order)
    x = mesh.map_points(lay.points)  # (nc, n, 3)
    vals = np.asarray(fn(x.reshape(-1, 3)), dtype=float).reshape(mesh.n_cells, lay.size, 3)
    d = lay.entries[:, 0]
    tang = vals[:, np.arange(lay.size), d] * mesh.h[:, d]
    out = np.zeros(space.n_dofs)
    out[space.cell_dofs] = tang * space.cell_signs
    return out


# --------------------------------------------------------------------------
# boundary conditions and constraints
# --------------------------------------------------------------------------


class BCKind(str, Enum):
    CLAMPED = "clamped"
    NO_PENETRATION = "no_penetration"
    NO_SLIP = "no_slip"
    NEUMANN = "neumann"


@dataclass(frozen=True)
class BCRegime:
    kind: BCKind
    value: Callable | None = None  # prescribed displacement for Clamped
    traction: Callable | None = None  # prescribed traction for Neumann

    def __post_init__(self):
        object.__setattr__(self, "kind", BCKind(self.kind))

    @property
    def zero_mean_pressure(self) -> bool:
        return self.kind in (BCKind.CLAMPED, BCKind.NO_PENETRATION)


@dataclass
class ConstraintSet:
    n_dofs: int
    fixed: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    functionals: sp.csr_matrix | None = None
    labels: list[str] = field(default_factory=list)

    @property
    def n_functionals(self) -> int:
        return 0 if self.functionals is None else self.functionals.shape[0]

    def fixed_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_dofs, dtype=bool)
        mask[self.fixed] = True
        return mask

    def functional_rank(self) -> int:
        if self.n_functionals == 0:
            return 0
        return int(np.linalg.matrix_rank(self.functionals.toarray()))


def _boundary_node_normals(space: FESpace) -> np.ndarray:
    """Per scalar node, which axes are normal to a boundary face containing it."""
    mesh = space.mesh
    n_nodes = len(space.node_coords)
    mask = np.zeros((n_nodes, 3), dtype=bool)
    local = nodal_face_dofs(space.order)
    for cell, lf in mesh.boundary_cell_faces:
        nodes = space.cell_nodes[cell, local[lf]]
        mask[nodes, lf // 2] = True
    return mask


def classify_boundary(space: FESpace, regime: BCRegime) -> ConstraintSet:
    if space.family is not Family.NODAL_VECTOR:
        raise ValueError("boundary classification needs a NodalVector space")
    normals = np.abs(space.mesh.boundary_normals)
    if not np.allclose(normals.sum(axis=1), 1.0) or not np.allclose(normals.max(axis=1), 1.0):
        raise ValueError("strong component constraints need axis-aligned boundary faces")
    regime = regime if isinstance(regime, BCRegime) else BCRegime(regime)
    cs = ConstraintSet(space.n_dofs)
    mask = _boundary_node_normals(space)
    on_bnd = mask.any(axis=1)
    if regime.kind is BCKind.NEUMANN:
        cs.functionals, cs.labels = rigid_body_functionals(space)
        return cs
    if regime.kind is BCKind.NO_PENETRATION:
        fix = mask
    elif regime.kind is BCKind.NO_SLIP:
        # tangential components of every face touching the node
        fix = np.zeros_like(mask)
        for a in range(3):
            fix |= mask[:, [a]] & (np.arange(3) != a)[None, :]
    else:
        fix = np.repeat(on_bnd[:, None], 3, axis=1)
    nodes, comps = np.nonzero(fix)
    cs.fixed = 3 * nodes + comps
    cs.values = np.zeros(len(cs.fixed))
    if regime.kind is BCKind.CLAMPED and regime.value is not None:
        vals = np.asarray(regime.value(space.node_coords[nodes]), dtype=float).reshape(-1, 3)
        cs.values = vals[np.arange(len(nodes)), comps]
    return cs


def _cell_quadrature(space: FESpace, n: int | None = None):
    rule = gauss_rule(n or space.order + 2, 3)
    return rule, space.mesh.map_points(rule.points)


def rigid_body_functionals(space: FESpace) -> tuple[sp.csr_matrix, list[str]]:
    """Rows ``int w_c`` and ``int (r x w)_c`` with ``r`` about the centroid."""
    mesh = space.mesh
    rule, x = _cell_quadrature(space)
    v, _ = eval_nodal(space.order, rule.points)
    wdet = rule.weights[None, :] * mesh.det[:, None]
    centroid = np.einsum("cq,cqd->d", wdet, x) / wdet.sum()
    r = x - centroid
    nodes = space.cell_nodes
    rows, cols, data = [], [], []
    n_nodes = len(space.node_coords)
    # translation moments
    m0 = np.einsum("cq,qa->ca", wdet, v)
    for c in range(3):
        rows.append(np.full(m0.size, c)), cols.append((3 * nodes + c).ravel()), data.append(m0.ravel())
    # rotation moments: (r x e_c)_k = eps_{k j c} r_j
    mr = np.einsum("cq,qa,cqj->caj", wdet, v, r)
    eps = np.zeros((3, 3, 3))
    eps[0, 1, 2] = eps[1, 2, 0] = eps[2, 0, 1] = 1
    eps[0, 2, 1] = eps[2, 1, 0] = eps[1, 0, 2] = -1
    for k in range(3):
        for c in range(3):
            coef = np.einsum("j,caj->ca", eps[k, :, c], mr)
            rows.append(np.full(coef.size, 3 + k)), cols.append((3 * nodes + c).ravel()), data.append(coef.ravel())
    F = sp.csr_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(6, 3 * n_nodes)
    )
    labels = ["mean_x", "mean_y", "mean_z", "moment_x", "moment_y", "moment_z"]
    return F, labels


def mean_functional(space: FESpace) -> sp.csr_matrix:
    """Row vector representing ``q -> int q dx`` on a scalar space."""
    mesh = space.mesh
    if space.family is Family.DISC_PRESSURE:
        vals = np.zeros(space.cell_dofs.shape)
        vals[:, 0] = mesh.det  # orthonormal basis: only the constant has a mean
    elif space.family is Family.NODAL_SCALAR:
        rule = gauss_rule(space.order + 2, 3)
        v, _ = eval_nodal(space.order, rule.points)
        vals = mesh.det[:, None] * (rule.weights @ v)[None, :]
    else:
        raise ValueError("mean functional needs a scalar space")
    row = np.zeros(space.n_dofs)
    np.add.at(row, space.cell_dofs.ravel(), vals.ravel())
    return sp.csr_matrix(row[None, :])


def pressure_gauge(space_p: FESpace, regime) -> ConstraintSet:
    regime = regime if isinstance(regime, BCRegime) else BCRegime(regime)
    cs = ConstraintSet(space_p.n_dofs)
    if regime.zero_mean_pressure:
        cs.functionals = mean_functional(space_p)
        cs.labels = ["pressure_mean"]
    return cs


def edge_space_bc(space_A: FESpace, homogeneous: bool = True) -> ConstraintSet:
    if space_A.family is not Family.EDGE:
        raise ValueError("edge_space_bc needs an Edge space")
    cs = ConstraintSet(space_A.n_dofs)
    if not homogeneous:
        return cs
    cs.fixed = boundary_dofs(space_A)
    cs.values = np.zeros(len(cs.fixed))
    return cs


def boundary_dofs(space: FESpace) -> np.ndarray:
    """Global DOFs with non-zero trace on the boundary (tangential trace for Edge)."""
    mesh = space.mesh
    if space.family is Family.EDGE:
        local = edge_face_trace_dofs(space.order)
    elif space.family is Family.NODAL_SCALAR:
        local = nodal_face_dofs(space.order)
    elif space.family is Family.NODAL_VECTOR:
        nf = nodal_face_dofs(space.order)
        local = [(3 * a[:, None] + np.arange(3)).ravel() for a in nf]
    else:
        return np.zeros(0, dtype=np.int64)
    found = [space.cell_dofs[c, local[lf]] for c, lf in mesh.boundary_cell_faces]
    return np.unique(np.concatenate(found)) if found else np.zeros(0, dtype=np.int64)


def scalar_h10_bc(space: FESpace) -> ConstraintSet:
    """Homogeneous Dirichlet constraints on a NodalScalar space."""
    cs = ConstraintSet(space.n_dofs)
    cs.fixed = boundary_dofs(space)
    cs.values = np.zeros(len(cs.fixed))
    return cs


__all__ = [
    "BCKind",
    "BCRegime",
    "ConstraintSet",
    "FESpace",
    "Family",
    "boundary_dofs",
    "build_space",
    "classify_boundary",
    "edge_space_bc",
    "interpolate",
    "local_basis",
    "mean_functional",
    "pressure_gauge",
    "rigid_body_functionals",
    "scalar_h10_bc",
]
