"""Reference-element machinery on the unit hexahedron [0,1]^3.

Local conventions used throughout the package:

* Points and tensor-product enumerations are lexicographic with x fastest.
* Reference vertex ``v = a + 2*b + 4*c`` sits at ``(a, b, c)``.
* Local edges: ``4*d + j + 2*k`` is the edge along axis ``d`` whose two other
  coordinates (taken in increasing axis order) are ``(j, k)``.
* Local faces: ``2*d + side`` is the face ``xi_d = side``.

Bases provided:

* nodal ``Q_p`` on Gauss-Lobatto nodes,
* discontinuous ``P_{p-1}`` (total degree) orthonormalised on the cell,
* first-kind Nedelec ``Q_{p,p+1,p+1} x Q_{p+1,p,p+1} x Q_{p+1,p+1,p}``,
  interpolatory on Gauss points along the component direction and
  Gauss-Lobatto points across it, grouped into edge/face/cell blocks.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
import numpy as np
from numpy.polynomial import legendre

LOCAL_VERTICES = np.array([(a, b, c) for c in (0, 1) for b in (0, 1) for a in (0, 1)], dtype=float)


def _other_axes(d: int) -> tuple[int, int]:
    return tuple(a for a in range(3) if a != d)  # type: ignore[return-value]


def _local_edge_vertices() -> np.ndarray:
    edges = []
    for d in range(3):
        a1, a2 = _other_axes(d)
        for k in (0, 1):
            for j in (0, 1):
                lo = [0, 0, 0]
                lo[a1], lo[a2] = j, k
                hi = list(lo)
                hi[d] = 1
                edges.append((lo[0] + 2 * lo[1] + 4 * lo[2], hi[0] + 2 * hi[1] + 4 * hi[2]))
    return np.array(edges, dtype=np.int64)


def _local_face_vertices() -> np.ndarray:
    faces = []
    for d in range(3):
        a1, a2 = _other_axes(d)
        for side in (0, 1):
            verts = []
            for t in (0, 1):
                for s in (0, 1):
                    c = [0, 0, 0]
                    c[d], c[a1], c[a2] = side, s, t
                    verts.append(c[0] + 2 * c[1] + 4 * c[2])
            faces.append(verts)
    return np.array(faces, dtype=np.int64)


LOCAL_EDGES = _local_edge_vertices()
LOCAL_FACES = _local_face_vertices()


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray

    @property
    def degree(self) -> int:
        """Per-axis polynomial degree integrated exactly."""
        n = round(len(self.weights) ** (1.0 / self.points.shape[1]))
        return 2 * n - 1


@lru_cache(maxsize=None)
def _gauss_1d(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def gauss_rule(n: int, d: int = 1) -> QuadratureRule:
    """Tensor Gauss-Legendre rule with ``n`` points per axis on ``[0,1]^d``."""
    if n < 1:
        raise ValueError(f"need at least one quadrature point per axis, got {n}")
    x, w = _gauss_1d(n)
    if d == 1:
        return QuadratureRule(x[:, None].copy(), w.copy())
    grids = np.meshgrid(*([x] * d), indexing="ij")
    wgrids = np.meshgrid(*([w] * d), indexing="ij")
    # reverse so that the first coordinate varies fastest
    pts = np.stack([g.transpose(*range(d - 1, -1, -1)).ravel() for g in grids], axis=1)
    wts = np.prod([g.transpose(*range(d - 1, -1, -1)).ravel() for g in wgrids], axis=0)
    return QuadratureRule(pts, wts)


@lru_cache(maxsize=None)
def gll_nodes(p: int) -> np.ndarray:
    """Gauss-Lobatto nodes of degree ``p`` mapped to [0,1] (``p+1`` points)."""
    if p < 1:
        raise ValueError("Gauss-Lobatto nodes need p >= 1")
    interior = legendre.Legendre.basis(p).deriv().roots() if p > 1 else np.empty(0)
    x = np.concatenate(([-1.0], np.sort(interior.real), [1.0]))
    x = 0.5 * (x + 1.0)
    # symmetrise to remove root-finder noise
    return 0.5 * (x + (1.0 - x[::-1]))


def lagrange_1d(nodes: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Lagrange basis on ``nodes`` and its derivative at points ``x``.

    Returns arrays of shape ``(len(x), len(nodes))``.
    """
    nodes = np.asarray(nodes, dtype=float)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = len(nodes)
    diff = x[:, None] - nodes[None, :]
    denom = np.array([np.prod([nodes[i] - nodes[j] for j in range(n) if j != i]) for i in range(n)])
    vals = np.empty((len(x), n))
    ders = np.zeros((len(x), n))
    for i in range(n):
        others = [j for j in range(n) if j != i]
        vals[:, i] = np.prod(diff[:, others], axis=1) / denom[i] if others else 1.0
        for k in others:
            rest = [j for j in others if j != k]
            ders[:, i] += (np.prod(diff[:, rest], axis=1) if rest else 1.0) / denom[i]
    return vals, ders


def _as_points(xi) -> tuple[np.ndarray, bool]:
    arr = np.asarray(xi, dtype=float)
    single = arr.ndim == 1
    return np.atleast_2d(arr), single


def nodal_count(p: int) -> int:
    return (p + 1) ** 3


def nodal_lattice(p: int) -> np.ndarray:
    """Reference coordinates of the ``(p+1)^3`` Gauss-Lobatto nodes."""
    g = gll_nodes(p)
    return np.array([(g[a], g[b], g[c]) for c in range(p + 1) for b in range(p + 1) for a in range(p + 1)])


def nodal_multi_index(p: int) -> np.ndarray:
    return np.array([(a, b, c) for c in range(p + 1) for b in range(p + 1) for a in range(p + 1)])


def eval_nodal(p: int, xi) -> tuple[np.ndarray, np.ndarray]:
    """Values ``(npts, (p+1)^3)`` and gradients ``(npts, (p+1)^3, 3)`` of Q_p."""
    if p < 1:
        raise ValueError("nodal basis needs p >= 1")
    pts, single = _as_points(xi)
    g = gll_nodes(p)
    tabs = [lagrange_1d(g, pts[:, d]) for d in range(3)]
    (vx, dx), (vy, dy), (vz, dz) = tabs
    vals = np.einsum("qa,qb,qc->qcba", vx, vy, vz).reshape(len(pts), -1)
    grads = np.stack(
        [
            np.einsum("qa,qb,qc->qcba", dx, vy, vz).reshape(len(pts), -1),
            np.einsum("qa,qb,qc->qcba", vx, dy, vz).reshape(len(pts), -1),
            np.einsum("qa,qb,qc->qcba", vx, vy, dz).reshape(len(pts), -1),
        ],
        axis=-1,
    )
    if single:
        return vals[0], grads[0]
    return vals, grads


def pdisc_count(degree: int) -> int:
    p = degree + 1
    return p * (p + 1) * (p + 2) // 6


@lru_cache(maxsize=None)
def _pdisc_coefficients(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Exponents and Gram-Schmidt coefficients for the orthonormal P_degree basis.

    Monomials are taken in the centred variable ``xi - 1/2``.
    """
    exps = np.array(
        [(i, j, k) for tot in range(degree + 1) for k in range(tot + 1) for j in range(tot + 1 - k) for i in [tot - j - k]]
    )

    def mono_int(e):
        # integral over [0,1] of (x-1/2)^e
        return 0.0 if e % 2 else (0.5 ** e) / (e + 1)

    m = len(exps)
    gram = np.empty((m, m))
    for a in range(m):
        for b in range(m):
            s = exps[a] + exps[b]
            gram[a, b] = mono_int(s[0]) * mono_int(s[1]) * mono_int(s[2])
    coeffs = np.zeros((m, m))
    for a in range(m):
        v = np.zeros(m)
        v[a] = 1.0
        for b in range(a):
            v -= (coeffs[b] @ gram @ v) * coeffs[b]
        v /= np.sqrt(v @ gram @ v)
        coeffs[a] = v
    return exps, coeffs


def eval_pdisc(degree: int, xi, derivatives: bool = False):
    """Orthonormal total-degree basis; the first function is the constant 1."""
    if degree < 0:
        raise ValueError("pressure degree must be >= 0")
    pts, single = _as_points(xi)
    exps, coeffs = _pdisc_coefficients(degree)
    c = pts - 0.5
    powers = [np.stack([c[:, d] ** e for e in range(degree + 1)], axis=1) for d in range(3)]
    mono = powers[0][:, exps[:, 0]] * powers[1][:, exps[:, 1]] * powers[2][:, exps[:, 2]]
    vals = mono @ coeffs.T
    if not derivatives:
        return vals[0] if single else vals
    dpow = [np.stack([e * c[:, d] ** max(e - 1, 0) for e in range(degree + 1)], axis=1) for d in range(3)]
    grads = np.empty(vals.shape + (3,))
    for d in range(3):
        f = [powers[0], powers[1], powers[2]]
        f[d] = dpow[d]
        dm = f[0][:, exps[:, 0]] * f[1][:, exps[:, 1]] * f[2][:, exps[:, 2]]
        grads[..., d] = dm @ coeffs.T
    if single:
        return vals[0], grads[0]
    return vals, grads


# --------------------------------------------------------------------------
# Nedelec (first kind) edge basis
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class EdgeLayout:
    """Entity-blocked enumeration of the local edge-element functions.

    Each local function is ``phi_i(xi_d) * psi_j(xi_a1) * psi_k(xi_a2) e_d``
    with ``phi`` Lagrange on ``p+1`` Gauss points and ``psi`` Lagrange on
    ``p+2`` Gauss-Lobatto points.  ``entries[n] = (d, i, j, k)``.
    """

    p: int
    entries: np.ndarray  # (n, 4)
    kind: np.ndarray  # 0 edge, 1 face, 2 cell
    entity: np.ndarray  # local edge / face index, -1 for cell block
    position: np.ndarray  # index inside the entity block
    points: np.ndarray  # reference interpolation point of each function

    @property
    def size(self) -> int:
        return len(self.entries)

    def per_edge(self) -> int:
        return self.p + 1

    def per_face(self) -> int:
        return 2 * self.p * (self.p + 1)

    def per_cell(self) -> int:
        return 3 * (self.p + 1) * self.p ** 2


@lru_cache(maxsize=None)
def edge_layout(p: int) -> EdgeLayout:
    if p < 0:
        raise ValueError("edge order must be >= 0")
    gauss = _gauss_1d(p + 1)[0]
    lob = gll_nodes(p + 1)
    end = p + 1
    rows = []
    for d in range(3):
        a1, a2 = _other_axes(d)
        for k in range(p + 2):
            for j in range(p + 2):
                for i in range(p + 1):
                    jb, kb = j in (0, end), k in (0, end)
                    pt = [0.0, 0.0, 0.0]
                    pt[d], pt[a1], pt[a2] = gauss[i], lob[j], lob[k]
                    if jb and kb:
                        kind, ent = 0, 4 * d + (j // end) + 2 * (k // end)
                        pos = i
                    elif jb or kb:
                        normal, side = (a1, j // end) if jb else (a2, k // end)
                        inner = k if jb else j
                        kind, ent = 1, 2 * normal + side
                        t1, t2 = _other_axes(normal)
                        base = 0 if d == t1 else (p + 1) * p
                        pos = base + i + (p + 1) * (inner - 1)
                    else:
                        kind, ent = 2, -1
                        pos = d * (p + 1) * p * p + i + (p + 1) * ((j - 1) + p * (k - 1))
                    rows.append((d, i, j, k, kind, ent, pos, *pt))
    kinds = {0: 0, 1: 1, 2: 2}
    rows.sort(key=lambda r: (kinds[r[4]], r[5], r[6]))
    arr = np.array(rows)
    return EdgeLayout(
        p=p,
        entries=arr[:, :4].astype(np.int64),
        kind=arr[:, 4].astype(np.int64),
        entity=arr[:, 5].astype(np.int64),
        position=arr[:, 6].astype(np.int64),
        points=arr[:, 7:10].copy(),
    )


def eval_edge(p: int, xi, jacobian: bool = False):
    """Reference edge-element values ``(npts, n, 3)`` and curls ``(npts, n, 3)``.

    With ``jacobian=True`` also returns ``d(value_c)/d(xi_e)`` as
    ``(npts, n, 3, 3)`` indexed ``[..., c, e]``.
    """
    pts, single = _as_points(xi)
    lay = edge_layout(p)
    gauss = _gauss_1d(p + 1)[0]
    lob = gll_nodes(p + 1)
    tab_g = [lagrange_1d(gauss, pts[:, d]) for d in range(3)]
    tab_l = [lagrange_1d(lob, pts[:, d]) for d in range(3)]
    nq, n = len(pts), lay.size
    jac = np.zeros((nq, n, 3, 3))
    vals = np.zeros((nq, n, 3))
    for d in range(3):
        a1, a2 = _other_axes(d)
        sel = np.nonzero(lay.entries[:, 0] == d)[0]
        i, j, k = lay.entries[sel, 1], lay.entries[sel, 2], lay.entries[sel, 3]
        f = [None, None, None]
        df = [None, None, None]
        f[d], df[d] = tab_g[d][0][:, i], tab_g[d][1][:, i]
        f[a1], df[a1] = tab_l[a1][0][:, j], tab_l[a1][1][:, j]
        f[a2], df[a2] = tab_l[a2][0][:, k], tab_l[a2][1][:, k]
        vals[:, sel, d] = f[0] * f[1] * f[2]
        for e in range(3):
            g = [f[0], f[1], f[2]]
            g[e] = df[e]
            jac[:, sel, d, e] = g[0] * g[1] * g[2]
    curls = np.stack(
        [
            jac[..., 2, 1] - jac[..., 1, 2],
            jac[..., 0, 2] - jac[..., 2, 0],
            jac[..., 1, 0] - jac[..., 0, 1],
        ],
        axis=-1,
    )
    out = (vals, curls, jac) if jacobian else (vals, curls)
    if single:
        return tuple(a[0] for a in out)
    return out


def edge_face_trace_dofs(p: int) -> list[np.ndarray]:
    """Local edge-element functions with non-zero tangential trace on each face."""
    lay = edge_layout(p)
    out = []
    for lf in range(6):
        normal, side = divmod(lf, 2)
        on_edge = np.zeros(lay.size, dtype=bool)
        edge_mask = lay.kind == 0
        for le in range(12):
            verts = LOCAL_VERTICES[LOCAL_EDGES[le]]
            if np.all(verts[:, normal] == side):
                on_edge |= edge_mask & (lay.entity == le)
        on_face = (lay.kind == 1) & (lay.entity == lf)
        out.append(np.nonzero(on_edge | on_face)[0])
    return out


def nodal_face_dofs(p: int) -> list[np.ndarray]:
    """Local nodal indices lying on each reference face."""
    mi = nodal_multi_index(p)
    return [np.nonzero(mi[:, lf // 2] == (lf % 2) * p)[0] for lf in range(6)]


def tensor_points(n_per_axis: int, kind: str = "gauss") -> np.ndarray:
    if kind == "gauss":
        return gauss_rule(n_per_axis, 3).points
    if kind == "lobatto":
        return nodal_lattice(n_per_axis - 1)
    raise ValueError(kind)


__all__ = [
    "LOCAL_EDGES",
    "LOCAL_FACES",
    "LOCAL_VERTICES",
    "QuadratureRule",
    "EdgeLayout",
    "edge_layout",
    "edge_face_trace_dofs",
    "eval_edge",
    "eval_nodal",
    "eval_pdisc",
    "gauss_rule",
    "gll_nodes",
    "lagrange_1d",
    "nodal_face_dofs",
    "nodal_lattice",
    "nodal_multi_index",
    "pdisc_count",
]
