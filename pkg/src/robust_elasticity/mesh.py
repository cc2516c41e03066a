"""Structured hexahedral meshes of boxes and of the Fichera (L-shaped) domain.

Every cell is an axis-aligned box, so the reference map is
``x = lo + h * xi`` with a constant diagonal Jacobian ``h``.  Vertices are
numbered lexicographically (z slowest, x fastest), which makes every local
edge run from the lower to the higher global vertex index.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ref_fe import LOCAL_EDGES, LOCAL_FACES, LOCAL_VERTICES

# internal (lexicographic) -> VTK_HEXAHEDRON ordering
VTK_HEX_ORDER = np.array([0, 1, 3, 2, 4, 5, 7, 6])


@dataclass(frozen=True, eq=False)
class HexMesh:
    vertices: np.ndarray  # (nv, 3)
    cells: np.ndarray  # (nc, 8) lexicographic local ordering
    edges: np.ndarray  # (ne, 2) low -> high vertex index
    faces: np.ndarray  # (nf, 4) sorted vertex indices
    cell_edges: np.ndarray  # (nc, 12)
    cell_edge_signs: np.ndarray  # (nc, 12) +1 / -1
    cell_faces: np.ndarray  # (nc, 6)
    face_cells: np.ndarray  # (nf, 2), -1 where absent
    boundary_faces: np.ndarray  # (nb,) face indices
    boundary_normals: np.ndarray  # (nb, 3) outward unit normals
    boundary_cell_faces: np.ndarray  # (nb, 2) owning cell and local face
    name: str = "mesh"
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def lo(self) -> np.ndarray:
        return self.vertices[self.cells[:, 0]]

    @property
    def h(self) -> np.ndarray:
        return self.vertices[self.cells[:, 7]] - self.vertices[self.cells[:, 0]]

    @property
    def det(self) -> np.ndarray:
        return np.prod(self.h, axis=1)

    def volume(self) -> float:
        return float(self.det.sum())

    def map_points(self, xi: np.ndarray, cells=None) -> np.ndarray:
        """Physical coordinates ``(ncell, npts, 3)`` of reference points."""
        sel = slice(None) if cells is None else cells
        return self.lo[sel][:, None, :] + self.h[sel][:, None, :] * np.asarray(xi)[None, :, :]

    def boundary_area_normal_sum(self) -> np.ndarray:
        cells, lf = self.boundary_cell_faces.T
        h = self.h[cells]
        axis = lf // 2
        area = np.prod(h, axis=1) / h[np.arange(len(axis)), axis]
        return (area[:, None] * self.boundary_normals).sum(axis=0)

    def cell_classes(self) -> list[tuple[tuple[float, float, float], np.ndarray]]:
        """Group cells with identical extents (element matrices are shared)."""
        key = "classes"
        if key not in self._cache:
            h = np.round(self.h, 14)
            uniq, inv = np.unique(h, axis=0, return_inverse=True)
            inv = inv.ravel()
            self._cache[key] = [(tuple(uniq[i]), np.nonzero(inv == i)[0]) for i in range(len(uniq))]
        return self._cache[key]


def reference_map(mesh: HexMesh, cell: int, xi) -> tuple[np.ndarray, np.ndarray, float]:
    """Physical point, Jacobian diagonal and determinant for one cell."""
    xi = np.asarray(xi, dtype=float)
    lo, h = mesh.lo[cell], mesh.h[cell]
    return lo + h * xi, h.copy(), float(np.prod(h))


def inverse_map(mesh: HexMesh, cell: int, x) -> np.ndarray:
    return (np.asarray(x, dtype=float) - mesh.lo[cell]) / mesh.h[cell]


def _finalize(vertices: np.ndarray, cells: np.ndarray, name: str) -> HexMesh:
    # lexicographic renumbering: z slowest, x fastest
    order = np.lexsort((vertices[:, 0], vertices[:, 1], vertices[:, 2]))
    renum = np.empty_like(order)
    renum[order] = np.arange(len(order))
    vertices = vertices[order]
    cells = renum[cells]

    nc = len(cells)
    le = cells[:, LOCAL_EDGES]  # (nc, 12, 2)
    lo_e, hi_e = le.min(axis=2), le.max(axis=2)
    signs = np.where(le[:, :, 0] < le[:, :, 1], 1, -1).astype(np.int8)
    ekeys = np.stack([lo_e.ravel(), hi_e.ravel()], axis=1)
    edges, einv = np.unique(ekeys, axis=0, return_inverse=True)
    cell_edges = einv.reshape(nc, 12)

    lf = np.sort(cells[:, LOCAL_FACES], axis=2).reshape(-1, 4)
    faces, finv = np.unique(lf, axis=0, return_inverse=True)
    finv = finv.ravel()
    cell_faces = finv.reshape(nc, 6)

    face_cells = np.full((len(faces), 2), -1, dtype=np.int64)
    face_local = np.full((len(faces), 2), -1, dtype=np.int64)
    count = np.zeros(len(faces), dtype=np.int64)
    for flat, f in enumerate(finv):
        c, l = divmod(flat, 6)
        if count[f] >= 2:
            raise ValueError("non-conforming mesh: face shared by more than two cells")
        face_cells[f, count[f]] = c
        face_local[f, count[f]] = l
        count[f] += 1
    bnd = np.nonzero(count == 1)[0]
    bcells = face_cells[bnd, 0]
    blocal = face_local[bnd, 0]
    normals = np.zeros((len(bnd), 3))
    normals[np.arange(len(bnd)), blocal // 2] = np.where(blocal % 2 == 1, 1.0, -1.0)
    return HexMesh(
        vertices=vertices,
        cells=cells,
        edges=edges,
        faces=faces,
        cell_edges=cell_edges,
        cell_edge_signs=signs,
        cell_faces=cell_faces,
        face_cells=face_cells,
        boundary_faces=bnd,
        boundary_normals=normals,
        boundary_cell_faces=np.stack([bcells, blocal], axis=1),
        name=name,
    )


def _block(lo, hi, n) -> tuple[np.ndarray, np.ndarray]:
    nx, ny, nz = n
    xs = [np.linspace(lo[d], hi[d], n[d] + 1) for d in range(3)]
    Z, Y, X = np.meshgrid(xs[2], xs[1], xs[0], indexing="ij")
    verts = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    i, j, k = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    i, j, k = (a.transpose(2, 1, 0).ravel() for a in (i, j, k))
    base = i + (nx + 1) * (j + (ny + 1) * k)
    offs = (
        LOCAL_VERTICES[:, 0] + (nx + 1) * (LOCAL_VERTICES[:, 1] + (ny + 1) * LOCAL_VERTICES[:, 2])
    ).astype(np.int64)
    return verts, base[:, None] + offs[None, :]


def build_box_mesh(lo, hi, n) -> HexMesh:
    """Uniform ``n[0] x n[1] x n[2]`` partition of the box ``[lo, hi]``."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    n = tuple(int(v) for v in np.broadcast_to(n, (3,)))
    if any(v < 1 for v in n):
        raise ValueError(f"subdivision counts must be positive, got {n}")
    if not np.all(lo < hi):
        raise ValueError(f"need lo < hi componentwise, got {lo} and {hi}")
    verts, cells = _block(lo, hi, n)
    return _finalize(verts, cells, name=f"box{n[0]}x{n[1]}x{n[2]}")


def build_lshape_mesh(n: int) -> HexMesh:
    """The Fichera domain ``[-1,1]^3 minus [0,1]^3`` from 7 unit blocks of ``n^3`` cells."""
    n = int(n)
    if n < 1:
        raise ValueError(f"subdivision count must be positive, got {n}")
    all_verts, all_cells, offset = [], [], 0
    for c in (-1, 0):
        for b in (-1, 0):
            for a in (-1, 0):
                if (a, b, c) == (0, 0, 0):
                    continue
                lo = np.array([a, b, c], dtype=float)
                v, cl = _block(lo, lo + 1.0, (n, n, n))
                all_verts.append(v)
                all_cells.append(cl + offset)
                offset += len(v)
    verts = np.concatenate(all_verts)
    cells = np.concatenate(all_cells)
    # block coordinates are multiples of 1/n: merge on the exact integer lattice
    keys = np.rint(verts * n).astype(np.int64)
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    merged = uniq.astype(float) / n
    return _finalize(merged, inv.ravel()[cells], name=f"lshape{n}")


def write_vtk(path, mesh: HexMesh, point_data: dict | None = None, cell_data: dict | None = None,
              points: np.ndarray | None = None, cells: np.ndarray | None = None, title: str = "robust_elasticity") -> Path:
    """Legacy ASCII VTK unstructured grid of hexahedra (cell type 12).

    ``points``/``cells`` override the mesh geometry (used for subsampled
    high-order output); cells are given in the internal lexicographic order.
    """
    pts = mesh.vertices if points is None else points
    cl = mesh.cells if cells is None else cells
    path = Path(path)
    lines = ["# vtk DataFile Version 2.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {len(pts)} double")
    lines.extend(" ".join(repr(float(c)) for c in row) for row in pts)
    lines.append(f"CELLS {len(cl)} {9 * len(cl)}")
    lines.extend("8 " + " ".join(str(int(v)) for v in row[VTK_HEX_ORDER]) for row in cl)
    lines.append(f"CELL_TYPES {len(cl)}")
    lines.extend(["12"] * len(cl))
    for header, data, count in (("POINT_DATA", point_data, len(pts)), ("CELL_DATA", cell_data, len(cl))):
        if not data:
            continue
        lines.append(f"{header} {count}")
        for name, values in data.items():
            values = np.asarray(values, dtype=float)
            if values.ndim == 1:
                lines.append(f"SCALARS {name} double 1")
                lines.append("LOOKUP_TABLE default")
                lines.extend(repr(float(v)) for v in values)
            else:
                lines.append(f"VECTORS {name} double")
                lines.extend(" ".join(repr(float(c)) for c in row) for row in values)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text("\n".join(lines) + "\n")
    tmp.replace(path)
    return path
