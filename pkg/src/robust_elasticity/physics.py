"""Problem drivers: elasticity (LE), Helmholtz potential (HD), curl-curl auxiliary
problem (AUX), the three-step split and the correction problems.

Sign conventions of the discrete systems::

    LE :  [[A, B^T], [B, -C]] (u, p) = (F, 0),   B[k, i] = -int q_k div v_i,  C = eps M_p
    HD :  [[K, G], [G^T, 0]] (A, pi) = (int curl v . f, 0)
    AUX:  [[mu K, G], [G^T, 0]] (u, pi) = (int v . f, 0)

so that the discrete pressure approximates ``p = -kappa div u``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .forms import (
    LoadFunction,
    MaterialParams,
    assemble_body_load,
    assemble_curl_load,
    assemble_curlcurl_K,
    assemble_div_B,
    assemble_elastic_A,
    assemble_grad_G,
    assemble_penalty_C,
    assemble_traction_load,
    zero_load,
)
from .mesh import HexMesh
from .ref_fe import eval_edge, eval_nodal, eval_pdisc, gauss_rule, nodal_lattice
from .solver import BlockSystem, SolveStats, solve
from .spaces import (
    BCKind,
    BCRegime,
    ConstraintSet,
    Family,
    FESpace,
    build_space,
    classify_boundary,
    edge_space_bc,
    mean_functional,
    pressure_gauge,
    scalar_h10_bc,
)

# --------------------------------------------------------------------------
# fields and evaluation
# --------------------------------------------------------------------------

WHAT = {
    Family.NODAL_VECTOR: ("value", "grad", "div", "curl"),
    Family.NODAL_SCALAR: ("value", "grad"),
    Family.DISC_PRESSURE: ("value",),
    Family.EDGE: ("value", "curl", "grad", "div"),
}


@dataclass
class FEField:
    space: FESpace
    coeffs: np.ndarray
    name: str = "field"
    units: str = ""

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.space.n_dofs,):
            raise ValueError(f"coefficient length {self.coeffs.shape} does not match {self.space.n_dofs} DOFs")

    @property
    def mesh(self) -> HexMesh:
        return self.space.mesh

    def __add__(self, other: "FEField") -> "FEField":
        if other.space is not self.space:
            raise ValueError("fields live on different spaces")
        return FEField(self.space, self.coeffs + other.coeffs, f"{self.name}+{other.name}", self.units)

    def local(self, cells=None) -> np.ndarray:
        sel = slice(None) if cells is None else cells
        return self.coeffs[self.space.cell_dofs[sel]] * self.space.cell_signs[sel]


def _curl(J: np.ndarray) -> np.ndarray:
    return np.stack([J[..., 2, 1] - J[..., 1, 2], J[..., 0, 2] - J[..., 2, 0], J[..., 1, 0] - J[..., 0, 1]], -1)


def eval_field(fld: FEField, cells=None, xi=None, what: str = "value") -> np.ndarray:
    """Evaluate on reference points ``xi (nq, 3)`` of the selected cells.

    Returns ``(ncell, nq)`` for scalars, ``(ncell, nq, 3)`` for vectors and
    ``(ncell, nq, 3, 3)`` (``[component, derivative]``) for vector gradients.
    A single integer cell and a single point drop the leading axes.
    """
    space = fld.space
    if what not in WHAT[space.family]:
        raise ValueError(f"cannot evaluate {what!r} on a {space.family.value} field")
    mesh = space.mesh
    single_cell = np.isscalar(cells) or (isinstance(cells, np.ndarray) and cells.ndim == 0)
    cells = np.arange(mesh.n_cells) if cells is None else np.atleast_1d(np.asarray(cells, dtype=np.int64))
    xi = np.asarray(xi, dtype=float)
    single_pt = xi.ndim == 1
    xi = np.atleast_2d(xi)
    loc = fld.local(cells)
    h = mesh.h[cells]  # (nc, 3)
    fam, p = space.family, space.order
    if fam in (Family.NODAL_SCALAR, Family.NODAL_VECTOR):
        v, g = eval_nodal(p, xi)
        if fam is Family.NODAL_SCALAR:
            if what == "value":
                out = loc @ v.T
            else:
                out = np.einsum("ca,qai->cqi", loc, g) / h[:, None, :]
        else:
            c = loc.reshape(len(cells), -1, 3)
            if what == "value":
                out = np.einsum("cak,qa->cqk", c, v)
            else:
                J = np.einsum("cak,qai->cqki", c, g) / h[:, None, None, :]
                out = {"grad": J, "div": np.trace(J, axis1=2, axis2=3), "curl": _curl(J)}[what]
    elif fam is Family.DISC_PRESSURE:
        out = loc @ eval_pdisc(p, xi).T
    elif what in ("grad", "div"):
        _, _, jac = eval_edge(p, xi, jacobian=True)
        J = np.einsum("ca,qaij->cqij", loc, jac) / (h[:, None, :, None] * h[:, None, None, :])
        out = J if what == "grad" else np.trace(J, axis1=2, axis2=3)
    else:
        v, cu = eval_edge(p, xi)
        if what == "value":
            out = np.einsum("ca,qai->cqi", loc, v) / h[:, None, :]
        else:
            det = np.prod(h, axis=1)
            out = np.einsum("ca,qai->cqi", loc, cu) * (h / det[:, None])[:, None, :]
    if single_pt:
        out = out[:, 0]
    if single_cell:
        out = out[0]
    return out


def nodal_values(fld: FEField, target: FESpace, what: str = "value") -> np.ndarray:
    """Values of ``fld`` at the nodes of a nodal space (one owning cell per node)."""
    if target.mesh is not fld.mesh or target.cell_nodes is None:
        raise ValueError("target must be a nodal space on the same mesh")
    vals = eval_field(fld, None, nodal_lattice(target.order), what)
    out = np.zeros((len(target.node_coords),) + vals.shape[2:])
    out[target.cell_nodes.ravel()] = vals.reshape((-1,) + vals.shape[2:])
    return out


def _quad(mesh: HexMesh, n: int):
    rule = gauss_rule(n, 3)
    return rule, rule.weights[None, :] * mesh.det[:, None]


def l2_norm(fld: FEField, n_quad: int | None = None) -> float:
    rule, w = _quad(fld.mesh, n_quad or fld.space.order + 3)
    v = eval_field(fld, None, rule.points, "value")
    sq = v**2 if v.ndim == 2 else np.sum(v**2, axis=-1)
    return float(np.sqrt(np.sum(w * sq)))


def h1_seminorm(fld: FEField, n_quad: int | None = None) -> float:
    rule, w = _quad(fld.mesh, n_quad or fld.space.order + 3)
    g = eval_field(fld, None, rule.points, "grad")
    sq = np.sum(g.reshape(g.shape[0], g.shape[1], -1) ** 2, axis=-1)
    return float(np.sqrt(np.sum(w * sq)))


def h1_norm(fld: FEField, n_quad: int | None = None) -> float:
    return float(np.hypot(l2_norm(fld, n_quad), h1_seminorm(fld, n_quad)))


def l2_error(fld: FEField, exact: Callable, what: str = "value", n_quad: int = 8) -> float:
    """``|| eval(fld) - exact ||_{L2}`` with ``exact(points (n,3))``."""
    rule, w = _quad(fld.mesh, n_quad)
    v = eval_field(fld, None, rule.points, what)
    x = fld.mesh.map_points(rule.points)
    e = np.asarray(exact(x.reshape(-1, 3)), dtype=float).reshape(v.shape)
    d = (v - e) ** 2
    if d.ndim == 3:
        d = d.sum(axis=-1)
    return float(np.sqrt(np.sum(w * d)))


def load_l2_norm(f: LoadFunction, mesh: HexMesh, n_quad: int = 8) -> float:
    rule, w = _quad(mesh, n_quad)
    v = f.at_quadrature(mesh, rule.points)
    return float(np.sqrt(np.sum(w * np.sum(v**2, axis=-1))))


def extrema(fld: FEField, what: str = "value", points_per_axis: int | None = None) -> dict:
    """Min/max on a per-cell Gauss-Lobatto lattice (``order + 1`` points per axis by default).

    Vector quantities report per component, keyed ``x``, ``y``, ``z``.
    """
    n = points_per_axis or fld.space.order + 1
    n = max(n, 2)
    v = eval_field(fld, None, nodal_lattice(n - 1), what)
    conv = {"lattice": "gauss-lobatto", "points_per_axis": n}
    if v.ndim == 2:
        return {"min": float(v.min()), "max": float(v.max()), "sampling": conv}
    out = {"sampling": conv}
    for c, lab in enumerate("xyz"):
        out[lab] = {"min": float(v[..., c].min()), "max": float(v[..., c].max())}
    return out


def transfer_load(source: FEField, what: str = "curl", sign: float = 1.0,
                  plus: LoadFunction | None = None, name: str | None = None) -> LoadFunction:
    if what not in ("curl", "value"):
        raise ValueError("transfer_load supports 'curl' and 'value'")
    if what not in WHAT[source.space.family]:
        raise ValueError(f"cannot take {what!r} of a {source.space.family.value} field")
    src_mesh = source.mesh

    def cell_eval(mesh: HexMesh, xi: np.ndarray) -> np.ndarray:
        if mesh is not src_mesh:
            raise ValueError("load transfer between different meshes")
        out = sign * eval_field(source, None, xi, what)
        if plus is not None:
            out = out + plus.at_quadrature(mesh, xi)
        return out

    deg = source.space.order + 1 + (plus.degree if plus is not None else 0)
    label = name or f"{'+' if sign > 0 else '-'}{what}({source.name})" + (f"+{plus.name}" if plus else "")
    return LoadFunction(None, deg, label, cell_eval)


# --------------------------------------------------------------------------
# elasticity
# --------------------------------------------------------------------------


@dataclass
class LEResult:
    u: FEField
    p: FEField
    stats: SolveStats
    diagnostics: dict = field(default_factory=dict)


class LEOperator:
    """Assembled elasticity system for fixed mesh, order, regime and material.

    ``solve`` accepts several loads and reuses one factorization.
    """

    def __init__(self, mesh: HexMesh, p: int, regime: BCRegime | str, mu: float,
                 kappa_ratio: float | None = 1e7, threads: int = 1):
        if p < 2:
            raise ValueError("displacement order must be at least 2 (inf-sup stability)")
        self.mesh = mesh
        self.regime = regime if isinstance(regime, BCRegime) else BCRegime(regime)
        self.material = MaterialParams(mu, kappa_ratio)
        self.V = build_space(mesh, Family.NODAL_VECTOR, p)
        self.Q = build_space(mesh, Family.DISC_PRESSURE, p - 1)
        t0 = time.perf_counter()
        self.A = assemble_elastic_A(self.V, mu, threads)
        self.B = assemble_div_B(self.V, self.Q, threads)
        self.C = assemble_penalty_C(self.Q, self.material.eps, threads)
        self.assembly_seconds = time.perf_counter() - t0
        self.bc_u = classify_boundary(self.V, self.regime)
        self.bc_p = pressure_gauge(self.Q, self.regime)

    @property
    def order(self) -> int:
        return self.V.order

    def rhs(self, f: LoadFunction | None, traction: Callable | None = None) -> np.ndarray:
        F = assemble_body_load(self.V, f) if f is not None else np.zeros(self.V.n_dofs)
        if traction is not None:
            F = F + assemble_traction_load(self.V, traction)
        return F

    def solve(self, loads: list, tol: float = 1e-10, names=None, bc_values: np.ndarray | None = None,
              **solver_kw) -> list[LEResult]:
        """Solve for each entry of ``loads`` (a LoadFunction or ``(f, traction)`` pair)."""
        cols = []
        for item in loads:
            f, s = item if isinstance(item, tuple) else (item, None)
            cols.append(self.rhs(f, s))
        Fu = np.stack(cols, axis=1)
        Fp = np.zeros((self.Q.n_dofs, len(loads)))
        bc_u = self.bc_u
        if bc_values is not None:
            bc_u = ConstraintSet(bc_u.n_dofs, bc_u.fixed, np.asarray(bc_values, dtype=float),
                                 bc_u.functionals, bc_u.labels)
        system = BlockSystem.from_blocks(
            [[self.A, self.B.T], [self.B, -self.C]], [Fu, Fp], [bc_u, self.bc_p], names=["u", "p"]
        )
        x, lam, stats = solve(system, tol=tol, **solver_kw)
        out = []
        names = names or [f"load{j}" for j in range(len(loads))]
        for j, nm in enumerate(names):
            u, p = system.split(x[:, j])
            res = np.abs(self.B @ u - self.C @ p)
            diag = {
                "weak_divergence_residual": float(res.max(initial=0.0)),
                "multipliers": [float(v) for v in lam[:, j]],
                "residual": stats.residuals[j],
            }
            out.append(LEResult(FEField(self.V, u.copy(), f"u_{nm}"), FEField(self.Q, p.copy(), f"p_{nm}"),
                                stats, diag))
        return out


def solve_LE(mesh: HexMesh, p: int, regime, mu: float, kappa_ratio: float | None, f: LoadFunction | None,
             s: Callable | None = None, tol: float = 1e-10, threads: int = 1, **solver_kw) -> LEResult:
    op = LEOperator(mesh, p, regime, mu, kappa_ratio, threads)
    return op.solve([(f, s)], tol=tol, **solver_kw)[0]


# --------------------------------------------------------------------------
# Helmholtz decomposition and auxiliary curl-curl problem
# --------------------------------------------------------------------------


@dataclass
class PotentialResult:
    A: FEField
    pi: FEField
    stats: SolveStats
    diagnostics: dict = field(default_factory=dict)


def _saddle(K, G, rhs_top, bc_top, bc_bottom, tol, **solver_kw):
    n_s = G.shape[1]
    Z = sp.csr_matrix((n_s, n_s))
    system = BlockSystem.from_blocks([[K, G], [G.T.tocsr(), Z]],
                                     [rhs_top, np.zeros(n_s)], [bc_top, bc_bottom])
    x, lam, stats = solve(system, tol=tol, **solver_kw)
    a, b = system.split(x)
    return a, b, lam, stats


def solve_HD(mesh: HexMesh, edge_order: int, f: LoadFunction, tol: float = 1e-10, threads: int = 1,
             **solver_kw) -> PotentialResult:
    """Vector potential ``A in H0(curl)`` with ``curl A`` the solenoidal part of ``f``."""
    E = build_space(mesh, Family.EDGE, edge_order)
    S = build_space(mesh, Family.NODAL_SCALAR, edge_order + 1)
    K = assemble_curlcurl_K(E, 1.0, threads)
    G = assemble_grad_G(E, S, threads)
    rhs = assemble_curl_load(E, f)
    a, b, _, stats = _saddle(K, G, rhs, edge_space_bc(E, True), scalar_h10_bc(S), tol, **solver_kw)
    A = FEField(E, a, "A")
    pi = FEField(S, b, "pi")
    res = PotentialResult(A, pi, stats)
    res.diagnostics = hd_diagnostics(res, f)
    return res


def hd_diagnostics(res: PotentialResult, f: LoadFunction, n_quad: int = 8) -> dict:
    mesh = res.A.mesh
    rule, w = _quad(mesh, n_quad)
    fq = f.at_quadrature(mesh, rule.points)
    cq = eval_field(res.A, None, rule.points, "curl")
    f_sq = float(np.sum(w * np.sum(fq**2, axis=-1)))
    ortho = float(np.sum(w * np.einsum("cqi,cqi->cq", fq - cq, cq)))
    pi_l2 = l2_norm(res.pi, n_quad)
    f_l2 = np.sqrt(f_sq)
    return {
        "pi_l2": pi_l2,
        "f_l2": f_l2,
        "pi_relative": pi_l2 / f_l2 if f_l2 > 0 else pi_l2,
        "orthogonality_residual": ortho,
        "orthogonality_relative": abs(ortho) / f_sq if f_sq > 0 else abs(ortho),
        "curlA_l2": float(np.sqrt(np.sum(w * np.sum(cq**2, axis=-1)))),
        "curlA_extrema": extrema(res.A, "curl", res.A.space.order + 2),
    }


def solve_AUX(mesh: HexMesh, edge_order: int, regime: str, mu: float, f: LoadFunction,
              s_a: Callable | None = None, tol: float = 1e-10, threads: int = 1, **solver_kw) -> PotentialResult:
    """Curl-curl auxiliary problem; ``regime`` is ``"no_penetration"`` or ``"no_slip"`` (-like)."""
    E = build_space(mesh, Family.EDGE, edge_order)
    S = build_space(mesh, Family.NODAL_SCALAR, edge_order + 1)
    K = assemble_curlcurl_K(E, mu, threads)
    G = assemble_grad_G(E, S, threads)
    rhs = assemble_body_load(E, f)
    if s_a is not None:
        # int (n x v) . s_a = int v . (s_a x n)
        rhs = rhs + assemble_traction_load(E, lambda x, n: np.cross(s_a(x, n), n))
    kind = BCKind(regime)
    if kind is BCKind.NO_PENETRATION:
        bc_e = ConstraintSet(E.n_dofs)
        bc_s = ConstraintSet(S.n_dofs, functionals=mean_functional(S), labels=["pi_mean"])
    elif kind is BCKind.NO_SLIP:
        bc_e, bc_s = edge_space_bc(E, True), scalar_h10_bc(S)
    else:
        raise ValueError("the auxiliary problem supports no_penetration-like and no_slip-like regimes")
    a, b, _, stats = _saddle(K, G, rhs, bc_e, bc_s, tol, **solver_kw)
    u, pi = FEField(E, a, "u_aux"), FEField(S, b, "pi_aux")
    f_l2 = load_l2_norm(f, mesh)
    res = PotentialResult(u, pi, stats)
    res.diagnostics = {
        "pi_l2": l2_norm(pi),
        "u_l2": l2_norm(u),
        "f_l2": f_l2,
        "pi_relative": l2_norm(pi) / f_l2 if f_l2 > 0 else l2_norm(pi),
        "u_relative": l2_norm(u) / f_l2 if f_l2 > 0 else l2_norm(u),
        # rows of fixed multiplier DOFs carry no constraint
        "divergence_constraint": float(np.abs((G.T @ a)[~bc_s.fixed_mask()]).max(initial=0.0)),
    }
    return res


# --------------------------------------------------------------------------
# three-step procedure
# --------------------------------------------------------------------------


@dataclass
class StepOutputs:
    fields: dict
    diagnostics: dict
    hd: PotentialResult | None = None
    stats: dict = field(default_factory=dict)


def field_summary(fld: FEField, what: str = "value", points_per_axis: int | None = None) -> dict:
    out = {"l2": l2_norm(fld)}
    if fld.space.family in (Family.NODAL_VECTOR, Family.NODAL_SCALAR):
        out["h1"] = h1_norm(fld)
    out["extrema"] = extrema(fld, what, points_per_axis)
    return out


def reentrant_mass_fraction(fld: FEField, radius: float = 0.2, n_quad: int = 6) -> float:
    """Fraction of ``int |q|^2`` within ``radius`` of the L-shape re-entrant edges."""
    mesh = fld.mesh
    rule, w = _quad(mesh, n_quad)
    v = eval_field(fld, None, rule.points, "value")
    x = mesh.map_points(rule.points)
    dist = np.full(x.shape[:2], np.inf)
    for d in range(3):
        o = [a for a in range(3) if a != d]
        along = np.clip(x[..., d], 0.0, 1.0)
        dd = np.sqrt(x[..., o[0]] ** 2 + x[..., o[1]] ** 2 + (x[..., d] - along) ** 2)
        dist = np.minimum(dist, dd)
    total = float(np.sum(w * v**2))
    near = float(np.sum((w * v**2)[dist < radius]))
    return near / total if total > 0 else 0.0


def run_three_step(mesh: HexMesh, p: int, regime, mu: float, kappa_ratio: float | None, f: LoadFunction,
                   edge_order: int | None = None, tol: float = 1e-10, threads: int = 1,
                   monolithic: bool = True, **solver_kw) -> StepOutputs:
    """Step 0 (potential), Step 1 (solenoidal load), Step 2 (remainder) and the monolithic solve.

    All elasticity solves share one factorization; the totals are the
    coefficientwise sums of the two steps.
    """
    regime = regime if isinstance(regime, BCRegime) else BCRegime(regime)
    edge_order = p - 1 if edge_order is None else edge_order
    t0 = time.perf_counter()
    hd = solve_HD(mesh, edge_order, f, tol=tol, threads=threads, **solver_kw)
    f1h = transfer_load(hd.A, "curl", +1.0, name="curl A_h")
    f2h = transfer_load(hd.A, "curl", -1.0, plus=f, name="f - curl A_h")
    op = LEOperator(mesh, p, regime, mu, kappa_ratio, threads)
    loads, names = [f1h, f2h], ["1", "2"]
    if monolithic:
        loads.append(f)
        names.append("mono")
    results = op.solve(loads, tol=tol, names=names, **solver_kw)
    r1, r2 = results[0], results[1]
    fields = {
        "A": hd.A,
        "pi": hd.pi,
        "u1": r1.u, "p1": r1.p,
        "u2": r2.u, "p2": r2.p,
        "u_total": r1.u + r2.u, "p_total": r1.p + r2.p,
    }
    diag = {
        "hd": hd.diagnostics,
        "step1": r1.diagnostics,
        "step2": r2.diagnostics,
        "u2_discardable": regime.kind in (BCKind.CLAMPED, BCKind.NO_PENETRATION),
    }
    if monolithic:
        rm = results[2]
        fields["u"], fields["p"] = rm.u, rm.p
        diag["monolithic"] = rm.diagnostics
        xt = np.concatenate([rm.u.coeffs, rm.p.coeffs])
        xs = np.concatenate([r1.u.coeffs + r2.u.coeffs, r1.p.coeffs + r2.p.coeffs])
        diag["superposition_deviation"] = float(np.linalg.norm(xt - xs) / max(np.linalg.norm(xt), 1e-300))
    diag["seconds"] = time.perf_counter() - t0
    return StepOutputs(fields, diag, hd, {"hd": hd.stats.as_dict(), "le": r1.stats.as_dict()})


# --------------------------------------------------------------------------
# correction problems
# --------------------------------------------------------------------------


@dataclass
class CorrectionResult:
    w: FEField
    r: FEField
    ratio: float
    stats: SolveStats
    diagnostics: dict = field(default_factory=dict)


def traction_from_field(u0: FEField, mu: float) -> Callable:
    """``s = 2 mu e(u0) n`` evaluated on boundary points (via the owning cell)."""
    mesh = u0.mesh

    def s(x: np.ndarray, n: np.ndarray) -> np.ndarray:
        cells = locate_cells(mesh, x, n)
        xi = (x - mesh.lo[cells]) / mesh.h[cells]
        out = np.zeros_like(x)
        for c in np.unique(cells):
            m = cells == c
            J = eval_field(u0, int(c), xi[m], "grad")
            e = 0.5 * (J + np.swapaxes(J, -1, -2))
            e = e - np.trace(e, axis1=-2, axis2=-1)[:, None, None] * np.eye(3) / 3
            out[m] = 2 * mu * np.einsum("qij,qj->qi", e, n[m])
        return out

    return s


def locate_cells(mesh: HexMesh, x: np.ndarray, n: np.ndarray | None = None) -> np.ndarray:
    """Cell containing each point; boundary points nudged inward along ``-n``."""
    x = np.asarray(x, dtype=float)
    probe = x - 1e-9 * n if n is not None else x
    lo, hi = mesh.lo, mesh.lo + mesh.h
    out = np.full(len(x), -1, dtype=np.int64)
    for i, pt in enumerate(probe):
        hit = np.nonzero(np.all((lo <= pt + 1e-12) & (pt <= hi + 1e-12), axis=1))[0]
        if len(hit) == 0:
            raise ValueError(f"point {pt} lies outside the mesh")
        out[i] = hit[0]
    return out


def solve_correction(kind: str, mesh: HexMesh, p: int, mu: float, kappa_ratio: float | None = 1e7,
                     source: FEField | None = None, traction: Callable | None = None,
                     tol: float = 1e-10, **solver_kw) -> CorrectionResult:
    """Correction problems with zero body force.

    ``dirichlet_extension``: clamped boundary values taken from ``source``.
    ``neumann_traction``: traction ``traction(x, n)`` (or ``2 mu e(source) n``)
    with rigid-body constraints.
    """
    if kind == "dirichlet_extension":
        op = LEOperator(mesh, p, BCKind.CLAMPED, mu, kappa_ratio)
        if source is None:
            vals = np.zeros(len(op.bc_u.fixed))
        else:
            nv = nodal_values(source, build_space(mesh, Family.NODAL_SCALAR, p))
            vals = nv.reshape(-1)[op.bc_u.fixed]
        res = op.solve([zero_load()], tol=tol, names=["w"], bc_values=vals, **solver_kw)[0]
    elif kind == "neumann_traction":
        if traction is None:
            if source is None:
                raise ValueError("neumann_traction needs a traction or a source field")
            traction = traction_from_field(source, mu)
        op = LEOperator(mesh, p, BCKind.NEUMANN, mu, kappa_ratio)
        res = op.solve([(zero_load(), traction)], tol=tol, names=["w"], **solver_kw)[0]
    else:
        raise ValueError(f"unknown correction kind {kind!r}")
    w, r = res.u, res.p
    w.name, r.name = "w", "r"
    wn, rn = h1_norm(w), l2_norm(r)
    ratio = rn / (mu * wn) if wn > 0 else 0.0
    diag = dict(res.diagnostics, w_h1=wn, r_l2=rn, ratio=ratio)
    return CorrectionResult(w, r, ratio, res.stats, diag)
