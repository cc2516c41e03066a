"""Experiment orchestration, reports, VTK export and the ``run`` command line.

Output directory resolution: ``--out`` > ``$ROBUST_ELASTICITY_OUT`` > the
config's ``output_dir`` > ``./out``.

Exit codes: 0 success, 1 verification failure, 2 config error, 3 solver
error, 4 output error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analytic import get_load
from .config import REFERENCE_VALUES, ProblemConfig, resolve_config
from .forms import LoadFunction, dump_matrix_market
from .mesh import HexMesh, build_box_mesh, build_lshape_mesh, write_vtk
from .physics import (
    FEField,
    LEOperator,
    eval_field,
    h1_norm,
    l2_norm,
    reentrant_mass_fraction,
    run_three_step,
    solve_AUX,
    solve_correction,
    solve_HD,
    transfer_load,
)
from .ref_fe import nodal_lattice
from .solver import SingularSystemError
from .spaces import Family

log = logging.getLogger(__name__)

OUT_ENV = "ROBUST_ELASTICITY_OUT"
REPORT_DIGITS = 12  # significant digits kept in reports (byte-stable across runs)

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_SOLVER, EXIT_OUTPUT = 0, 1, 2, 3, 4


# --------------------------------------------------------------------------
# running a configuration
# --------------------------------------------------------------------------


@dataclass
class RunOutcome:
    config: ProblemConfig
    mesh: HexMesh
    fields: dict
    report: dict
    timings: dict = field(default_factory=dict)
    matrices: dict = field(default_factory=dict)
    loads: dict = field(default_factory=dict)


def build_mesh(cfg: ProblemConfig) -> HexMesh:
    if cfg.domain == "lshape":
        return build_lshape_mesh(cfg.subdivisions)
    n = cfg.subdivisions
    n = (n, n, n) if isinstance(n, int) else tuple(n)
    return build_box_mesh(cfg.lo, cfg.hi, n)


def sample(fld, what: str = "value", points_per_axis: int | None = None) -> np.ndarray:
    """Values on the per-cell Gauss-Lobatto sampling lattice."""
    n = max(points_per_axis or fld.space.order + 1, 2)
    return eval_field(fld, None, nodal_lattice(n - 1), what)


def _extrema_keys(prefix: str, v: np.ndarray) -> dict:
    if v.ndim == 2:
        return {f"{prefix}.min": float(v.min()), f"{prefix}.max": float(v.max())}
    out = {}
    for c, lab in enumerate("xyz"):
        out[f"{prefix}_{lab}.min"] = float(v[..., c].min())
        out[f"{prefix}_{lab}.max"] = float(v[..., c].max())
    return out


def _field_keys(name: str, fld: FEField, n: int) -> dict:
    out = _extrema_keys(name, sample(fld, "value", n))
    out[f"{name}.l2"] = l2_norm(fld)
    if fld.space.family in (Family.NODAL_VECTOR, Family.NODAL_SCALAR):
        out[f"{name}.h1"] = h1_norm(fld)
    return out


def _load_samples(load: LoadFunction, mesh: HexMesh, n: int) -> np.ndarray:
    return load.at_quadrature(mesh, nodal_lattice(n - 1))


def execute(cfg: ProblemConfig, threads: int | None = None, tol: float | None = None) -> RunOutcome:
    """Run the procedure named in ``cfg`` and collect fields plus a flat report."""
    tol = cfg.tol if tol is None else tol
    threads = cfg.threads if threads is None else threads
    mesh = build_mesh(cfg)
    ld = get_load(cfg.load, cfg.mu)
    if ld.domain not in ("any", "cube" if cfg.domain == "box" else "lshape"):
        log.warning("load %s is defined for the %s experiment", ld.name, ld.domain)
    f = ld.as_load()
    n = cfg.order + 1  # sampling lattice: Gauss-Lobatto, p + 1 points per axis
    rep: dict = {"sampling.lattice": "gauss-lobatto", "sampling.points_per_axis": n,
                 "mesh.cells": mesh.n_cells, "mesh.vertices": mesh.n_vertices}
    timings: dict = {}
    fields: dict = {}
    loads: dict = {"f": f}
    matrices: dict = {}
    t0 = time.perf_counter()
    proc = cfg.procedure
    if proc == "monolithic":
        op = LEOperator(mesh, cfg.order, cfg.regime, cfg.mu, cfg.kappa_over_mu, threads)
        res = op.solve([f], tol=tol, names=["mono"])[0]
        res.u.name, res.p.name = "u", "p"
        fields.update(u=res.u, p=res.p)
        rep.update(_field_keys("u", res.u, n))
        rep.update(_field_keys("p", res.p, n))
        rep["solver.residual"] = res.stats.residual
        rep["divergence.weak_residual"] = res.diagnostics["weak_divergence_residual"]
        rep["dofs.u"], rep["dofs.p"] = op.V.n_dofs, op.Q.n_dofs
        timings["solver"] = res.stats.as_dict()
        matrices.update(A=op.A, B=op.B, C=op.C)
    elif proc == "three_step":
        out = run_three_step(mesh, cfg.order, cfg.regime, cfg.mu, cfg.kappa_over_mu, f,
                             edge_order=cfg.resolved_edge_order, tol=tol, threads=threads)
        fl, dg = out.fields, out.diagnostics
        f2h = transfer_load(fl["A"], "curl", -1.0, plus=f, name="f2")
        loads["f2"] = f2h
        rep.update(_extrema_keys("curlA", sample(fl["A"], "curl", cfg.resolved_edge_order + 2)))
        rep.update(_extrema_keys("f2", _load_samples(f2h, mesh, n)))
        hd = dg["hd"]
        rep.update({"pi.l2": hd["pi_l2"], "pi.relative": hd["pi_relative"], "f.l2": hd["f_l2"],
                    "orthogonality.residual": hd["orthogonality_residual"],
                    "orthogonality.relative": hd["orthogonality_relative"]})
        for k in ("u1", "p1", "u2", "p2", "u", "p"):
            rep.update(_field_keys(k, fl[k], n))
        u_split = fl["u1"] if dg["u2_discardable"] else fl["u_total"]
        u_split = FEField(u_split.space, u_split.coeffs, "u_split")
        p_split = FEField(fl["p_total"].space, fl["p_total"].coeffs, "p_split")
        fields.update(fl, u_split=u_split, p_split=p_split)
        rep.update(_field_keys("u_split", u_split, n))
        rep.update(_field_keys("p_split", p_split, n))
        rep["superposition.deviation"] = dg["superposition_deviation"]
        rep["u2.discardable"] = dg["u2_discardable"]
        u1h = rep["u1.h1"]
        rep["u2.h1_ratio"] = rep["u2.h1"] / u1h if u1h > 0 else float("inf")
        rep["solver.residual"] = max(out.stats["le"]["residual"], out.stats["hd"]["residual"])
        rep["dofs.u"], rep["dofs.p"] = fl["u1"].space.n_dofs, fl["p1"].space.n_dofs
        rep["dofs.hd"] = fl["A"].space.n_dofs + fl["pi"].space.n_dofs
        if cfg.domain == "lshape":
            rep["p1.corner_fraction"] = reentrant_mass_fraction(fl["p1"], 0.2)
        timings.update(out.stats)
    elif proc == "helmholtz_only":
        hd = solve_HD(mesh, cfg.resolved_edge_order, f, tol=tol, threads=threads)
        f2h = transfer_load(hd.A, "curl", -1.0, plus=f, name="f2")
        loads["f2"] = f2h
        fields.update(A=hd.A, pi=hd.pi)
        dg = hd.diagnostics
        rep.update(_extrema_keys("curlA", sample(hd.A, "curl", cfg.resolved_edge_order + 2)))
        rep.update(_extrema_keys("f2", _load_samples(f2h, mesh, n)))
        rep.update({"pi.l2": dg["pi_l2"], "pi.relative": dg["pi_relative"], "f.l2": dg["f_l2"],
                    "orthogonality.residual": dg["orthogonality_residual"],
                    "orthogonality.relative": dg["orthogonality_relative"],
                    "solver.residual": hd.stats.residual,
                    "dofs.hd": hd.stats.n_total})
        timings["hd"] = hd.stats.as_dict()
    elif proc == "aux":
        if cfg.regime not in ("no_penetration", "no_slip"):
            raise ValueError("the aux procedure supports the no_penetration and no_slip regimes")
        res = solve_AUX(mesh, cfg.resolved_edge_order, cfg.regime, cfg.mu, f, tol=tol, threads=threads)
        res.A.name, res.pi.name = "u_aux", "pi_aux"
        fields.update(u_aux=res.A, pi_aux=res.pi)
        rep.update(_extrema_keys("u_aux", sample(res.A, "value", n)))
        dg = res.diagnostics
        rep.update({"u_aux.l2": dg["u_l2"], "u_aux.relative": dg["u_relative"],
                    "pi_aux.l2": dg["pi_l2"], "pi_aux.relative": dg["pi_relative"],
                    "f.l2": dg["f_l2"], "solver.residual": res.stats.residual})
        timings["aux"] = res.stats.as_dict()
    elif proc == "correction":
        aux = solve_AUX(mesh, cfg.resolved_edge_order, "no_penetration", cfg.mu, f, tol=tol, threads=threads)
        u0 = aux.A
        u0.name = "u0"
        cr = solve_correction(cfg.correction, mesh, cfg.order, cfg.mu, cfg.kappa_over_mu, source=u0, tol=tol)
        fields.update(u0=u0, w=cr.w, r=cr.r)
        rep.update(_extrema_keys("u0", sample(u0, "value", n)))
        rep.update(_field_keys("w", cr.w, n))
        rep.update(_field_keys("r", cr.r, n))
        rep.update(_extrema_keys("u", sample(u0, "value", n) - sample(cr.w, "value", n)))
        rep.update(_extrema_keys("p", -sample(cr.r, "value", n)))
        rep["correction.kind"] = cfg.correction
        rep["correction.ratio"] = cr.ratio
        rep["solver.residual"] = cr.stats.residual
        timings.update(aux=aux.stats.as_dict(), correction=cr.stats.as_dict())
    else:  # the schema rejects anything else
        raise ValueError(f"unknown procedure {proc!r}")
    timings["total_seconds"] = time.perf_counter() - t0
    if cfg.regime == "neumann" or (proc == "correction" and cfg.correction == "neumann_traction"):
        # rotation constraints use r = x - centroid
        rep["rigid.moment_origin"] = [float(c) for c in _centroid(mesh)]
    rep.update({f"config.{k}": v for k, v in cfg.to_dict().items()
                if k not in ("output_dir", "emit_vtk", "threads")})
    rep.update(reference_comparison(cfg, rep))
    if cfg.dump_matrices and not matrices:
        op = LEOperator(mesh, cfg.order, cfg.regime, cfg.mu, cfg.kappa_over_mu, threads)
        matrices.update(A=op.A, B=op.B, C=op.C)
    return RunOutcome(cfg, mesh, fields, rep, timings, matrices, loads)


def _centroid(mesh: HexMesh) -> np.ndarray:
    centers = mesh.lo + 0.5 * mesh.h
    return (mesh.det[:, None] * centers).sum(axis=0) / mesh.det.sum()


def reference_comparison(cfg: ProblemConfig, rep: dict) -> dict:
    """Reference extrema next to the computed ones for bundled cases."""
    ref = REFERENCE_VALUES.get(cfg.case or "")
    if not ref:
        return {}
    out = {}
    for key, val in ref.items():
        if key not in rep:
            continue
        got = rep[key]
        out[f"reference.{key}.value"] = val
        out[f"reference.{key}.computed"] = got
        out[f"reference.{key}.rel_diff"] = abs(got - val) / abs(val)
    return out


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------


def _clean(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return float(f"{v:.{REPORT_DIGITS}g}") if np.isfinite(v) else repr(v)
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    return v


def report_dict(report: dict) -> dict:
    return {k: _clean(report[k]) for k in sorted(report)}


def _atomic_write(path: Path, text: str) -> Path:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)
    return path


def emit_report(report: dict, path, timings: dict | None = None) -> Path:
    """Deterministic JSON report (sorted keys, rounded floats); timings go to a sidecar."""
    path = Path(path)
    _atomic_write(path, json.dumps(report_dict(report), indent=1, sort_keys=True) + "\n")
    if timings is not None:
        side = path.with_name(path.stem + ".timings.json")
        _atomic_write(side, json.dumps(timings, indent=1, sort_keys=True, default=float) + "\n")
    return path


# --------------------------------------------------------------------------
# VTK export
# --------------------------------------------------------------------------

_CORNERS = nodal_lattice(1)  # the 8 reference vertices in lexicographic order


def vertex_values(fld: FEField) -> np.ndarray:
    """Field values at mesh vertices, averaged over incident cells."""
    mesh = fld.mesh
    v = eval_field(fld, None, _CORNERS, "value")  # (nc, 8[, 3])
    shape = (mesh.n_vertices,) + v.shape[2:]
    acc = np.zeros(shape)
    cnt = np.zeros(mesh.n_vertices)
    np.add.at(acc, mesh.cells.ravel(), v.reshape((-1,) + v.shape[2:]))
    np.add.at(cnt, mesh.cells.ravel(), 1.0)
    return acc / (cnt[:, None] if acc.ndim == 2 else cnt)


def _sub_lattice(mesh: HexMesh, p: int):
    """Points and sub-hexes of the per-cell Gauss-Lobatto lattice (``p^3`` sub-hexes per cell)."""
    xi = nodal_lattice(p)
    pts = mesh.map_points(xi).reshape(-1, 3)
    m = p + 1
    a, b, c = np.meshgrid(np.arange(p), np.arange(p), np.arange(p), indexing="ij")
    base = (a + m * b + m * m * c).transpose(2, 1, 0).ravel()  # x fastest
    corner = np.array([0, 1, m, m + 1, m * m, m * m + 1, m * m + m, m * m + m + 1])
    local = base[:, None] + corner[None, :]
    cells = (np.arange(mesh.n_cells)[:, None, None] * m**3 + local[None]).reshape(-1, 8)
    return xi, pts, cells


def export_vtk(fields: dict, mesh: HexMesh, path, subsample: int | None = None, title: str = "") -> Path:
    """Write fields (``FEField`` or per-cell samples) as vertex point data.

    With ``subsample=p`` the fields are written on the Gauss-Lobatto companion
    mesh instead, each cell split into ``p^3`` sub-hexes.
    """
    data = {}
    for name, fld in fields.items():
        if isinstance(fld, FEField) and fld.mesh is not mesh:
            raise ValueError(f"field {name!r} lives on a different mesh")
    if subsample:
        xi, pts, cells = _sub_lattice(mesh, subsample)
        for name, fld in fields.items():
            v = fld.at_quadrature(mesh, xi) if isinstance(fld, LoadFunction) else eval_field(fld, None, xi, "value")
            data[name] = v.reshape((-1,) + v.shape[2:])
        return write_vtk(path, mesh, data, points=pts, cells=cells, title=title or "subsampled")
    for name, fld in fields.items():
        if isinstance(fld, LoadFunction):
            v = fld.at_quadrature(mesh, _CORNERS)
            acc = np.zeros((mesh.n_vertices, 3))
            cnt = np.zeros(mesh.n_vertices)
            np.add.at(acc, mesh.cells.ravel(), v.reshape(-1, 3))
            np.add.at(cnt, mesh.cells.ravel(), 1.0)
            data[name] = acc / cnt[:, None]
        else:
            data[name] = vertex_values(fld)
    return write_vtk(path, mesh, data, title=title or "fields")


def _vtk_sources(outcome: RunOutcome) -> dict:
    src = dict(outcome.fields)
    if "A" in src:
        A = src["A"]
        src["curlA"] = transfer_load(A, "curl", +1.0, name="curlA")
    src.update({k: v for k, v in outcome.loads.items() if k == "f2"})
    return src


# --------------------------------------------------------------------------
# command line
# --------------------------------------------------------------------------


def output_dir(cli_out: str | None, cfg: ProblemConfig | None) -> Path:
    if cli_out:
        return Path(cli_out)
    if os.environ.get(OUT_ENV):
        return Path(os.environ[OUT_ENV])
    if cfg is not None and cfg.output_dir:
        return Path(cfg.output_dir)
    return Path("out")


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="robust-elasticity", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a configuration (a JSON path or a bundled case name)")
    run.add_argument("--config", help="config path or bundled case name")
    run.add_argument("--emit-vtk", default="", help="comma separated field names, e.g. u1,p1,p2")
    run.add_argument("--verify", action="store_true",
                     help="check the run against the acceptance criteria (all criteria without --config)")
    run.add_argument("--out", help=f"output directory (overrides ${OUT_ENV})")
    run.add_argument("--tol", type=float, help="relative residual tolerance of the linear solves")
    run.add_argument("--threads", type=int, help="assembly threads")
    run.add_argument("--quiet", action="store_true")
    sub.add_parser("list", help="list the bundled configurations")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "list":
        from .config import bundled_names

        print("\n".join(bundled_names()))
        return EXIT_OK
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    if args.config is None:
        if not args.verify:
            print("run: --config is required unless --verify is given", file=sys.stderr)
            return EXIT_CONFIG
        from .acceptance import run_all

        results = run_all(threads=args.threads or 1)
        for r in results:
            print(r.line())
        return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY
    try:
        cfg = resolve_config(args.config)
        if args.tol is not None:
            if not 0 < args.tol <= 1e-6:
                raise ValueError("--tol must lie in (0, 1e-6]")
            cfg.tol = args.tol
        if args.threads is not None:
            if args.threads < 1:
                raise ValueError("--threads must be positive")
            cfg.threads = args.threads
        emit = [s.strip() for s in args.emit_vtk.split(",") if s.strip()] or list(cfg.emit_vtk)
    except (ValueError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = output_dir(args.out, cfg)
    try:
        out.mkdir(parents=True, exist_ok=True)
        if not os.access(out, os.W_OK):
            raise PermissionError(f"{out} is not writable")
    except OSError as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return EXIT_OUTPUT
    try:
        outcome = execute(cfg)
    except SingularSystemError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        rpath = emit_report(outcome.report, out / f"{cfg.name}.report.json", outcome.timings)
        log.info("report: %s", rpath)
        sources = _vtk_sources(outcome)
        for name in emit:
            if name not in sources:
                print(f"config error: no field {name!r}; available: {', '.join(sorted(sources))}",
                      file=sys.stderr)
                return EXIT_CONFIG
            vp = export_vtk({name: sources[name]}, outcome.mesh, out / f"{cfg.name}_{name}.vtk")
            log.info("vtk: %s", vp)
            if cfg.vtk_subsample:
                export_vtk({name: sources[name]}, outcome.mesh, out / f"{cfg.name}_{name}_lattice.vtk",
                           subsample=cfg.order)
        if cfg.dump_matrices:
            for key, mat in outcome.matrices.items():
                dump_matrix_market(out / f"{cfg.name}_{key}.mtx", mat, comment=f"{cfg.name} block {key}")
    except OSError as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return EXIT_OUTPUT
    if not args.quiet:
        for k in ("u_x.max", "p.max", "u1_x.max", "p1.max", "p2.max", "pi.relative",
                  "superposition.deviation", "p1.corner_fraction", "correction.ratio"):
            if k in outcome.report:
                print(f"{k} = {outcome.report[k]:.6e}")
    if args.verify:
        from .acceptance import check_report

        results = check_report(cfg, outcome.report)
        for r in results:
            print(r.line())
        if not all(r.passed for r in results):
            return EXIT_VERIFY
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
