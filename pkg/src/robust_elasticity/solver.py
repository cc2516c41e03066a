"""Direct solution of the symmetric block systems with eliminated and bordered constraints.

A system is given by its blocks, a right-hand side (one or several columns),
fixed DOFs with prescribed values and scalar linear functionals.  Fixed DOFs
are removed with a right-hand-side lift and the functionals are appended as
Lagrange-multiplier rows, giving a square symmetric indefinite matrix.

Backends: MKL PARDISO in symmetric-indefinite mode when ``pypardiso`` can be
loaded, otherwise SuperLU from scipy.  A condition estimate of the reduced
matrix guards against returning a solution of a singular problem.
"""

from __future__ import annotations

import glob
import logging
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

COND_LIMIT = 1e13


class SingularSystemError(RuntimeError):
    """The reduced system has no unique solution."""


def _load_pardiso():
    if os.environ.get("ROBUST_ELASTICITY_NO_PARDISO"):
        return None
    if "PYPARDISO_MKL_RT" not in os.environ:
        roots = [os.path.join(sys.prefix, "lib"), "/usr/local/lib", "/usr/lib"]
        for root in roots:
            hits = sorted(glob.glob(os.path.join(root, "libmkl_rt.so*")))
            if hits:
                os.environ["PYPARDISO_MKL_RT"] = hits[0]
                break
    try:
        from pypardiso.pardiso_wrapper import PyPardisoSolver
    except Exception:  # ImportError, or the MKL runtime failing to load
        return None
    return PyPardisoSolver


_PARDISO = _load_pardiso()


def available_backends() -> list[str]:
    return (["pardiso"] if _PARDISO is not None else []) + ["superlu"]


@dataclass
class BlockSystem:
    blocks: list  # square grid of sparse matrices or None
    rhs: np.ndarray  # (n,) or (n, k)
    fixed: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    fixed_values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    functionals: sp.csr_matrix | None = None
    functional_rhs: np.ndarray | None = None
    names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.matrix = sp.bmat(self.blocks, format="csr")
        n = self.matrix.shape[0]
        if self.matrix.shape[1] != n:
            raise ValueError("block system is not square")
        self.rhs = np.asarray(self.rhs, dtype=float)
        if self.rhs.shape[0] != n:
            raise ValueError(f"rhs length {self.rhs.shape[0]} does not match system size {n}")
        self.fixed = np.asarray(self.fixed, dtype=np.int64)
        self.fixed_values = np.broadcast_to(np.asarray(self.fixed_values, dtype=float), self.fixed.shape).copy()
        if len(np.unique(self.fixed)) != len(self.fixed):
            raise ValueError("duplicate fixed DOFs")
        if self.functionals is None:
            self.functionals = sp.csr_matrix((0, n))
        self.functionals = sp.csr_matrix(self.functionals)
        if self.functional_rhs is None:
            self.functional_rhs = np.zeros(self.functionals.shape[0])
        self.offsets = np.cumsum([0] + [self._block_size(i) for i in range(len(self.blocks))])

    def _block_size(self, i: int) -> int:
        for j, b in enumerate(self.blocks[i]):
            if b is not None:
                return b.shape[0]
        raise ValueError(f"block row {i} is empty")

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def split(self, x: np.ndarray) -> list[np.ndarray]:
        return [x[a:b] for a, b in zip(self.offsets[:-1], self.offsets[1:])]

    @classmethod
    def from_blocks(cls, blocks, rhs_blocks, constraints, names=()):
        """Assemble from per-block ``ConstraintSet`` objects (or ``None``)."""
        sizes = [r.shape[0] for r in rhs_blocks]
        offsets = np.cumsum([0] + sizes)
        n = int(offsets[-1])
        fixed, vals, rows = [], [], []
        for off, size, cs in zip(offsets[:-1], sizes, constraints):
            if cs is None:
                continue
            fixed.append(np.asarray(cs.fixed) + off)
            vals.append(np.asarray(cs.values, dtype=float))
            if cs.n_functionals:
                F = sp.csr_matrix(cs.functionals)
                rows.append(sp.hstack([sp.csr_matrix((F.shape[0], off)), F,
                                       sp.csr_matrix((F.shape[0], n - off - size))]).tocsr())
        F = sp.vstack(rows).tocsr() if rows else None
        rhs = np.concatenate([np.asarray(r, dtype=float) for r in rhs_blocks], axis=0)
        return cls(
            blocks=blocks,
            rhs=rhs,
            fixed=np.concatenate(fixed) if fixed else np.zeros(0, dtype=np.int64),
            fixed_values=np.concatenate(vals) if vals else np.zeros(0),
            functionals=F,
            names=list(names),
        )


@dataclass
class SolveStats:
    residual: float
    residuals: list[float]
    backend: str
    n_total: int
    n_reduced: int
    n_functionals: int
    refinement_steps: int
    condition_estimate: float | None
    factor_seconds: float
    solve_seconds: float
    fixed_error: float
    functional_error: float

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


class Factorization:
    """Factorization of a square symmetric sparse matrix with a uniform ``solve``."""

    def __init__(self, K: sp.spmatrix, backend: str | None = None):
        K = sp.csr_matrix(K)
        if np.any(np.diff(K.indptr) == 0):
            raise SingularSystemError("reduced system has empty rows (unconstrained or unused DOFs)")
        backend = backend or available_backends()[0]
        self.backend = backend
        self.K = K
        self.perturbed_pivots = 0
        t0 = time.perf_counter()
        if backend == "pardiso":
            if _PARDISO is None:
                raise RuntimeError("pypardiso is not available")
            upper = sp.triu(K, k=1, format="coo")
            n = K.shape[0]
            diag = K.diagonal()
            rows = np.concatenate([upper.row, np.arange(n)])
            cols = np.concatenate([upper.col, np.arange(n)])
            data = np.concatenate([upper.data, diag])
            U = sp.csr_matrix((data, (rows, cols)), shape=K.shape)  # keeps explicit zero diagonal
            U.sort_indices()
            solver = _PARDISO(mtype=-2)
            solver.set_iparm(1, 1)  # use the parameters below instead of MKL defaults
            solver.set_iparm(2, 2)  # nested-dissection ordering
            solver.set_iparm(10, 13)  # pivot perturbation 1e-13
            solver.set_iparm(11, 1)  # symmetric scaling
            solver.set_iparm(13, 1)  # weighted matching, recommended for saddle points
            solver.factorize(U)
            self._U, self._solver = U, solver
            self.perturbed_pivots = int(solver.get_iparm(14))
        elif backend == "superlu":
            try:
                self._lu = spla.splu(K.tocsc(), permc_spec="MMD_AT_PLUS_A")
            except RuntimeError as exc:
                raise SingularSystemError(f"factorization failed: {exc}") from exc
        else:
            raise ValueError(f"unknown backend {backend!r}")
        self.factor_seconds = time.perf_counter() - t0

    def solve(self, b: np.ndarray) -> np.ndarray:
        if self.backend == "pardiso":
            return self._solver.solve(self._U, np.asarray(b, dtype=float))
        return self._lu.solve(np.asarray(b, dtype=float))

    def condition_estimate(self) -> float:
        n = self.K.shape[0]
        op = spla.LinearOperator((n, n), matvec=self.solve, rmatvec=self.solve, dtype=float)
        inv_norm = spla.onenormest(op)
        return float(inv_norm * spla.norm(self.K, 1))

    def free(self) -> None:
        if self.backend == "pardiso":
            self._solver.free_memory(everything=True)


def solve(system: BlockSystem, tol: float = 1e-10, backend: str | None = None, max_refine: int = 5,
          check_condition: bool = True, cond_limit: float = COND_LIMIT, method: str = "direct",
          preconditioner=None):
    """Solve a ``BlockSystem``; returns ``(x, multipliers, SolveStats)``.

    ``x`` has the shape of ``system.rhs``.  ``method="minres"`` uses the
    preconditioned minimum-residual iteration (``preconditioner`` is an
    operator on the reduced system) instead of a factorization.
    """
    if not 0 < tol <= 1e-6:
        raise ValueError(f"tolerance must lie in (0, 1e-6], got {tol}")
    M, n = system.matrix, system.n
    multi = system.rhs.ndim == 2
    b = system.rhs if multi else system.rhs[:, None]
    k = b.shape[1]
    free = np.ones(n, dtype=bool)
    free[system.fixed] = False
    fidx = np.nonzero(free)[0]
    x = np.zeros((n, k))
    x[system.fixed] = system.fixed_values[:, None]

    M_ff = M[fidx][:, fidx]
    M_fc = M[fidx][:, system.fixed]
    F = system.functionals
    F_f, F_c = F[:, fidx], F[:, system.fixed]
    m = F.shape[0]
    xc = x[system.fixed]
    b_red = np.vstack([b[fidx] - M_fc @ xc, system.functional_rhs[:, None] - F_c @ xc])
    K = sp.bmat([[M_ff, F_f.T], [F_f, None]], format="csr") if m else M_ff.tocsr()

    t0 = time.perf_counter()
    cond = None
    steps = 0
    if method == "direct":
        fac = Factorization(K, backend)
        if fac.perturbed_pivots:
            # a perturbed pivot hides (near-)singularity: redo the factorization exactly
            log.info("%d perturbed pivots; refactorizing with SuperLU", fac.perturbed_pivots)
            fac.free()
            fac = Factorization(K, "superlu")
        try:
            if check_condition:
                cond = fac.condition_estimate()
                if not np.isfinite(cond) or cond > cond_limit:
                    raise SingularSystemError(
                        f"reduced system is numerically singular (condition estimate {cond:.3e})"
                    )
            y = fac.solve(b_red).reshape(-1, k)
            scale = np.maximum(np.linalg.norm(b_red, axis=0), np.finfo(float).tiny)
            for steps in range(1, max_refine + 1):
                r = b_red - K @ y
                if np.all(np.linalg.norm(r, axis=0) <= 1e-3 * tol * scale):
                    steps -= 1
                    break
                y = y + fac.solve(r).reshape(-1, k)
        finally:
            fac.free()
        backend_used, factor_s = fac.backend, fac.factor_seconds
    elif method == "minres":
        y = np.zeros((K.shape[0], k))
        for j in range(k):
            y[:, j], info = spla.minres(K, b_red[:, j], M=preconditioner, rtol=tol * 1e-2, maxiter=20000)
            if info != 0:
                raise RuntimeError(f"minres did not converge (info={info})")
        backend_used, factor_s = "minres", 0.0
    else:
        raise ValueError(f"unknown method {method!r}")
    solve_s = time.perf_counter() - t0

    x[fidx] = y[: len(fidx)]
    lam = y[len(fidx):]
    # residual against the unreduced operator on the rows that were not replaced by constraints
    r_full = b - M @ x - F.T @ lam
    b_eff = b[fidx] - M_fc @ xc
    denom = np.linalg.norm(b_eff, axis=0)
    denom = np.where(denom > 0, denom, 1.0)
    res = np.linalg.norm(r_full[fidx], axis=0) / denom
    fixed_err = float(np.abs(x[system.fixed] - system.fixed_values[:, None]).max(initial=0.0))
    func_err = float(np.abs(F @ x - system.functional_rhs[:, None]).max(initial=0.0)) if m else 0.0
    stats = SolveStats(
        residual=float(res.max()),
        residuals=[float(v) for v in res],
        backend=backend_used,
        n_total=n,
        n_reduced=K.shape[0],
        n_functionals=m,
        refinement_steps=steps,
        condition_estimate=cond,
        factor_seconds=factor_s,
        solve_seconds=solve_s,
        fixed_error=fixed_err,
        functional_error=func_err,
    )
    if stats.residual > tol:
        log.warning("relative residual %.3e exceeds tolerance %.1e", stats.residual, tol)
    if not multi:
        return x[:, 0], lam[:, 0], stats
    return x, lam, stats


def verify_superposition(x1: np.ndarray, x2: np.ndarray, x_total: np.ndarray) -> float:
    """``|x_total - (x1 + x2)| / |x_total|``."""
    x1, x2, xt = (np.asarray(v, dtype=float) for v in (x1, x2, x_total))
    denom = np.linalg.norm(xt)
    return float(np.linalg.norm(xt - x1 - x2) / (denom if denom > 0 else 1.0))
