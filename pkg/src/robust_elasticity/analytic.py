"""Closed-form body forces and potentials for the cube and L-shape experiments.

All functions are vectorised over points given as ``(n, 3)`` arrays (a single
point of shape ``(3,)`` is accepted as well).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .forms import LoadFunction


def _pts(x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    return (x[None, :], True) if x.ndim == 1 else (x, False)


def _out(v: np.ndarray, single: bool) -> np.ndarray:
    return v[0] if single else v


# --------------------------------------------------------------------------
# cube [-1, 1]^3
# --------------------------------------------------------------------------


def cube_f1(x) -> np.ndarray:
    """Divergence-free, boundary-parallel part ``(-2(1-x^2) y, 2(1-y^2) x, 0)``."""
    p, single = _pts(x)
    X, Y = p[:, 0], p[:, 1]
    v = np.stack([-2 * (1 - X**2) * Y, 2 * (1 - Y**2) * X, np.zeros_like(X)], axis=1)
    return _out(v, single)


def cube_f1_jacobian(x) -> np.ndarray:
    p, single = _pts(x)
    X, Y = p[:, 0], p[:, 1]
    J = np.zeros((len(p), 3, 3))
    J[:, 0, 0] = 4 * X * Y
    J[:, 0, 1] = -2 * (1 - X**2)
    J[:, 1, 0] = 2 * (1 - Y**2)
    J[:, 1, 1] = -4 * X * Y
    return _out(J, single)


def cube_f1_curl(x) -> np.ndarray:
    p, single = _pts(x)
    X, Y = p[:, 0], p[:, 1]
    z = np.zeros_like(X)
    return _out(np.stack([z, z, 2 * (1 - Y**2) + 2 * (1 - X**2)], axis=1), single)


def cube_phi(x) -> np.ndarray:
    """Scalar potential ``(1-x^2)^2 (1-y^2)^2 (1-z^2)^2``."""
    p, single = _pts(x)
    v = np.prod((1 - p**2) ** 2, axis=1)
    return v[0] if single else v


def cube_grad_phi(x) -> np.ndarray:
    p, single = _pts(x)
    s = (1 - p**2) ** 2
    ds = -4 * p * (1 - p**2)
    g = np.stack([ds[:, 0] * s[:, 1] * s[:, 2], s[:, 0] * ds[:, 1] * s[:, 2], s[:, 0] * s[:, 1] * ds[:, 2]], 1)
    return _out(g, single)


def cube_phi_mean() -> float:
    """Mean of the cube potential over ``[-1, 1]^3``: ``(16/15)^3 / 8``."""
    return (16.0 / 15.0) ** 3 / 8.0


def cube_total(x, mu: float) -> np.ndarray:
    """Monolithic load ``mu f1 + grad phi``."""
    if not mu > 0:
        raise ValueError("mu must be positive")
    return mu * cube_f1(x) + cube_grad_phi(x)


# --------------------------------------------------------------------------
# L-shape [-1, 1]^3 minus [0, 1]^3
# --------------------------------------------------------------------------


def _p(r):
    return r**2 * (r**2 - 1) ** 2


def _dp(r):
    return 2 * (3 * r**5 - 4 * r**3 + r)


def _g(r):
    return 3 * r**5 - 4 * r**3 + r


def _q(s, t):
    return _g(s) - _g(t)


def lshape_A(x) -> np.ndarray:
    """Vector potential ``100 (p(y) p(z), p(x) p(z), p(x) p(y))``."""
    p, single = _pts(x)
    X, Y, Z = p.T
    v = 100 * np.stack([_p(Y) * _p(Z), _p(X) * _p(Z), _p(X) * _p(Y)], axis=1)
    return _out(v, single)


def lshape_f1(x) -> np.ndarray:
    """``200 (-p(x) q(z,y), p(y) q(z,x), -p(z) q(y,x))``, the curl of ``lshape_A``."""
    p, single = _pts(x)
    X, Y, Z = p.T
    v = 200 * np.stack([-_p(X) * _q(Z, Y), _p(Y) * _q(Z, X), -_p(Z) * _q(Y, X)], axis=1)
    return _out(v, single)


# --------------------------------------------------------------------------
# named loads and self checks
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class AnalyticLoad:
    name: str
    fn: Callable
    degree: int
    domain: str  # "cube" or "lshape"
    div_free: bool = False
    curl_free: bool = False
    boundary_parallel: bool = False
    curl: Callable | None = None
    meta: dict = field(default_factory=dict)

    def __call__(self, x) -> np.ndarray:
        return self.fn(x)

    def as_load(self) -> LoadFunction:
        return LoadFunction(self.fn, self.degree, self.name)


def get_load(name: str, mu: float = 1.0) -> AnalyticLoad:
    """Loads selectable by name: ``cube_total``, ``cube_f1``, ``cube_gradphi``, ``lshape_f1``, ``zero``."""
    if name == "cube_f1":
        return AnalyticLoad(name, cube_f1, 3, "cube", div_free=True, boundary_parallel=True, curl=cube_f1_curl)
    if name == "cube_gradphi":
        return AnalyticLoad(name, cube_grad_phi, 11, "cube", curl_free=True,
                            curl=lambda x: np.zeros_like(np.asarray(x, dtype=float)))
    if name == "cube_total":
        return AnalyticLoad(name, lambda x: cube_total(x, mu), 11, "cube",
                            curl=lambda x: mu * cube_f1_curl(x), meta={"mu": mu})
    if name == "lshape_f1":
        return AnalyticLoad(name, lshape_f1, 11, "lshape", div_free=True, boundary_parallel=True)
    if name == "zero":
        return AnalyticLoad(name, lambda x: np.zeros_like(np.asarray(x, dtype=float)), 0, "any",
                            div_free=True, curl_free=True, boundary_parallel=True)
    raise ValueError(f"unknown load {name!r}")


LOAD_NAMES = ("cube_total", "cube_f1", "cube_gradphi", "lshape_f1", "zero")


def fd_jacobian(fn: Callable, x: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian ``(n, 3, 3)`` indexed ``[component, derivative]``."""
    x = np.asarray(x, dtype=float)
    J = np.zeros((len(x), 3, 3))
    for e in range(3):
        dx = np.zeros(3)
        dx[e] = step
        J[:, :, e] = (np.asarray(fn(x + dx)) - np.asarray(fn(x - dx))) / (2 * step)
    return J


def _probe_points(domain: str, n: int, rng: np.random.Generator) -> np.ndarray:
    pts = rng.uniform(-0.95, 0.95, size=(4 * n, 3))
    if domain == "lshape":
        pts = pts[~np.all(pts > 0.05, axis=1)]
        pts = pts[np.min(np.abs(pts), axis=1) > 0.05]  # keep clear of the internal walls
    return pts[:n]


def _wall_points(domain: str, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Random points on the boundary walls with their outward normals."""
    pts, normals = [], []
    for d in range(3):
        for side in (-1.0, 1.0):
            p = rng.uniform(-1, 1, size=(n, 3))
            p[:, d] = side
            if domain == "lshape":
                p = p[~np.all(p > 0, axis=1)] if side > 0 else p
            nrm = np.zeros((len(p), 3))
            nrm[:, d] = side
            pts.append(p), normals.append(nrm)
            if domain == "lshape":
                # re-entrant wall x_d = 0 with the other two coordinates positive
                q = rng.uniform(0, 1, size=(n, 3))
                q[:, d] = 0.0
                if side > 0:
                    nrm = np.zeros((n, 3))
                    nrm[:, d] = 1.0
                    pts.append(q), normals.append(nrm)
    return np.concatenate(pts), np.concatenate(normals)


def self_check(load: AnalyticLoad, n_probe: int = 100, seed: int = 12345, step: float = 1e-6) -> dict:
    """Finite-difference verification of the identities a load declares."""
    rng = np.random.default_rng(seed)
    x = _probe_points(load.domain if load.domain != "any" else "cube", n_probe, rng)
    J = fd_jacobian(load.fn, x, step)
    div = np.trace(J, axis1=1, axis2=2)
    curl = np.stack([J[:, 2, 1] - J[:, 1, 2], J[:, 0, 2] - J[:, 2, 0], J[:, 1, 0] - J[:, 0, 1]], axis=1)
    scale = max(1.0, float(np.abs(J).max()))
    report = {
        "name": load.name,
        "probes": len(x),
        "max_abs_div": float(np.abs(div).max()),
        "max_abs_curl": float(np.abs(curl).max()),
        "scale": scale,
    }
    tol = 1e-6 * scale
    checks = {}
    if load.div_free:
        checks["div_free"] = report["max_abs_div"] <= tol
    if load.curl_free:
        checks["curl_free"] = report["max_abs_curl"] <= tol
    if load.curl is not None:
        err = float(np.abs(curl - np.asarray(load.curl(x))).max())
        report["curl_closed_form_error"] = err
        checks["curl_closed_form"] = err <= tol
    if load.boundary_parallel:
        wp, wn = _wall_points(load.domain if load.domain != "any" else "cube", 20, rng)
        flux = float(np.abs(np.einsum("ni,ni->n", np.asarray(load.fn(wp)), wn)).max())
        report["max_abs_normal_component"] = flux
        checks["boundary_parallel"] = flux <= 1e-12 * scale
    report["checks"] = checks
    report["ok"] = all(checks.values())
    return report
