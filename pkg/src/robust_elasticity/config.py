"""Problem configuration: JSON schema, defaults and the bundled experiment cases."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema

from .analytic import LOAD_NAMES

REGIMES = ("clamped", "no_penetration", "no_slip", "neumann")
PROCEDURES = ("monolithic", "three_step", "aux", "helmholtz_only", "correction")

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "robust_elasticity problem configuration",
    "type": "object",
    "additionalProperties": False,
    "required": ["domain", "subdivisions", "order", "regime", "mu", "load", "procedure"],
    "properties": {
        "name": {"type": "string"},
        "domain": {"enum": ["box", "lshape"]},
        "lo": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
        "hi": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
        "subdivisions": {
            "oneOf": [
                {"type": "integer", "minimum": 1},
                {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 3, "maxItems": 3},
            ]
        },
        "order": {"type": "integer", "minimum": 2},
        "edge_order": {"type": ["integer", "null"], "minimum": 0},
        "regime": {"enum": list(REGIMES)},
        "mu": {"type": "number", "exclusiveMinimum": 0},
        "kappa_over_mu": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "load": {"enum": list(LOAD_NAMES)},
        "procedure": {"enum": list(PROCEDURES)},
        "correction": {"enum": ["dirichlet_extension", "neumann_traction"]},
        "tol": {"type": "number", "exclusiveMinimum": 0, "maximum": 1e-6},
        "threads": {"type": "integer", "minimum": 1},
        "output_dir": {"type": ["string", "null"]},
        "emit_vtk": {"type": "array", "items": {"type": "string"}},
        "vtk_subsample": {"type": "boolean"},
        "dump_matrices": {"type": "boolean"},
        "case": {"type": ["string", "null"]},
    },
}


@dataclass
class ProblemConfig:
    domain: str
    subdivisions: int | list[int]
    order: int
    regime: str
    mu: float
    load: str
    procedure: str
    name: str = "run"
    lo: list[float] = field(default_factory=lambda: [-1.0, -1.0, -1.0])
    hi: list[float] = field(default_factory=lambda: [1.0, 1.0, 1.0])
    edge_order: int | None = None  # defaults to order - 1
    kappa_over_mu: float | None = 1e7
    correction: str = "dirichlet_extension"
    tol: float = 1e-10
    threads: int = 1
    output_dir: str | None = None
    emit_vtk: list[str] = field(default_factory=list)
    vtk_subsample: bool = False
    dump_matrices: bool = False
    case: str | None = None  # bundled experiment this config reproduces

    @property
    def resolved_edge_order(self) -> int:
        return self.order - 1 if self.edge_order is None else self.edge_order

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ProblemConfig":
        validate_config(data)
        return cls(**data)


def validate_config(data: dict) -> None:
    """Raise ``ValueError`` with a readable message when ``data`` violates the schema."""
    try:
        jsonschema.validate(data, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ValueError(f"invalid config at {where}: {exc.message}") from None
    if data["domain"] == "lshape" and isinstance(data["subdivisions"], list):
        raise ValueError("invalid config at subdivisions: the L-shape takes one subdivision count per block")


def load_config(path) -> ProblemConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: not valid JSON ({exc})") from None
    return ProblemConfig.from_dict(data)


def bundled_names() -> list[str]:
    root = resources.files("robust_elasticity") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def bundled_path(name: str) -> Path:
    name = name[:-5] if name.endswith(".json") else name
    root = resources.files("robust_elasticity") / "configs"
    path = Path(str(root / f"{name}.json"))
    if not path.exists():
        raise FileNotFoundError(f"no bundled config named {name!r}; available: {', '.join(bundled_names())}")
    return path


def resolve_config(spec: str) -> ProblemConfig:
    """Load a config from a path, falling back to a bundled case name."""
    p = Path(spec)
    if p.exists():
        return load_config(p)
    return load_config(bundled_path(p.name))


# Reference extrema reported for the bundled experiments (mesh 10^3 / 7 x 10^3, p = 4).
REFERENCE_VALUES = {
    "cube_clamped_mu1": {
        "u_x.max": 1.030e-1, "u_x.min": -1.030e-1, "p.max": 8.478e-1, "p.min": -4.109e-1,
        "u1_x.max": 1.0302e-1, "u1_x.min": -1.0302e-1, "p1.max": 2.5943e-1, "p1.min": -2.5943e-1,
        "p2.max": 8.478e-1, "p2.min": -1.525e-1,
        "curlA_x.max": 2.0, "curlA_x.min": -2.0, "f2_x.max": 1.5396, "f2_x.min": -1.5396,
    },
    "cube_clamped_mu1em4": {
        "u_x.max": 1.088e-1, "u_x.min": -1.088e-1, "p.max": 8.478e-1, "p.min": -1.526e-2,
        "u1_x.max": 1.030e-1, "u1_x.min": -1.030e-1, "p1.max": 2.5943e-5, "p1.min": -2.5943e-5,
        "p2.max": 8.478e-1, "p2.min": -1.525e-1,
    },
    "cube_np_mu1": {
        "u_x.max": 3.456e-1, "u_x.min": -3.456e-1, "p.max": 8.478e-1, "p.min": -1.524e-1,
        "u1_x.max": 3.456e-1, "u1_x.min": -3.456e-1, "p1.max": 2.679e-7, "p1.min": -2.667e-7,
        "p2.max": 8.478e-1, "p2.min": -1.524e-1,
    },
    "cube_np_mu1em4": {
        "u_x.max": 3.586e-1, "u_x.min": -3.586e-1, "p.max": 8.478e-1, "p.min": -1.524e-2,
        "u1_x.max": 3.456e-1, "u1_x.min": -3.456e-1, "p1.max": 2.732e-11, "p1.min": -2.765e-11,
        "p2.max": 8.478e-1, "p2.min": -1.524e-1,
    },
    "lshape_np_mu1": {"p1.max": 7.799, "p1.min": -7.799},
}
