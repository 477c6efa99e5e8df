"""TOML run configuration: schema, validation, and round-trip serialization.

A simulation is described by a small TOML file with one table per pipeline
stage.  Parsing is strict: unknown keys and missing required keys raise
:class:`~mdfrac.errors.ConfigError` naming the full key path, so presets
stay honest when the schema evolves.

Sketch of the schema (see the shipped presets for complete examples)::

    [mesh]
    kind = "fractured_square"     # "msh" | "fractured_square" | "fractured_cube"
    n = 16                        # structured kinds: lattice resolution
    segments = "regular_network.txt"   # fracture file for fractured_square

    [darcy]
    matrix_permeability = 1.0     # scalar or nested list (full tensor)
    fracture_permeability = 1e4   # physical tangential permeability
    aperture = 1e-4
    [darcy.boundary]
    left = { kind = "flux", value = -1.0 }
    right = { kind = "dirichlet", value = 1.0 }

    [transport]
    enabled = true
    dt = 0.01
    t_end = 0.5

Boundary regions are the axis-aligned box sides ``left``/``right`` (x),
``bottom``/``top`` (y) and ``front``/``back`` (z); ``default`` covers
everything not matched (no-flow when omitted).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field as dfield
from pathlib import Path
from typing import Dict, List, Optional, Union

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from mdfrac.errors import ConfigError

REGION_NAMES = ("left", "right", "bottom", "top", "front", "back", "default")


@dataclass
class MeshConfig:
    kind: str = "msh"
    path: str = ""
    n: int = 16
    segments: str = ""
    axis: int = 0
    offset: float = 0.5


@dataclass
class CoarsenConfig:
    enabled: bool = False
    threshold: float = 1.0
    mode: str = "mean_fraction"


@dataclass
class BoundaryRule:
    kind: str = "flux"
    value: float = 0.0


@dataclass
class DarcyConfig:
    matrix_permeability: Union[float, List[List[float]]] = 1.0
    fracture_permeability: float = 1.0
    normal_permeability: Optional[float] = None
    aperture: float = 1.0
    boundary: Dict[str, BoundaryRule] = dfield(default_factory=dict)

    @property
    def normal_perm(self) -> float:
        if self.normal_permeability is None:
            return float(self.fracture_permeability)
        return float(self.normal_permeability)


@dataclass
class TransportConfig:
    enabled: bool = False
    porosity: float = 1.0
    inflow_concentration: float = 1.0
    initial_concentration: float = 0.0
    dt: float = 0.01
    t_end: float = 0.5
    snapshot_every: int = 0


@dataclass
class LineConfig:
    name: str
    start: List[float]
    end: List[float]
    num: int = 200


@dataclass
class OutputConfig:
    directory: str = "out"
    basename: str = "sim"
    vtu: bool = True
    lines: List[LineConfig] = dfield(default_factory=list)


@dataclass
class SolverConfig:
    method: str = "direct"
    tol: float = 1e-10
    max_iter: int = 0


@dataclass
class SimulationConfig:
    mesh: MeshConfig = dfield(default_factory=MeshConfig)
    coarsen: CoarsenConfig = dfield(default_factory=CoarsenConfig)
    darcy: DarcyConfig = dfield(default_factory=DarcyConfig)
    transport: TransportConfig = dfield(default_factory=TransportConfig)
    output: OutputConfig = dfield(default_factory=OutputConfig)
    solver: SolverConfig = dfield(default_factory=SolverConfig)
    base_dir: Path = dfield(default_factory=Path)

    def resolve(self, name: str) -> Path:
        """Resolve a file reference relative to the config's directory.

        Falls back to the packaged ``geometries/`` data directory, so presets
        can name the shipped fracture files directly.
        """
        p = Path(name)
        if p.is_absolute():
            return p
        local = self.base_dir / p
        if local.exists():
            return local
        shipped = Path(__file__).parent / "geometries" / p
        if shipped.exists():
            return shipped
        return local


def _fill(cls, data: dict, path: str):
    """Populate a config dataclass from a TOML table, strictly."""
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a table")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in fields or key == "base_dir":
            raise ConfigError(f"{path}.{key}: unknown key")
        kwargs[key] = _convert(fields[key], value, f"{path}.{key}")
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _convert(f, value, path: str):
    name = f.name
    if name == "boundary":
        out = {}
        for region, rule in value.items():
            if region not in REGION_NAMES:
                raise ConfigError(
                    f"{path}.{region}: unknown boundary region "
                    f"(expected one of {', '.join(REGION_NAMES)})"
                )
            out[region] = _fill(BoundaryRule, rule, f"{path}.{region}")
        return out
    if name == "lines":
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected an array of tables")
        return [_fill(LineConfig, item, f"{path}[{i}]") for i, item in enumerate(value)]
    if isinstance(value, bool) or isinstance(value, (int, float, str, list)):
        return value
    raise ConfigError(f"{path}: unsupported value {value!r}")


_SECTIONS = {
    "mesh": MeshConfig,
    "coarsen": CoarsenConfig,
    "darcy": DarcyConfig,
    "transport": TransportConfig,
    "output": OutputConfig,
    "solver": SolverConfig,
}


def parse_config(text: str, base_dir: Path = Path(".")) -> SimulationConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from None
    kwargs = {"base_dir": Path(base_dir)}
    for key, value in data.items():
        if key not in _SECTIONS:
            raise ConfigError(f"{key}: unknown section")
        kwargs[key] = _fill(_SECTIONS[key], value, key)
    cfg = SimulationConfig(**kwargs)
    validate_config(cfg)
    return cfg


def load_config(path) -> SimulationConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    return parse_config(p.read_text(), base_dir=p.parent)


def validate_config(cfg: SimulationConfig) -> None:
    m = cfg.mesh
    if m.kind not in ("msh", "fractured_square", "fractured_cube"):
        raise ConfigError(f"mesh.kind: unknown kind {m.kind!r}")
    if m.kind == "msh" and not m.path:
        raise ConfigError("mesh.path: required for kind 'msh'")
    if m.kind != "msh" and m.n < 1:
        raise ConfigError(f"mesh.n: must be >= 1, got {m.n}")
    if m.kind == "fractured_cube" and m.axis not in (0, 1, 2):
        raise ConfigError(f"mesh.axis: must be 0, 1 or 2, got {m.axis}")

    c = cfg.coarsen
    if c.mode not in ("absolute", "mean_fraction"):
        raise ConfigError(f"coarsen.mode: unknown mode {c.mode!r}")
    if c.enabled and not c.threshold > 0:
        raise ConfigError(f"coarsen.threshold: must be positive, got {c.threshold}")

    d = cfg.darcy
    if not d.aperture > 0:
        raise ConfigError(f"darcy.aperture: must be positive, got {d.aperture}")
    if not d.fracture_permeability > 0:
        raise ConfigError("darcy.fracture_permeability: must be positive")
    for region, rule in d.boundary.items():
        if rule.kind not in ("dirichlet", "flux"):
            raise ConfigError(
                f"darcy.boundary.{region}.kind: expected 'dirichlet' or 'flux', "
                f"got {rule.kind!r}"
            )

    t = cfg.transport
    if t.enabled:
        if not t.dt > 0:
            raise ConfigError(f"transport.dt: must be positive, got {t.dt}")
        if not t.t_end > 0:
            raise ConfigError(f"transport.t_end: must be positive, got {t.t_end}")
        if not 0.0 <= t.inflow_concentration <= 1.0:
            raise ConfigError("transport.inflow_concentration: must be in [0, 1]")
        if not t.porosity > 0:
            raise ConfigError(f"transport.porosity: must be positive, got {t.porosity}")
        if t.snapshot_every < 0:
            raise ConfigError("transport.snapshot_every: must be >= 0")

    s = cfg.solver
    if s.method not in ("direct", "minres"):
        raise ConfigError(f"solver.method: unknown method {s.method!r}")
    if not s.tol > 0:
        raise ConfigError(f"solver.tol: must be positive, got {s.tol}")

    for i, line in enumerate(cfg.output.lines):
        if len(line.start) != len(line.end):
            raise ConfigError(f"output.lines[{i}]: start/end dimension mismatch")
        if line.num < 2:
            raise ConfigError(f"output.lines[{i}].num: must be >= 2, got {line.num}")


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, list):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise ConfigError(f"cannot serialize {v!r}")


def dump_config(cfg: SimulationConfig) -> str:
    """Serialize back to TOML; ``parse_config`` of the result round-trips."""
    out = []
    for section, cls in _SECTIONS.items():
        sub = getattr(cfg, section)
        lines_cfg = []
        out.append(f"[{section}]")
        for f in dataclasses.fields(cls):
            v = getattr(sub, f.name)
            if v is None:
                continue
            if f.name == "boundary":
                for region, rule in v.items():
                    out.append(
                        f"boundary.{region} = {{ kind = {_toml_value(rule.kind)}, "
                        f"value = {_toml_value(float(rule.value))} }}"
                    )
                continue
            if f.name == "lines":
                lines_cfg = v
                continue
            out.append(f"{f.name} = {_toml_value(v)}")
        for line in lines_cfg:
            out.append(f"[[{section}.lines]]")
            for lf in dataclasses.fields(LineConfig):
                out.append(f"{lf.name} = {_toml_value(getattr(line, lf.name))}")
        out.append("")
    return "\n".join(out)
