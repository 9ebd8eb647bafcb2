"""Simulation configuration: dataclass plus INI-style file format.

File sections: [case], [grid], [physics], [stepper], [output] and one
[boundary.<edge>] per edge. Every key is optional; unset values fall
back to the case defaults from the library.

boundary tangential grammar:  free | <float> | <float>@<lo>:<hi>[,...]
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace

from .cases import CaseDefinition, case_library
from .operators import EdgeBC


def _parse_pair(text, conv=int):
    parts = [p.strip() for p in str(text).split(",") if p.strip()]
    if len(parts) == 1:
        return (conv(parts[0]), conv(parts[0]))
    if len(parts) == 2:
        return (conv(parts[0]), conv(parts[1]))
    raise ValueError(f"expected one or two comma-separated values, got {text!r}")


def _parse_tangential(text):
    text = text.strip()
    if text.lower() in ("free", "none", ""):
        return None
    if "@" not in text:
        return float(text)
    segs = []
    for part in text.split(","):
        data, _, rng = part.partition("@")
        lo, _, hi = rng.partition(":")
        segs.append((float(lo), float(hi), float(data)))
    return segs


def _format_tangential(tang):
    if tang is None:
        return "free"
    if isinstance(tang, (list, tuple)):
        return ",".join(f"{d!r}@{lo!r}:{hi!r}" for lo, hi, d in tang)
    return repr(float(tang))


@dataclass
class SimulationConfig:
    case: str = "taylor_green"
    # grid
    degree: int = 2
    n_patches: tuple = (1, 1)
    n_cells: tuple = (8, 8)          # per patch, per direction
    domain: tuple = None             # (x0, x1, y0, y1); None = case default
    periodic: bool = None
    moment_order: int = None
    stencil_radius: int = None
    # physics
    nu: float = None
    alpha: float = None
    # stepper
    dt: float = None                 # None = CFL-controlled
    dt_max: float = 1.0
    t_final: float = None
    picard_tol: float = 1e-8
    picard_max_iter: int = 200
    pressure_eps: float = None
    pressure_solver: str = "direct"
    cfl_safety: float = 0.5
    cfl_constant: float = 1.0
    steady_tol: float = None         # None = follow picard_tol
    # output
    output_dir: str = "."
    diagnostics_file: str = "diagnostics.csv"
    snapshot_prefix: str = "snapshot"
    snapshot_grid: int = 64
    snapshot_cadence: int = 0        # steps between snapshots, 0 = none
    # boundary overrides (edge name -> EdgeBC)
    boundary: dict = None

    def resolve(self):
        """Fill unset values from the case library; returns (cfg, case)."""
        case = case_library(self.case)
        d = case.defaults
        out = replace(self)
        if out.domain is None:
            out.domain = case.domain
        if out.periodic is None:
            out.periodic = case.periodic
        if out.nu is None:
            out.nu = d.get("nu", 0.0)
        if out.alpha is None:
            out.alpha = d.get("alpha", 0.0)
        if out.dt is None:
            out.dt = d.get("dt")     # may stay None: CFL-controlled
        if out.t_final is None:
            out.t_final = d.get("t_final", 1.0)
        if out.steady_tol is None:
            out.steady_tol = out.picard_tol
        if out.boundary is None:
            out.boundary = case.boundary
        elif case.boundary:
            merged = dict(case.boundary)
            merged.update(out.boundary)
            out.boundary = merged
        return out, case


_GRID_KEYS = {"degree", "n_patches", "n_cells", "domain", "periodic",
              "moment_order", "stencil_radius"}
_PHYSICS_KEYS = {"nu", "alpha"}
_STEPPER_KEYS = {"dt", "dt_max", "t_final", "picard_tol", "picard_max_iter",
                 "pressure_eps", "pressure_solver", "cfl_safety",
                 "cfl_constant", "steady_tol"}
_OUTPUT_KEYS = {"output_dir", "diagnostics_file", "snapshot_prefix",
                "snapshot_grid", "snapshot_cadence"}
_INT_KEYS = {"degree", "picard_max_iter", "snapshot_grid", "snapshot_cadence",
             "moment_order", "stencil_radius"}
_STR_KEYS = {"pressure_solver", "output_dir", "diagnostics_file",
             "snapshot_prefix", "case"}


def _convert(key, raw):
    raw = raw.strip()
    if raw.lower() in ("none", "auto", ""):
        return None
    if key in _STR_KEYS:
        return raw
    if key == "periodic":
        return raw.lower() in ("1", "true", "yes", "on")
    if key in ("n_patches", "n_cells"):
        return _parse_pair(raw, int)
    if key == "domain":
        vals = [float(v) for v in raw.split(",")]
        if len(vals) != 4:
            raise ValueError("domain needs four values: x0,x1,y0,y1")
        return tuple(vals)
    if key in _INT_KEYS:
        return int(raw)
    return float(raw)


def load_config(path) -> SimulationConfig:
    parser = configparser.ConfigParser()
    with open(path) as fh:
        parser.read_file(fh)
    kwargs = {}
    known = {f.name for f in fields(SimulationConfig)}
    for section in parser.sections():
        if section.startswith("boundary."):
            edge = section.split(".", 1)[1]
            sec = parser[section]
            bc = EdgeBC(kind=sec.get("kind", "normal").strip(),
                        value=float(sec.get("value", "0.0")),
                        tangential=_parse_tangential(sec.get("tangential", "free")))
            kwargs.setdefault("boundary", {})[edge] = bc
            continue
        if section not in ("case", "grid", "physics", "stepper", "output"):
            raise ValueError(f"unknown config section [{section}]")
        for key, raw in parser[section].items():
            name = "case" if (section == "case" and key == "name") else key
            if name not in known:
                raise ValueError(f"unknown config key {key!r} in [{section}]")
            kwargs[name] = _convert(name, raw)
    return SimulationConfig(**kwargs)


def save_config(cfg: SimulationConfig, path):
    parser = configparser.ConfigParser()
    parser["case"] = {"name": cfg.case}

    def _fmt(v):
        if v is None:
            return "none"
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, tuple):
            return ",".join(repr(x) if isinstance(x, float) else str(x) for x in v)
        if isinstance(v, float):
            return repr(v)
        return str(v)

    for section, keys in (("grid", _GRID_KEYS), ("physics", _PHYSICS_KEYS),
                          ("stepper", _STEPPER_KEYS), ("output", _OUTPUT_KEYS)):
        parser[section] = {k: _fmt(getattr(cfg, k)) for k in sorted(keys)}
    if cfg.boundary:
        for edge, bc in cfg.boundary.items():
            parser[f"boundary.{edge}"] = {
                "kind": bc.kind,
                "value": repr(float(bc.value)) if not callable(bc.value) else "0.0",
                "tangential": _format_tangential(bc.tangential),
            }
    with open(path, "w") as fh:
        parser.write(fh)
