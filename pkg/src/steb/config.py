"""Human-editable key-value config files for parameters, solver and scenarios.

Format: `key = value` lines, `#` comments, optional repeatable `[section]`
headers (used by scenario files).  Values parse to int, float, number lists
or bare strings; floats are written back with repr so a read-modify-write
round trip is exact.
"""

import dataclasses
import os
import tempfile
from typing import List, Optional, Tuple

import numpy as np
import shapely

from .corridor import EgoShape
from .dynamic_env import SemanticClass
from .graph import ParamSet
from .harness import ObstacleScript, Scenario
from .solver import SolverConfig


class ConfigError(ValueError):
    """Malformed config file or unknown/invalid key."""


# ---------------------------------------------------------------------------
# generic text format

def _parse_value(raw: str):
    raw = raw.strip()
    parts = raw.split()
    if len(parts) > 1:
        try:
            return [_parse_number(p) for p in parts]
        except ValueError:
            return raw
    try:
        return _parse_number(raw)
    except ValueError:
        return raw


def _parse_number(raw: str):
    try:
        return int(raw)
    except ValueError:
        return float(raw)


def parse_sections(text: str) -> List[Tuple[Optional[str], dict]]:
    """All (section, mapping) groups in file order; prelude keys get None."""
    sections: List[Tuple[Optional[str], dict]] = [(None, {})]
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            sections.append((line[1:-1].strip().lower(), {}))
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = line.split("=", 1)
        sections[-1][1][key.strip()] = _parse_value(raw)
    if not sections[0][1]:
        sections = sections[1:]
    return sections


def _flat_mapping(text: str, what: str) -> dict:
    sections = parse_sections(text)
    merged = {}
    for name, mapping in sections:
        if name not in (None, what):
            raise ConfigError(f"unexpected section [{name}] in {what} file")
        merged.update(mapping)
    return merged


def atomic_write(path, text: str):
    """Write-temp-then-rename so output files are never partially written."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _format_value(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple, np.ndarray)):
        return " ".join(_format_value(v) for v in value)
    return str(value)


# ---------------------------------------------------------------------------
# parameter files

def load_params(path) -> ParamSet:
    """ParamSet from a flat key-value file; absent keys keep their defaults."""
    with open(path) as fh:
        text = fh.read()
    return params_from_mapping(_flat_mapping(text, "params"))


def params_from_mapping(mapping: dict) -> ParamSet:
    kwargs = {}
    ego_kwargs = {}
    field_names = {f.name for f in dataclasses.fields(ParamSet)}
    for key, value in mapping.items():
        if key == "ego_radius":
            ego_kwargs["radius"] = float(value)
        elif key == "ego_offsets":
            if not isinstance(value, list):
                raise ConfigError(f"ego_offsets must be a list of numbers, got {value!r}")
            ego_kwargs["offsets"] = tuple(float(v) for v in value)
        elif key == "temporal_classes":
            names = value if isinstance(value, list) else [value]
            kwargs[key] = tuple(str(v) for v in names)
        elif key == "start_nodes":
            kwargs[key] = int(value)
        elif key in field_names and key != "ego":
            if isinstance(value, str) or isinstance(value, list):
                raise ConfigError(f"malformed value for {key!r}: {value!r}")
            kwargs[key] = float(value)
        else:
            raise ConfigError(f"unknown parameter {key!r}")
    if ego_kwargs:
        kwargs["ego"] = EgoShape(**{**dataclasses.asdict(EgoShape()), **ego_kwargs})
    try:
        return ParamSet(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def write_params(params: ParamSet, path):
    lines = ["# planner parameters"]
    for f in dataclasses.fields(ParamSet):
        value = getattr(params, f.name)
        if f.name == "ego":
            lines.append(f"ego_radius = {_format_value(value.radius)}")
            lines.append(f"ego_offsets = {_format_value(value.offsets)}")
        elif f.name == "temporal_classes":
            lines.append(f"temporal_classes = {' '.join(value)}")
        else:
            lines.append(f"{f.name} = {_format_value(value)}")
    atomic_write(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# solver config files

def load_solver_config(path) -> SolverConfig:
    with open(path) as fh:
        text = fh.read()
    return solver_config_from_mapping(_flat_mapping(text, "solver"))


def solver_config_from_mapping(mapping: dict) -> SolverConfig:
    kwargs = {}
    field_names = {f.name for f in dataclasses.fields(SolverConfig)}
    ints = {"max_outer_rounds", "max_inner_iterations", "max_escalations"}
    for key, value in mapping.items():
        if key not in field_names:
            raise ConfigError(f"unknown solver option {key!r}")
        if key == "time_budget_ms" and (value == "none" or value is None):
            kwargs[key] = None
        elif key in ints:
            kwargs[key] = int(value)
        else:
            if isinstance(value, (str, list)):
                raise ConfigError(f"malformed value for {key!r}: {value!r}")
            kwargs[key] = float(value)
    try:
        return SolverConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def write_solver_config(cfg: SolverConfig, path):
    lines = ["# solver configuration"]
    for f in dataclasses.fields(SolverConfig):
        value = getattr(cfg, f.name)
        lines.append(f"{f.name} = {'none' if value is None else _format_value(value)}")
    atomic_write(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# scenario files

def _pairs(values, key) -> np.ndarray:
    if not isinstance(values, list) or len(values) % 2 or len(values) < 4:
        raise ConfigError(f"{key} needs an even list of >= 4 coordinates")
    return np.asarray(values, dtype=float).reshape(-1, 2)


def _road_polygon(mapping: dict) -> np.ndarray:
    if "polygon" in mapping:
        return _pairs(mapping["polygon"], "road polygon")
    if "centerline" in mapping:
        center = _pairs(mapping["centerline"], "road centerline")
        half_width = float(mapping.get("half_width", 4.0))
        poly = shapely.LineString(center).buffer(half_width, cap_style="flat")
        return np.asarray(poly.exterior.coords, dtype=float)
    raise ConfigError("road section needs 'polygon' or 'centerline'")


def load_scenario(path) -> Scenario:
    with open(path) as fh:
        text = fh.read()
    name = os.path.splitext(os.path.basename(path))[0]
    return scenario_from_sections(parse_sections(text), name)


def scenario_from_sections(sections, default_name: str) -> Scenario:
    drivable, statics, scripts = [], [], []
    reference_path = None
    reference_speed = None
    conflict = None
    sim = {}
    map_cfg = {}
    ego = None
    for section, mapping in sections:
        if section == "road":
            drivable.append(_road_polygon(mapping))
        elif section == "static_obstacle":
            if "polygon" in mapping:
                statics.append(_pairs(mapping["polygon"], "static_obstacle polygon"))
            elif "rect" in mapping:
                vals = mapping["rect"]
                if not isinstance(vals, list) or len(vals) != 5:
                    raise ConfigError("static_obstacle rect needs: cx cy length width heading")
                from .harness import _rect_polygon
                statics.append(_rect_polygon(vals[:2], vals[2], vals[3], vals[4]))
            else:
                raise ConfigError("static_obstacle needs 'polygon' or 'rect'")
        elif section == "obstacle":
            scripts.append(ObstacleScript(
                obstacle_id=str(mapping.get("id", f"obstacle_{len(scripts)}")),
                semantic=SemanticClass.parse(str(mapping.get("class", "vehicle"))),
                path=_pairs(mapping["path"], "obstacle path"),
                speed=float(mapping["speed"]),
                length=float(mapping.get("length", 4.2)),
                width=float(mapping.get("width", 1.8)),
                start_offset=float(mapping.get("start_offset", 0.0))))
        elif section == "reference":
            reference_path = _pairs(mapping["path"], "reference path")
            reference_speed = float(mapping["speed"])
        elif section == "conflict_zone":
            conflict = _pairs(mapping["polygon"], "conflict zone polygon")
        elif section == "ego":
            ego = (float(mapping["x"]), float(mapping["y"]),
                   float(mapping.get("theta", 0.0)), float(mapping["speed"]))
        elif section == "sim":
            sim = mapping
        elif section == "map":
            map_cfg = mapping
        elif section is None:
            sim.update(mapping)
        else:
            raise ConfigError(f"unknown scenario section [{section}]")
    if reference_path is None:
        raise ConfigError("scenario needs a [reference] section")
    if not drivable:
        raise ConfigError("scenario needs at least one [road] section")
    return Scenario(
        name=str(sim.get("name", default_name)),
        drivable=drivable,
        static_obstacles=statics,
        obstacles=scripts,
        reference_path=reference_path,
        reference_speed=reference_speed,
        duration=float(sim.get("duration", 10.0)),
        conflict_zone=conflict,
        replan_period=float(sim.get("replan_period", 0.05)),
        horizon=float(sim.get("horizon", 10.0)),
        map_resolution=float(map_cfg.get("resolution", 0.25)),
        map_margin=float(map_cfg.get("margin", 3.0)),
        ego_start=ego,
    )
