"""Run configuration: flat ``key = value`` text with dotted section prefixes.

Example::

    mode = rom-deform
    mech.m = 0.107
    box.x_extent = 0.195
    geometry.coil_inner.turns = 960
    rom.window = 0:800
    rom.eps = 1e-5

Every key not given takes the TEAM-28 default of the corresponding
dataclass field.  Unknown keys are rejected.
"""
from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InvalidGeometry, ParseError, ValidationError
from .fem import MaterialMap, SourceSpec
from .mesh import Coil, DeformBox, Geometry
from .sim import MechParams, TimeGrid

MODES = ("full", "rom-deform", "rom-remesh")
MOVEMENTS = ("deform", "remesh")


@dataclass(frozen=True)
class SimConfig:
    mode: str = "full"
    movement: str = "deform"
    geometry: Geometry = field(default_factory=Geometry)
    box: DeformBox = field(default_factory=DeformBox)
    materials: MaterialMap = field(default_factory=MaterialMap)
    source: SourceSpec = field(default_factory=SourceSpec)
    mech: MechParams = field(default_factory=MechParams)
    time: TimeGrid = field(default_factory=TimeGrid)
    density: float = 0.003
    window: tuple = (0, 800, 1)
    eps: float | None = None
    rank: int | None = None
    snapshots: str | None = None
    out: str = "out"
    seed: int = 0

    def replace(self, **changes) -> "SimConfig":
        return validate(dataclasses.replace(self, **changes))


# config key -> attribute of SimConfig for the top-level scalars
_ALIASES = {
    "mode": "mode",
    "movement": "movement",
    "mesh.density": "density",
    "rom.window": "window",
    "rom.eps": "eps",
    "rom.rank": "rank",
    "rom.snapshots": "snapshots",
    "output.dir": "out",
    "seed": "seed",
}
_SECTIONS = ("geometry", "box", "materials", "source", "mech", "time")


def _hints(cls):
    return typing.get_type_hints(cls)


def _leaf_keys(prefix, cls):
    """Yield (dotted key, attribute path, type) for every scalar field."""
    hints = _hints(cls)
    for f in dataclasses.fields(cls):
        hint = hints[f.name]
        if dataclasses.is_dataclass(hint):
            yield from _leaf_keys(f"{prefix}.{f.name}", hint)
        else:
            yield f"{prefix}.{f.name}", hint


def _all_keys():
    keys = {}
    top = _hints(SimConfig)
    for key, attr in _ALIASES.items():
        keys[key] = top[attr]
    for section in _SECTIONS:
        for key, hint in _leaf_keys(section, top[section]):
            keys[key] = hint
    return keys


KEYS = _all_keys()


def parse_window(text: str) -> tuple[int, int, int]:
    parts = text.split(":")
    if not 2 <= len(parts) <= 3:
        raise ValueError("window must be start:stop[:stride]")
    start, stop = int(parts[0] or 0), int(parts[1])
    stride = int(parts[2]) if len(parts) == 3 and parts[2] else 1
    if start < 0 or stop <= start or stride < 1:
        raise ValueError("window needs 0 <= start < stop and stride >= 1")
    return (start, stop, stride)


def _convert(text: str, hint):
    args = typing.get_args(hint)
    if text.lower() == "none" and type(None) in args:
        return None
    if type(None) in args:
        hint = next(a for a in args if a is not type(None))
    if hint is tuple:
        return parse_window(text)
    if hint is int:
        return int(text)
    if hint is float:
        return float(text)
    return text


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return ":".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _build(cls, prefix, values):
    hints = _hints(cls)
    kwargs = {}
    for f in dataclasses.fields(cls):
        if not f.init:
            continue
        key = f"{prefix}.{f.name}"
        hint = hints[f.name]
        if dataclasses.is_dataclass(hint):
            if any(k.startswith(key + ".") for k in values):
                kwargs[f.name] = _build(hint, key, values)
        elif key in values:
            kwargs[f.name] = values[key]
    if cls is Coil and prefix.startswith("geometry."):
        # partial coil overrides start from the default coil
        default = getattr(Geometry(), prefix.split(".")[-1])
        return dataclasses.replace(default, **kwargs)
    try:
        return cls(**kwargs)
    except (ValueError, InvalidGeometry, TypeError) as exc:
        raise ValidationError(prefix, str(exc)) from exc


def from_mapping(values: dict) -> SimConfig:
    """Build a validated config from already-converted dotted keys."""
    unknown = sorted(set(values) - set(KEYS))
    if unknown:
        raise ValidationError(unknown[0], "unknown key")
    kwargs = {attr: values[key] for key, attr in _ALIASES.items() if key in values}
    for section in _SECTIONS:
        if any(k.startswith(section + ".") for k in values):
            kwargs[section] = _build(_hints(SimConfig)[section], section, values)
    return validate(SimConfig(**kwargs))


def validate(cfg: SimConfig) -> SimConfig:
    if cfg.mode not in MODES:
        raise ValidationError("mode", f"must be one of {', '.join(MODES)}")
    if cfg.movement not in MOVEMENTS:
        raise ValidationError("movement", f"must be one of {', '.join(MOVEMENTS)}")
    if cfg.eps is not None and not 0 < cfg.eps < 1:
        raise ValidationError("rom.eps", "tolerance must lie in (0, 1)")
    if cfg.rank is not None and cfg.rank < 1:
        raise ValidationError("rom.rank", "must be >= 1")
    if cfg.mode != "full" and cfg.eps is None and cfg.rank is None:
        raise ValidationError("rom.eps", f"mode {cfg.mode} needs rom.eps or rom.rank")
    if not cfg.density > 0:
        raise ValidationError("mesh.density", "must be positive")
    period = cfg.time.dt * cfg.time.steps_per_period
    if abs(period * cfg.source.frequency - 1.0) > 1e-9:
        raise ValidationError("time.dt", "dt * steps_per_period must equal one source period")
    if cfg.mode != "full" and cfg.window[1] > cfg.time.total_steps:
        raise ValidationError("rom.window", "window extends past the last time step")
    if cfg.mode != "rom-remesh" and not (cfg.movement == "remesh" and cfg.mode == "full"):
        y0 = cfg.geometry.plate_initial_clearance
        if not cfg.box.admissible(y0, cfg.geometry.plate_thickness):
            raise ValidationError("geometry.plate_initial_clearance", "outside the deformation box")
        if cfg.box.x_extent < cfg.geometry.plate_radius:
            raise ValidationError("box.x_extent", "must be at least the plate radius")
    return cfg


def parse_text(text: str) -> SimConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ParseError(f"unknown key {key!r}", lineno)
        if key in values:
            raise ParseError(f"duplicate key {key!r}", lineno)
        try:
            values[key] = _convert(value, KEYS[key])
        except ValueError as exc:
            raise ParseError(f"bad value for {key}: {exc}", lineno) from exc
    return from_mapping(values)


def parse_config(path) -> SimConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_text(text)


def to_mapping(cfg: SimConfig) -> dict:
    out = {key: getattr(cfg, attr) for key, attr in _ALIASES.items()}
    for key in KEYS:
        section, *rest = key.split(".")
        if section in _SECTIONS:
            obj = getattr(cfg, section)
            for name in rest:
                obj = getattr(obj, name)
            out[key] = obj
    return out


def write_config(cfg: SimConfig, path=None) -> str:
    text = "".join(f"{k} = {_format(v)}\n" for k, v in to_mapping(cfg).items())
    if path is not None:
        Path(path).write_text(text)
    return text
