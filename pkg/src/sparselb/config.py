"""Run configuration files: flat ``key = value`` lines plus ``[iolet.N]`` sections.

Example::

    geometry = pipe:radius=4,length=20
    steps = 1000
    tau = 0.9
    voxel_size = 0.0002
    layout = soa
    workers = 2

    [iolet.0]
    kind = velocity
    table = beat

    [iolet.1]
    kind = pressure
    table = 0:0.3333333333333333

Tables are ``time:value`` pairs in seconds and lattice units; ``beat`` names
the built-in 60 bpm inlet profile.  Relative geometry paths resolve against
the config file's directory.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .boundary import BEAT_TABLE, HEART_PERIOD, BLOOD_KINEMATIC_VISCOSITY, LatticeUnits, PressureBC, TimeTable, VelocityBC
from .boundary import BoundaryConfigError
from .geometry import GeometryError, SparseDomain, build_bifurcation, build_box, build_pipe

_RUN = "run"
LAYOUTS = ("aos", "soa")
SCHEMES = ("push", "pull")
SEQUENCES = ("classic", "reordered")
KINDS = ("velocity", "pressure")


class ConfigFileError(ValueError):
    """Carries every problem found, one message per offending field."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class IoletSpec:
    kind: str
    table: tuple  # ((t, v), ...) or the string "beat"
    period: float | None = None

    def time_table(self) -> TimeTable:
        if self.table == "beat":
            return TimeTable.from_pairs(BEAT_TABLE, period=self.period or HEART_PERIOD)
        return TimeTable.from_pairs(self.table, period=self.period)


@dataclass(frozen=True)
class RunConfig:
    geometry: str
    steps: int = 0
    tau: float = 0.8
    voxel_size: float | None = None
    viscosity: float = BLOOD_KINEMATIC_VISCOSITY
    step_seconds: float | None = None
    capture_period: int = 100
    series_period: int = 10
    layout: str = "aos"
    scheme: str = "push"
    sequence: str = "classic"
    workers: int = 1
    rho0: float = 1.0
    out: str = "out"
    iolets: dict = field(default_factory=dict)
    base_dir: str = field(default=".", compare=False)


_TYPES = {
    "geometry": str,
    "steps": int,
    "tau": float,
    "voxel_size": float,
    "viscosity": float,
    "step_seconds": float,
    "capture_period": int,
    "series_period": int,
    "layout": str,
    "scheme": str,
    "sequence": str,
    "workers": int,
    "rho0": float,
    "out": str,
}


def _parse_table(text: str):
    text = text.strip()
    if text == "beat":
        return "beat"
    pairs = []
    for item in text.split(","):
        t, sep, v = item.partition(":")
        if not sep:
            raise ValueError(f"entry {item.strip()!r} is not time:value")
        pairs.append((float(t), float(v)))
    return tuple(pairs)


def _format_table(table) -> str:
    if table == "beat":
        return "beat"
    return ", ".join(f"{t!r}:{v!r}" for t, v in table)


def _convert(key, raw, errors):
    kind = _TYPES[key]
    try:
        value = kind(raw.strip())
    except ValueError:
        errors.append(f"{key}: cannot parse {raw.strip()!r} as {kind.__name__}")
        return None
    if kind is float and not math.isfinite(value):
        errors.append(f"{key}: must be finite, got {raw.strip()!r}")
        return None
    return value


def parse_config(text: str, base_dir=".") -> RunConfig:
    """Parse config text; raise :class:`ConfigFileError` listing all problems."""
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(f"[{_RUN}]\n" + text)
    except configparser.Error as exc:
        raise ConfigFileError([f"syntax: {exc.message if hasattr(exc, 'message') else exc}"]) from None

    errors = []
    values = {}
    for key, raw in cp[_RUN].items():
        if key not in _TYPES:
            errors.append(f"{key}: unknown key")
            continue
        v = _convert(key, raw, errors)
        if v is not None:
            values[key] = v
    if "geometry" not in values and not any(e.startswith("geometry:") for e in errors):
        errors.append("geometry: missing")

    iolets = {}
    for section in cp.sections():
        if section == _RUN:
            continue
        head, _, idx = section.partition(".")
        if head != "iolet" or not idx.isdigit():
            errors.append(f"[{section}]: unknown section (expected [iolet.N])")
            continue
        k = int(idx)
        sec = cp[section]
        for key in sec:
            if key not in ("kind", "table", "period"):
                errors.append(f"iolet.{k}.{key}: unknown key")
        kind = sec.get("kind", "").strip()
        if kind not in KINDS:
            errors.append(f"iolet.{k}.kind: must be one of {'/'.join(KINDS)}, got {kind!r}")
        table = None
        if "table" not in sec:
            errors.append(f"iolet.{k}.table: missing")
        else:
            try:
                table = _parse_table(sec["table"])
            except ValueError as exc:
                errors.append(f"iolet.{k}.table: {exc}")
        period = None
        if "period" in sec:
            try:
                period = float(sec["period"])
            except ValueError:
                errors.append(f"iolet.{k}.period: cannot parse {sec['period']!r} as float")
        if table is not None and kind in KINDS:
            spec = IoletSpec(kind, table, period)
            try:
                tt = spec.time_table()
                if kind == "pressure":
                    PressureBC(k, tt).check()
                iolets[k] = spec
            except BoundaryConfigError as exc:
                errors.append(f"iolet.{k}.table: {exc}")

    cfg = RunConfig(**{"geometry": "", **values}, iolets=dict(sorted(iolets.items())), base_dir=str(base_dir))
    errors += check_config(cfg)
    if errors:
        raise ConfigFileError(errors)
    return cfg


def check_config(cfg: RunConfig) -> list:
    errors = []
    if not cfg.tau > 0.5:
        errors.append(f"tau: must exceed 0.5, got {cfg.tau}")
    if cfg.workers < 1:
        errors.append(f"workers: must be >= 1, got {cfg.workers}")
    if cfg.steps < 0:
        errors.append(f"steps: must be >= 0, got {cfg.steps}")
    for key in ("capture_period", "series_period"):
        if getattr(cfg, key) < 1:
            errors.append(f"{key}: must be >= 1, got {getattr(cfg, key)}")
    for key in ("voxel_size", "viscosity", "step_seconds", "rho0"):
        v = getattr(cfg, key)
        if v is not None and not v > 0:
            errors.append(f"{key}: must be positive, got {v}")
    for key, allowed in (("layout", LAYOUTS), ("scheme", SCHEMES), ("sequence", SEQUENCES)):
        if getattr(cfg, key) not in allowed:
            errors.append(f"{key}: must be one of {'/'.join(allowed)}, got {getattr(cfg, key)!r}")
    return errors


def serialize_config(cfg: RunConfig) -> str:
    lines = []
    for f in fields(RunConfig):
        if f.name in ("iolets", "base_dir"):
            continue
        v = getattr(cfg, f.name)
        if v is None:
            continue
        lines.append(f"{f.name} = {v!r}" if isinstance(v, float) else f"{f.name} = {v}")
    for k, spec in sorted(cfg.iolets.items()):
        lines += ["", f"[iolet.{k}]", f"kind = {spec.kind}", f"table = {_format_table(spec.table)}"]
        if spec.period is not None:
            lines.append(f"period = {spec.period!r}")
    return "\n".join(lines) + "\n"


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigFileError([f"config: cannot read {path}: {exc.strerror}"]) from None
    return parse_config(text, base_dir=path.parent)


def parse_builtin(spec: str):
    """``'pipe:radius=4,length=20'`` -> ``('pipe', {'radius': 4.0, 'length': 20})``."""
    name, _, rest = spec.partition(":")
    params = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, sep, val = item.partition("=")
        if not sep:
            raise GeometryError(f"geometry: parameter {item!r} is not key=value")
        num = float(val)
        params[key.strip()] = int(num) if num.is_integer() and key.strip() != "radius" else num
    return name.strip(), params


BUILTINS = {"pipe": build_pipe, "bifurcation": build_bifurcation, "box": build_box}


def build_geometry(spec: str, voxel_size: float | None = None) -> SparseDomain:
    name, params = parse_builtin(spec)
    if name not in BUILTINS:
        raise GeometryError(f"geometry: unknown builtin shape {name!r} (choose from {', '.join(BUILTINS)})")
    if voxel_size is not None and name != "box":
        params.setdefault("voxel_size", voxel_size)
    try:
        return BUILTINS[name](**params)
    except TypeError as exc:
        raise GeometryError(f"geometry: bad parameters for {name}: {exc}") from None


def load_geometry(cfg: RunConfig) -> SparseDomain:
    from .geometry_io import read_domain

    g = cfg.geometry
    if g.split(":")[0] in BUILTINS:
        return build_geometry(g, cfg.voxel_size)
    path = Path(g)
    if not path.is_absolute():
        path = Path(cfg.base_dir) / path
    if not path.exists():
        raise GeometryError(f"geometry: file {path} does not exist")
    try:
        return read_domain(path)
    except GeometryError as exc:
        raise type(exc)(f"geometry: {path}: {exc}") from None


def lattice_units(cfg: RunConfig, domain: SparseDomain) -> LatticeUnits:
    return LatticeUnits(cfg.voxel_size or domain.voxel_size, cfg.tau, cfg.viscosity)


def simulation_config(cfg: RunConfig, domain: SparseDomain, **overrides):
    """Engine configuration for ``cfg`` on ``domain``; raises listing every problem."""
    from .engine import SimulationConfig

    bcs = {}
    for k, spec in cfg.iolets.items():
        tt = spec.time_table()
        bcs[k] = VelocityBC(k, tt) if spec.kind == "velocity" else PressureBC(k, tt)
    step_seconds = cfg.step_seconds or lattice_units(cfg, domain).dt
    sc = SimulationConfig(
        tau=cfg.tau,
        layout=cfg.layout,
        scheme=cfg.scheme,
        sequence=cfg.sequence,
        workers=cfg.workers,
        rho0=cfg.rho0,
        boundaries=bcs,
        step_seconds=step_seconds,
        capture_period=cfg.capture_period,
    )
    sc = replace(sc, **overrides)
    errors = sc.validate(domain)
    if errors:
        raise ConfigFileError(errors)
    return sc
