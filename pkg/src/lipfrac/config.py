"""Run configuration: flat INI-style text, sections of key = value pairs.

Paths inside the file are resolved relative to the file itself, so a config
plus its mesh can be moved around as a unit. All physical quantities are SI.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import BoundaryCondition
from .material import MaterialParams


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


@dataclass(frozen=True)
class Rectangle:
    """Axis-aligned region used to attribute crack length to subdomains."""

    x0: float
    y0: float
    x1: float
    y1: float

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ConfigError(f"degenerate rectangle {self}")

    def contains(self, points) -> np.ndarray:
        p = np.asarray(points)
        return (
            (p[:, 0] >= self.x0)
            & (p[:, 0] <= self.x1)
            & (p[:, 1] >= self.y0)
            & (p[:, 1] <= self.y1)
        )


@dataclass(frozen=True)
class PostprocOptions:
    """Crack-length accounting and branch detection settings.

    ``mode`` is ``"single"`` (one crack, no halving) or
    ``"symmetric_branching"`` (half-model of a symmetric problem: increments
    are halved once branching is detected). ``notch_x`` is where the branch
    detector starts scanning; detection is off when it is None.
    """

    mode: str = "single"
    d_thresh: float = 0.95
    notch_x: float | None = None
    region1: Rectangle | None = None
    region2: Rectangle | None = None

    def __post_init__(self):
        if self.mode not in ("single", "symmetric_branching"):
            raise ConfigError(f"unknown postproc mode {self.mode!r}")
        if not 0.0 < self.d_thresh < 1.0:
            raise ConfigError("d_thresh must lie in (0, 1)")


@dataclass(frozen=True)
class SimulationConfig:
    mesh_path: Path
    mesh_format: str
    tag_names: dict[int, str] | None
    material: MaterialParams
    cfl_factor: float
    t_end: float
    bcs: tuple[BoundaryCondition, ...]
    out_dir: Path
    every: int
    gap_tol: float = 1e-9
    kkt_tol: float = 1e-8
    local_tol: float = 1e-12
    max_iter: int = 100
    post: PostprocOptions = field(default_factory=PostprocOptions)

    def __post_init__(self):
        if not 0.0 < self.cfl_factor < 1.0:
            raise ConfigError("cfl_factor must lie in (0, 1)")
        if self.t_end <= 0.0:
            raise ConfigError("t_end must be positive")
        if self.every < 1:
            raise ConfigError("output cadence must be at least 1")
        for name in ("gap_tol", "kkt_tol", "local_tol"):
            if getattr(self, name) <= 0.0:
                raise ConfigError(f"{name} must be positive")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be at least 1")


_KNOWN_KEYS = {
    "mesh": {"path", "format", "tags"},
    "material": {"e", "nu", "rho", "lc", "yc", "gc"},
    "time": {"cfl_factor", "t_end"},
    "output": {"directory", "every"},
    "solver": {"gap_tol", "kkt_tol", "local_tol", "max_iter"},
    "postproc": {"mode", "d_thresh", "notch_x", "region1", "region2"},
    "bc": {"tag", "kind", "value", "component", "profile", "rise_time"},
}


def _float(section, key, default=None):
    raw = section.get(key)
    if raw is None:
        if default is None:
            raise ConfigError(f"missing key {key!r} in [{section.name}]")
        return default
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section.name}] {key} = {raw!r} is not a number") from exc


def _check_keys(section, kind):
    extra = set(section) - _KNOWN_KEYS[kind]
    if extra:
        raise ConfigError(f"unknown key(s) {sorted(extra)} in [{section.name}]")


def _parse_material(section) -> MaterialParams:
    _check_keys(section, "material")
    e = _float(section, "e")
    nu = _float(section, "nu")
    rho = _float(section, "rho")
    lc = _float(section, "lc")
    has_yc = "yc" in section
    has_gc = "gc" in section
    if has_yc == has_gc:
        raise ConfigError("[material] needs exactly one of yc or gc")
    try:
        if has_yc:
            return MaterialParams(E=e, nu=nu, rho=rho, yc=_float(section, "yc"), lc=lc)
        return MaterialParams.from_fracture_energy(
            E=e, nu=nu, rho=rho, gc=_float(section, "gc"), lc=lc
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _parse_bc(section) -> BoundaryCondition:
    _check_keys(section, "bc")
    try:
        tag = section["tag"]
        kind = section["kind"]
        raw_value = section["value"]
    except KeyError as exc:
        raise ConfigError(f"[{section.name}] is missing {exc.args[0]!r}") from exc
    if kind not in ("displacement", "velocity", "traction"):
        raise ConfigError(f"[{section.name}] unknown kind {kind!r}")
    parts = raw_value.split()
    try:
        numbers = [float(p) for p in parts]
    except ValueError as exc:
        raise ConfigError(f"[{section.name}] value = {raw_value!r} is not numeric") from exc
    if kind == "traction":
        if len(numbers) != 2:
            raise ConfigError(f"[{section.name}] traction value needs two components")
        value: tuple[float, float] | float = (numbers[0], numbers[1])
    else:
        if len(numbers) != 1:
            raise ConfigError(f"[{section.name}] kinematic value must be a single number")
        value = numbers[0]
    try:
        return BoundaryCondition(
            tag=tag,
            kind=kind,
            value=value,
            component=section.get("component"),
            profile=section.get("profile", "constant"),
            rise_time=_float(section, "rise_time", default=0.0),
        )
    except ValueError as exc:
        raise ConfigError(f"[{section.name}]: {exc}") from exc


def _parse_rectangle(section, key) -> Rectangle | None:
    raw = section.get(key)
    if raw is None:
        return None
    parts = raw.split()
    if len(parts) != 4:
        raise ConfigError(f"[postproc] {key} needs four numbers: x0 y0 x1 y1")
    try:
        x0, y0, x1, y1 = (float(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"[postproc] {key} = {raw!r} is not numeric") from exc
    return Rectangle(x0, y0, x1, y1)


def _parse_tags(raw: str) -> dict[int, str]:
    out: dict[int, str] = {}
    for item in raw.split(","):
        item = item.strip()
        if not item:
            continue
        num, _, name = item.partition(":")
        try:
            key = int(num)
        except ValueError as exc:
            raise ConfigError(f"[mesh] tags entry {item!r} must look like 5:left") from exc
        if not name:
            raise ConfigError(f"[mesh] tags entry {item!r} must look like 5:left")
        out[key] = name.strip()
    return out


def load_config(path) -> SimulationConfig:
    path = Path(path)
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc

    known = {"mesh", "material", "time", "output", "solver", "postproc"}
    for name in parser.sections():
        if name not in known and not name.startswith("bc."):
            raise ConfigError(f"unknown section [{name}]")
    for required in ("mesh", "material", "time"):
        if required not in parser:
            raise ConfigError(f"missing section [{required}]")

    base = path.parent
    mesh_sec = parser["mesh"]
    _check_keys(mesh_sec, "mesh")
    if "path" not in mesh_sec:
        raise ConfigError("[mesh] needs a path")
    mesh_format = mesh_sec.get("format", "native_text")
    tag_names = _parse_tags(mesh_sec["tags"]) if "tags" in mesh_sec else None

    time_sec = parser["time"]
    _check_keys(time_sec, "time")

    bcs = []
    for name in parser.sections():
        if name.startswith("bc."):
            bcs.append(_parse_bc(parser[name]))

    out_sec = parser["output"] if "output" in parser else {}
    if "output" in parser:
        _check_keys(parser["output"], "output")
    out_dir = base / out_sec.get("directory", "out")
    try:
        every = int(out_sec.get("every", "1"))
    except ValueError as exc:
        raise ConfigError("[output] every must be an integer") from exc

    solver_sec = parser["solver"] if "solver" in parser else {}
    if "solver" in parser:
        _check_keys(parser["solver"], "solver")

    post = PostprocOptions()
    if "postproc" in parser:
        pp = parser["postproc"]
        _check_keys(pp, "postproc")
        notch = pp.get("notch_x")
        post = PostprocOptions(
            mode=pp.get("mode", "single"),
            d_thresh=_float(pp, "d_thresh", default=0.95),
            notch_x=float(notch) if notch is not None else None,
            region1=_parse_rectangle(pp, "region1"),
            region2=_parse_rectangle(pp, "region2"),
        )

    try:
        max_iter = int(solver_sec.get("max_iter", "100"))
    except ValueError as exc:
        raise ConfigError("[solver] max_iter must be an integer") from exc

    return SimulationConfig(
        mesh_path=base / mesh_sec["path"],
        mesh_format=mesh_format,
        tag_names=tag_names,
        material=_parse_material(parser["material"]),
        cfl_factor=_float(time_sec, "cfl_factor"),
        t_end=_float(time_sec, "t_end"),
        bcs=tuple(bcs),
        out_dir=out_dir,
        every=every,
        gap_tol=_float(solver_sec, "gap_tol", default=1e-9) if solver_sec else 1e-9,
        kkt_tol=_float(solver_sec, "kkt_tol", default=1e-8) if solver_sec else 1e-8,
        local_tol=_float(solver_sec, "local_tol", default=1e-12) if solver_sec else 1e-12,
        max_iter=max_iter,
        post=post,
    )
