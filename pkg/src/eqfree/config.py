"""Run configuration: flat ``key = value`` INI text, one section per stage.

Schema (defaults shown by ``eqfree show-config``)::

    [sde]       D, dt, model
    [simulate]  particles, replicas, half_width, total_steps, snapshots,
                mesh_half_width, mesh_points
    [cpi]       particles, replicas, M, P, half_width, heal, record, jump,
                total_steps, snapshots, anchor, suppress_modes,
                mesh_half_width, mesh_points
    [cdr]       particles, replicas, M, P, half_width, micro_steps, e, m, p,
                tol, patience, max_iter, frozen_noise, recenter, track,
                track_replicas, track_heal, track_checkpoints
    [probe]     sigma, A, point1, point2, burst_steps, particles, replicas,
                p0, max_iter, h_p, burn_in, residual, antithetic, estimator
    [analytic]  D, t0, c, points, rel_step

Tuples are comma separated.  Values are resolved in the order: built-in
defaults, preset, config file, command-line flags.
"""
from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field, fields
from typing import Any, Mapping

from .sde import Model, SdeParams


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SdeSection:
    D: float = 5.0
    dt: float = 0.01
    model: str = "diffusive-x"

    def params(self) -> SdeParams:
        return SdeParams(D=self.D, dt=self.dt, model=Model(self.model))


@dataclass(frozen=True)
class SimulateSection:
    particles: int = 2000
    replicas: int = 1
    half_width: float = 10.0
    total_steps: int = 900
    snapshots: tuple = (300, 600, 900)
    mesh_half_width: float = 40.0
    mesh_points: int = 41


@dataclass(frozen=True)
class CpiSection:
    particles: int = 2000
    replicas: int = 1
    M: int = 20
    P: int = 5
    half_width: float = 10.0
    heal: int = 10
    record: int = 10
    jump: int = 10
    total_steps: int = 900
    snapshots: tuple = (300, 600, 900)
    anchor: str = "fitted"
    suppress_modes: tuple = (2, 4)
    mesh_half_width: float = 40.0
    mesh_points: int = 41


@dataclass(frozen=True)
class CdrSection:
    particles: int = 2000
    replicas: int = 100
    M: int = 20
    P: int = 5
    half_width: float = 10.0
    micro_steps: int = 100
    e: float = -2.832
    m: float = 0.4
    p: float = 3.0
    tol: float = 1e-2
    patience: int = 3
    max_iter: int = 30
    frozen_noise: bool = True
    recenter: bool = True
    track: bool = True
    track_replicas: int = 1000
    track_heal: int = 100
    track_checkpoints: tuple = (100, 200, 300)


@dataclass(frozen=True)
class ProbeSection:
    sigma: float = 4.0
    A: float = 2.0
    point1: tuple = (-2.0, -2.0)
    point2: tuple = (3.0, 3.0)
    burst_steps: int = 5
    particles: int = 9000
    replicas: int = 500
    p0: float = 5.0
    max_iter: int = 12
    h_p: float = 0.05
    burn_in: int = 3
    residual: str = "ratio"
    antithetic: bool = True
    estimator: str = "particles"


@dataclass(frozen=True)
class AnalyticSection:
    D: float = 5.0
    t0: float = 0.0
    c: float = 0.2
    points: int = 20
    rel_step: float = 1e-4


SECTIONS = {
    "sde": SdeSection,
    "simulate": SimulateSection,
    "cpi": CpiSection,
    "cdr": CdrSection,
    "probe": ProbeSection,
    "analytic": AnalyticSection,
}


@dataclass(frozen=True)
class RunConfig:
    sde: SdeSection = field(default_factory=SdeSection)
    simulate: SimulateSection = field(default_factory=SimulateSection)
    cpi: CpiSection = field(default_factory=CpiSection)
    cdr: CdrSection = field(default_factory=CdrSection)
    probe: ProbeSection = field(default_factory=ProbeSection)
    analytic: AnalyticSection = field(default_factory=AnalyticSection)

    def override(self, values: Mapping[str, Mapping[str, Any]]) -> "RunConfig":
        """New config with ``{section: {key: value}}`` applied; strings are parsed."""
        changes = {}
        for section, items in values.items():
            if section not in SECTIONS:
                raise ConfigError(f"unknown config section [{section}]")
            current = changes.get(section, getattr(self, section))
            types = {f.name: f for f in fields(current)}
            updates = {}
            for key, raw in items.items():
                if key not in types:
                    raise ConfigError(f"unknown config key '{section}.{key}'")
                updates[key] = _coerce(raw, types[key].default, f"{section}.{key}")
            changes[section] = dataclasses.replace(current, **updates)
        return dataclasses.replace(self, **changes)

    def to_ini(self) -> str:
        parser = configparser.ConfigParser()
        parser.optionxform = str
        for name in SECTIONS:
            sec = getattr(self, name)
            parser[name] = {f.name: _format(getattr(sec, f.name)) for f in fields(sec)}
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()

    def as_dict(self) -> dict:
        return {name: dataclasses.asdict(getattr(self, name)) for name in SECTIONS}


def _format(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(repr(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value).lower() if isinstance(value, bool) else str(value)


def _coerce(raw, default, where: str):
    if not isinstance(raw, str):
        raw = _format(tuple(raw)) if isinstance(raw, (list, tuple)) else _format(raw)
    text = raw.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            kind = type(default[0]) if default else float
            return tuple(kind(v) for v in text.split(",") if v.strip())
        return text
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for config key '{where}'") from None


def parse_ini(text: str) -> dict:
    parser = configparser.ConfigParser()
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config does not parse: {exc}") from None
    return {s: dict(parser[s]) for s in parser.sections()}


def load_config(path, base: RunConfig = RunConfig()) -> RunConfig:
    with open(path) as fh:
        return base.override(parse_ini(fh.read()))


# ---------------------------------------------------------------- presets

_CDR_CASES = {1: (-2.832, 100), 2: (-2.832, 200), 3: (-0.283, 100), 4: (-0.283, 200)}

PRESETS: dict[str, dict[str, dict]] = {
    "sim1": {},
    "sim2": {},
    "set1": {},
    "set2": {"probe": {"sigma": 5.0, "A": 2.5, "point1": (-3.0, -3.0), "point2": (4.0, 4.0)}},
    "residuals": {},
}
for _k, (_e, _T) in _CDR_CASES.items():
    PRESETS[f"sim3-case{_k}"] = {"sde": {"model": "diffusive-x"},
                                 "cdr": {"e": _e, "micro_steps": _T, "track": _k == 1}}
    PRESETS[f"sim4-case{_k}"] = {"sde": {"model": "diffusive-xy"},
                                 "cdr": {"e": _e, "micro_steps": _T, "track": False}}

PRESETS_BY_COMMAND = {
    "simulate": ("sim1",),
    "cpi": ("sim2",),
    "probe": ("set1", "set2"),
    "cdr": tuple(f"sim{s}-case{k}" for s in (3, 4) for k in range(1, 5)),
    "analytic": ("residuals",),
}


def preset_config(name: str) -> RunConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return RunConfig().override(PRESETS[name])
