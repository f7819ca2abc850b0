"""Flat ``key = value`` experiment configuration files.

Example::

    # scenario
    D_max_m = 100
    v = 3e8
    C_min_ms = 10
    C_max_ms = 500
    T_f_ms = 10
    M_max = 5
    N_max = 5
    gamma_th = 1
    gamma = 1              # default for every sensor
    sensor.1.gamma = 2     # per-sensor override

Time keys take an optional ``_s`` or ``_ms`` suffix and length keys an optional
``_m`` suffix; unsuffixed values are SI. Unknown or repeated keys are errors.
"""

from __future__ import annotations

import math
import re
from pathlib import Path
from typing import Dict, Union

from .errors import ConfigError
from .params import CommConfig, ScenarioConfig, SensorLink, SystemConfig

_TIME = {"": 1.0, "_s": 1.0, "_ms": 1e-3}
_LENGTH = {"": 1.0, "_m": 1.0}
_PLAIN = {"": 1.0}

# key -> (section, field, unit table, parser)
_FLOAT, _INT, _BOOL = "float", "int", "bool"
_SCALARS = {
    "t0": ("scenario", "t0", _TIME, _FLOAT),
    "v": ("scenario", "v", _PLAIN, _FLOAT),
    "D_max": ("scenario", "D_max", _LENGTH, _FLOAT),
    "I": ("scenario", "I", _PLAIN, _INT),
    "C_min": ("scenario", "C_min", _TIME, _FLOAT),
    "C_max": ("scenario", "C_max", _TIME, _FLOAT),
    "allow_degenerate_comp": ("scenario", "allow_degenerate_comp", _PLAIN, _BOOL),
    "T_f": ("comm", "T_f", _TIME, _FLOAT),
    "T_p": ("comm", "T_p", _TIME, _FLOAT),
    "B": ("comm", "B", _PLAIN, _FLOAT),
    "b": ("comm", "b", _PLAIN, _FLOAT),
    "N0": ("comm", "N0", _PLAIN, _FLOAT),
    "M_max": ("comm", "M_max", _PLAIN, _INT),
    "N_max": ("comm", "N_max", _PLAIN, _INT),
    "S": ("comm", "S", _PLAIN, _INT),
    "gamma_th": ("comm", "gamma_th_override", _PLAIN, _FLOAT),
    "serialize_grants": ("system", "serialize_grants", _PLAIN, _BOOL),
}
_SENSOR_FIELDS = {
    "P": ("P", _FLOAT),
    "beta": ("beta", _FLOAT),
    "gamma": ("gamma_override", _FLOAT),
    "perfect_detection": ("perfect_detection", _BOOL),
    "perfect_transmission": ("perfect_transmission", _BOOL),
}
_SENSOR_KEY = re.compile(r"^sensor\.(\d+)\.(\w+)$")
_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


def _convert(raw: str, kind: str, scale: float, lineno: int, key: str):
    try:
        if kind == _BOOL:
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError
        if kind == _INT:
            val = float(raw)
            if val != int(val):
                raise ValueError
            return int(val)
        val = float(raw)
        if not math.isfinite(val):
            raise ValueError
        return val * scale
    except ValueError:
        raise ConfigError(f"line {lineno}: bad {kind} value {raw!r} for '{key}'") from None


def _resolve_scalar(key: str):
    for name, spec in _SCALARS.items():
        units = spec[2]
        if key.startswith(name) and key[len(name):] in units:
            return name, spec, units[key[len(name):]]
    return None


def parse_config(text: str) -> SystemConfig:
    """Parse config text; fields not mentioned take the dataclass defaults."""
    sections: Dict[str, dict] = {"scenario": {}, "comm": {}, "system": {}}
    sensor_default: dict = {}
    sensor_specific: Dict[int, dict] = {}
    seen: Dict[str, int] = {}

    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line.strip()!r}")
        key, raw = (part.strip() for part in body.split("=", 1))
        if not key or not raw:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line.strip()!r}")

        m = _SENSOR_KEY.match(key)
        if m:
            sid, fname = int(m.group(1)), m.group(2)
            if fname not in _SENSOR_FIELDS or sid < 1:
                raise ConfigError(f"line {lineno}: unknown key '{key}'")
            canon = f"sensor.{sid}.{fname}"
            target = sensor_specific.setdefault(sid, {})
            field_name, kind = _SENSOR_FIELDS[fname]
            scale = 1.0
        elif key in _SENSOR_FIELDS:
            canon = key
            target = sensor_default
            field_name, kind = _SENSOR_FIELDS[key]
            scale = 1.0
        else:
            hit = _resolve_scalar(key)
            if hit is None:
                raise ConfigError(f"line {lineno}: unknown key '{key}'")
            canon, (section, field_name, _, kind), scale = hit
            target = sections[section]
        if canon in seen:
            raise ConfigError(f"line {lineno}: '{canon}' already set on line {seen[canon]}")
        seen[canon] = lineno
        target[field_name] = _convert(raw, kind, scale, lineno, key)

    scenario = ScenarioConfig(**sections["scenario"])
    comm = CommConfig(**sections["comm"])
    bad = [sid for sid in sensor_specific if sid > scenario.I]
    if bad:
        raise ConfigError(f"sensor ids {bad} exceed I={scenario.I}")
    links = tuple(
        SensorLink(**{**sensor_default, **sensor_specific.get(sid, {})})
        for sid in range(1, scenario.I + 1)
    )
    return SystemConfig(scenario, comm, links, **sections["system"])


def load_config(path: Union[str, Path]) -> SystemConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def _fmt(val) -> str:
    if isinstance(val, bool):
        return "true" if val else "false"
    return repr(val)


def dump_config(system: SystemConfig) -> str:
    """Fully resolved config in SI units; parsing it gives back ``system``."""
    lines = ["# resolved configuration, SI units"]
    owners = {"scenario": system.scenario, "comm": system.comm, "system": system}
    for key, (section, field_name, units, _) in _SCALARS.items():
        val = getattr(owners[section], field_name)
        if val is None:
            continue
        suffix = "_s" if units is _TIME else ("_m" if units is _LENGTH else "")
        lines.append(f"{key}{suffix} = {_fmt(val)}")
    for sid, link in enumerate(system.links, start=1):
        for key, (field_name, _) in _SENSOR_FIELDS.items():
            val = getattr(link, field_name)
            if val is not None:
                lines.append(f"sensor.{sid}.{key} = {_fmt(val)}")
    return "\n".join(lines) + "\n"

