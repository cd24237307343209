"""INI configuration with dotted sections mapped onto the run dataclasses.

Top-level scalar fields of :class:`RunConfig` live in ``[run]``; nested
dataclasses become sections named by their attribute path (``[env]``,
``[env.launcher]``, ``[train.mappo]`` ...). Tuples are written as
space-separated values. Any key or section that does not correspond to a
field is rejected with an error naming it.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
import typing
from pathlib import Path

from .train import RunConfig, default_mappo_params


class ConfigError(ValueError):
    pass


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return " ".join(_fmt(x) for x in v)
    if v is None:
        return "none"
    return str(v)


def _parse_scalar(text: str, kind, key: str):
    t = text.strip()
    try:
        if kind is bool:
            low = t.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(t)
        if kind is int:
            return int(t)
        if kind is float:
            return float(t)
        return t
    except ValueError:
        raise ConfigError(f"invalid value {text!r} for key {key!r} (expected {kind.__name__})") from None


def _parse_like(text: str, default, key: str):
    """Parse using the type of a default value (used for free-form dict sections)."""
    if default is None:
        if text.strip().lower() == "none":
            return None
        return tuple(_parse_scalar(x, int, key) for x in text.split())
    if isinstance(default, (tuple, list)):
        kind = type(default[0]) if default else float
        return tuple(_parse_scalar(x, kind, key) for x in text.split())
    return _parse_scalar(text, type(default), key)


def _parse_typed(text: str, hint, key: str):
    origin = typing.get_origin(hint)
    if origin is tuple:
        args = typing.get_args(hint)
        kind = args[0] if args else float
        return tuple(_parse_scalar(x, kind, key) for x in text.split())
    return _parse_scalar(text, hint, key)


def _sections(obj, path: str, out: dict[str, dict[str, str]]):
    own = out.setdefault(path, {})
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        sub = f"{path}.{f.name}" if path != "run" else f.name
        if dataclasses.is_dataclass(v):
            _sections(v, sub, out)
        elif isinstance(v, dict):
            out[sub] = {k: _fmt(x) for k, x in v.items()}
        else:
            own[f.name] = _fmt(v)


def dump_config(cfg: RunConfig) -> str:
    sections: dict[str, dict[str, str]] = {}
    _sections(cfg, "run", sections)
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    for name, items in sections.items():
        if not items and name != "run":
            continue
        cp[name] = items
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def _build(cls, path: str, cp: configparser.ConfigParser, used: set, default):
    hints = typing.get_type_hints(cls)
    kwargs = {}
    section = cp[path] if cp.has_section(path) else {}
    if cp.has_section(path):
        used.add(path)
        names = {f.name for f in dataclasses.fields(cls)}
        for key in section:
            if key not in names or dataclasses.is_dataclass(getattr(default, key)) or isinstance(getattr(default, key), dict):
                raise ConfigError(f"unknown key {key!r} in section [{path}]")
    for f in dataclasses.fields(cls):
        dv = getattr(default, f.name)
        sub = f"{path}.{f.name}" if path != "run" else f.name
        if dataclasses.is_dataclass(dv):
            kwargs[f.name] = _build(type(dv), sub, cp, used, dv)
        elif isinstance(dv, dict):
            kwargs[f.name] = _build_dict(sub, cp, used, dv)
        elif f.name in section:
            kwargs[f.name] = _parse_typed(section[f.name], hints[f.name], f"{path}.{f.name}")
        else:
            kwargs[f.name] = dv
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration in [{path}]: {exc}") from exc


def _build_dict(path: str, cp, used: set, default: dict) -> dict:
    if path == "train.mappo":
        allowed = default_mappo_params()
        base = dict(default)
    else:
        allowed = default
        base = dict(default)
    if not cp.has_section(path):
        return base
    used.add(path)
    for key, text in cp[path].items():
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in section [{path}]")
        base[key] = _parse_like(text, allowed[key], f"{path}.{key}")
    return base


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    used: set[str] = set()
    cfg = _build(RunConfig, "run", cp, used, RunConfig())
    extra = [s for s in cp.sections() if s not in used]
    if extra:
        raise ConfigError(f"unknown section [{extra[0]}]")
    return cfg


def load_config(path) -> RunConfig:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"config file not found: {p}")
    return parse_config(p.read_text())
