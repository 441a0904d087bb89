"""Dataclass <-> plain-dict conversion for YAML configuration files.

Unknown keys are rejected with the dotted path of the offending field. Nested
dataclasses are rebuilt recursively; lists become tuples where the default is a tuple.
"""
from __future__ import annotations

import dataclasses
import hashlib
import typing
from pathlib import Path

import numpy as np
import yaml


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key when known."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


def to_dict(obj) -> dict:
    if dataclasses.is_dataclass(obj):
        return {f.name: to_dict(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (tuple, list)):
        return [to_dict(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _dataclass_type(tp):
    """Resolve ``X | None`` / ``Optional[X]`` to X when X is a dataclass."""
    if dataclasses.is_dataclass(tp):
        return tp
    for arg in typing.get_args(tp):
        if dataclasses.is_dataclass(arg):
            return arg
    return None


def from_dict(cls, data, path: str = ""):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"expected a mapping, got {type(data).__name__}", path or None)
    hints = typing.get_type_hints(cls)
    names = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(names))
    if unknown:
        where = f"{path}.{unknown[0]}" if path else unknown[0]
        raise ConfigError("unknown key", where)
    kwargs = {}
    for key, value in data.items():
        where = f"{path}.{key}" if path else key
        sub = _dataclass_type(hints.get(key))
        if sub is not None and isinstance(value, dict):
            kwargs[key] = from_dict(sub, value, where)
        elif isinstance(value, list):
            kwargs[key] = tuple(tuple(v) if isinstance(v, list) else v for v in value)
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except ConfigError as exc:
        if path and exc.field and not exc.field.startswith(path + "."):
            raise ConfigError(str(exc).split(": ", 1)[-1], f"{path}.{exc.field}") from exc
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), path or None) from exc


def dump_yaml(obj) -> str:
    return yaml.safe_dump(to_dict(obj), sort_keys=False, default_flow_style=None)


def load_yaml(cls, text: str):
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"unparseable config: {exc}") from exc
    return from_dict(cls, data)


def read_yaml(cls, path):
    return load_yaml(cls, Path(path).read_text())


def content_hash(obj) -> str:
    return hashlib.sha256(dump_yaml(obj).encode()).hexdigest()[:16]
