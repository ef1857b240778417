"""Plain-text experiment configs: one ``key = value`` per line, ``#`` comments."""

from __future__ import annotations

import dataclasses
import typing

from ..errors import ConfigError
from ..fedsim import ExperimentConfig

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}

KEYS = tuple(f.name for f in dataclasses.fields(ExperimentConfig))
_HINTS = typing.get_type_hints(ExperimentConfig)


def _convert(key, text):
    hint = _HINTS[key]
    text = text.strip()
    if typing.get_origin(hint) is typing.Union:
        if text.lower() in ("", "none"):
            return None
        hint = next(a for a in typing.get_args(hint) if a is not type(None))
    try:
        if hint is bool:
            low = text.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if hint is int:
            return int(text)
        if hint is float:
            return float(text)
        if hint is tuple:
            return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {exc}") from None
    return text


def parse_assignments(lines, source="<config>"):
    """Map ``key = value`` lines to converted values; unknown keys are errors."""
    values = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
        values[key] = _convert(key, value)
    return values


def config_from_mapping(values):
    for key in values:
        if key not in KEYS:
            raise ConfigError(f"unknown config key {key!r}")
    return ExperimentConfig(**values)


def load_config(path, overrides=None):
    with open(path) as fh:
        values = parse_assignments(fh, str(path))
    values.update(overrides or {})
    return config_from_mapping(values)


def dump_config(cfg):
    """Inverse of :func:`load_config` for the non-default fields."""
    out = []
    default = ExperimentConfig()
    for key in KEYS:
        value = getattr(cfg, key)
        if value == getattr(default, key):
            continue
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        elif hasattr(value, "value"):
            value = value.value
        elif value is None:
            value = ""
        out.append(f"{key} = {value}")
    return "\n".join(out) + "\n"
