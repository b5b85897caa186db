"""Versioned TOML configuration shared by every command."""

from __future__ import annotations

import copy
import sys
from importlib import resources
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .core import ParameterError

SCHEMA_VERSION = 1


class ConfigError(ParameterError):
    pass


def defaults() -> dict:
    text = resources.files("tweezerkit").joinpath("defaults.toml").read_text()
    return tomllib.loads(text)


def _merge(base: dict, user: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in user.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key '{where}'")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"'{where}' must be a table")
            out[key] = _merge(base[key], value, where)
            continue
        if isinstance(value, dict):
            raise ConfigError(f"'{where}' must be a value, not a table")
        if isinstance(base[key], float) and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if type(value) is not type(base[key]):
            raise ConfigError(f"'{where}' expects {type(base[key]).__name__}, got {type(value).__name__}")
        out[key] = value
    return out


def load_config(path: str | Path | None = None) -> dict:
    """Defaults overlaid with the user file; unknown keys and other schemas are errors."""
    base = defaults()
    if path is None:
        return base
    try:
        with open(path, "rb") as fh:
            user = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    version = user.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"{path}: schema_version {version} is not supported (expected {SCHEMA_VERSION})")
    return _merge(base, user)


__all__ = ["SCHEMA_VERSION", "ConfigError", "defaults", "load_config"]
