"""Flat ``namespace.key=value`` configuration files.

Example::

    # dataset
    gen.n_materials=6
    gen.height=128
    psf.sigma=4.0
    train.epochs=30
"""
import dataclasses
import os
import typing

from .errors import ConfigError


def parse_config(text: str, source: str = "<string>") -> dict:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        values[key] = value
    return values


def read_config(path) -> dict:
    path = os.fspath(path)
    try:
        with open(path, encoding="utf-8") as f:
            return parse_config(f.read(), path)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc


def section(values: dict, namespace: str) -> dict:
    prefix = namespace + "."
    return {k[len(prefix):]: v for k, v in values.items() if k.startswith(prefix)}


def _convert(tp, raw: str, key: str):
    if typing.get_origin(tp) is typing.Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if raw in ("None", ""):
            return None
        tp = args[0]
    try:
        if tp is bool:
            if raw.lower() in ("1", "true", "yes"):
                return True
            if raw.lower() in ("0", "false", "no"):
                return False
            raise ValueError(raw)
        if tp is int:
            return int(raw, 0)
        if tp is float:
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    return raw


def build(cls, values: dict, namespace: str = "", **overrides):
    """Instantiate dataclass ``cls`` from string values, checking key names."""
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, raw in values.items():
        if key not in names:
            raise ConfigError(f"unknown key {namespace + '.' if namespace else ''}{key}")
        kwargs[key] = _convert(hints[key], raw, key)
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid {cls.__name__}: {exc}") from exc
