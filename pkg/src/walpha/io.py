"""Flat ``key = value`` configuration files and grid-field CSV files."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .grid import TorusGrid


class ConfigSyntaxError(ConfigurationError):
    def __init__(self, path, lineno, message):
        super().__init__(f"{path}:{lineno}: {message}")
        self.lineno = lineno


def parse_config(text: str, path="<config>", allowed=None) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment.  Values stay strings."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigSyntaxError(path, lineno, f"expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key or not key.replace("_", "").isalnum():
            raise ConfigSyntaxError(path, lineno, f"invalid key {key!r}")
        if not value:
            raise ConfigSyntaxError(path, lineno, f"missing value for {key!r}")
        if allowed is not None and key not in allowed:
            raise ConfigSyntaxError(path, lineno, f"unknown key {key!r}")
        if key in out:
            raise ConfigSyntaxError(path, lineno, f"duplicate key {key!r}")
        out[key] = (value, lineno)
    return out


def read_config(path, allowed=None) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, str(path), allowed)


class Config:
    """Typed access to a parsed configuration with line-numbered errors."""

    def __init__(self, entries: dict, path="<config>"):
        self.entries = entries
        self.path = path

    def has(self, key) -> bool:
        return key in self.entries

    def _conv(self, key, fn, default, what):
        if key not in self.entries:
            if default is _REQUIRED:
                raise ConfigurationError(f"{self.path}: missing required key {key!r}")
            return default
        value, lineno = self.entries[key]
        try:
            return fn(value)
        except (ValueError, TypeError):
            raise ConfigSyntaxError(self.path, lineno, f"{key} must be {what}, got {value!r}") from None

    def int(self, key, default=None):
        return self._conv(key, int, default, "an integer")

    def float(self, key, default=None):
        return self._conv(key, float, default, "a number")

    def str(self, key, default=None):
        return self._conv(key, str, default, "a string")

    def floats(self, key, default=None):
        return self._conv(key, lambda v: [float(s) for s in v.split(",") if s.strip()], default,
                          "a comma-separated list of numbers")

    def ints(self, key, default=None):
        return self._conv(key, lambda v: [int(s) for s in v.split(",") if s.strip()], default,
                          "a comma-separated list of integers")

    def bool(self, key, default=None):
        def conv(v):
            lv = v.lower()
            if lv in ("1", "true", "yes", "on"):
                return True
            if lv in ("0", "false", "no", "off"):
                return False
            raise ValueError(v)
        return self._conv(key, conv, default, "a boolean")

    def line(self, key):
        return self.entries[key][1] if key in self.entries else 0


_REQUIRED = object()


def fmt(x) -> str:
    return f"{float(x):.17g}"


def write_field(path, values, grid: TorusGrid):
    """Three header lines (``dims``, ``n``, ``N_t``), then one row per leading record."""
    values = np.asarray(values, dtype=float)
    rows = values.reshape(-1, grid.n**grid.d)
    lines = [f"dims,{grid.d}", f"n,{grid.n}", f"N_t,{grid.nt}"]
    lines += [",".join(fmt(v) for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def read_field(path):
    """Return ``(grid_params, array)``; the array has shape ``(rows, n, ..., n)``."""
    path = Path(path)
    try:
        lines = path.read_text().strip().splitlines()
    except OSError as exc:
        raise ConfigurationError(f"cannot read field {path}: {exc}") from exc
    try:
        head = {}
        for i, key in enumerate(("dims", "n", "N_t")):
            k, v = lines[i].split(",")
            if k.strip() != key:
                raise ValueError(f"header line {i + 1} should be {key}")
            head[key] = int(v)
        data = np.array([[float(v) for v in ln.split(",")] for ln in lines[3:]])
    except (ValueError, IndexError) as exc:
        raise ConfigurationError(f"{path}: malformed field file ({exc})") from None
    d, n = head["dims"], head["n"]
    if data.ndim != 2 or data.shape[1] != n**d:
        raise ConfigurationError(f"{path}: rows must have n^d = {n**d} values")
    return head, data.reshape((data.shape[0],) + (n,) * d)


def write_json(path, obj):
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_columns(path, header, *cols):
    lines = [",".join(header)]
    for row in zip(*cols):
        lines.append(",".join(fmt(v) if not isinstance(v, str) else v for v in row))
    Path(path).write_text("\n".join(lines) + "\n")
