"""Input parsing helpers shared by the CLI and the estimator wrappers."""
from __future__ import annotations

import json
import math
from fractions import Fraction
from pathlib import Path

import numpy as np


class ConfigError(Exception):
    """An input file or argument could not be parsed; ``location`` names where."""

    def __init__(self, message, location=""):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


def read_json(path, what="input"):
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{what} file not found", str(p))
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON ({exc.msg})", f"{p}:{exc.lineno}:{exc.colno}") from None


def parse_number(text: str):
    """Rational when the string is an integer or p/q or a finite decimal, else float."""
    t = str(text).strip()
    try:
        if "e" in t.lower() or t.lower() in ("inf", "nan", "-inf"):
            return float(t)
        return Fraction(t)
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"cannot parse number {text!r}") from None


def parse_vector(text: str, exact: bool = True):
    parts = [p for p in str(text).replace(";", ",").split(",") if p.strip()]
    if not parts:
        raise ConfigError("empty vector")
    vals = [parse_number(p) for p in parts]
    return vals if exact else [float(v) for v in vals]


def jsonable(obj):
    """Recursively convert to JSON-safe values; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isfinite(v):
            return v
        return "Infinity" if v > 0 else ("-Infinity" if v < 0 else "NaN")
    if isinstance(obj, Fraction):
        return str(obj)
    if obj is None or isinstance(obj, str):
        return obj
    if hasattr(obj, "to_json_dict"):
        return jsonable(obj.to_json_dict())
    return str(obj)
