"""Flat ``key = value`` run configuration.

Blank lines and ``#`` comments are ignored. Matrices are written row by
row, entries separated by commas and rows by semicolons::

    noise_couplings = 0.5, 0.5; 0.5, 0.5

Booleans accept true/false/yes/no/1/0.
"""

from __future__ import annotations

import math
import re

import numpy as np

__all__ = ["ConfigError", "SCHEMA", "parse_config", "load_config", "render_config"]


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_PI = re.compile(r"^([+-]?[0-9.]*(?:e[+-]?[0-9]+)?)\*?pi(?:/([0-9.]+))?$")


def _float(text):
    """Plain float, or a multiple of pi such as ``pi/36``, ``-pi/18``, ``2*pi``."""
    t = text.strip().lower().replace(" ", "")
    m = _PI.match(t)
    if m:
        coef = m.group(1)
        scale = -1.0 if coef == "-" else 1.0 if coef in ("", "+") else float(coef)
        return scale * math.pi / (float(m.group(2)) if m.group(2) else 1.0)
    return float(t)


def _matrix(text):
    rows = [r for r in text.split(";") if r.strip()]
    data = [[complex(x.strip().replace(" ", "")) for x in r.split(",")] for r in rows]
    if len({len(r) for r in data}) != 1:
        raise ValueError("rows have different lengths")
    arr = np.array(data)
    return arr.real if not np.any(arr.imag) else arr


def _vector(text):
    return _matrix(text).ravel()


SCHEMA = {
    "scenario": str,
    "delta1": _float,
    "delta2": _float,
    "gamma": _float,
    "gamma_min": _float,
    "gamma_max": _float,
    "gamma_points": int,
    "temperature": _float,
    "kappa": _float,
    "tau0": _float,
    "g_magnitude": _float,
    "text_couplings": _bool,
    "couplings": _matrix,
    "noise_couplings": _matrix,
    "initial_state": _vector,
    "target_state": _vector,
    "rtol": _float,
    "atol": _float,
    "n_samples": int,
    "frame": str,
    "data": str,
    "n_starts": int,
    "bound": _float,
    "seed": int,
}


def parse_config(text, source="<config>"):
    """Parse config text into a dict of typed values."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            out[key] = SCHEMA[key](value.strip())
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
    return out


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read(), source=str(path))


def _render(value):
    if isinstance(value, np.ndarray):
        arr = np.atleast_2d(value)
        return "; ".join(", ".join(repr(complex(x)) if np.iscomplexobj(arr) else f"{float(x):.17g}" for x in row) for row in arr)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def render_config(cfg):
    """Inverse of :func:`parse_config` (keys sorted)."""
    return "".join(f"{k} = {_render(cfg[k])}\n" for k in sorted(cfg))
