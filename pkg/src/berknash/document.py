"""Line-oriented model documents.

A document is a sequence of ``section.key = value`` lines. Blank lines and
lines starting with ``#`` are ignored. Values are parsed into Python objects:

=====================  =============================================
``0.5``, ``-inf``      float
``401``                int (no decimal point or exponent)
``[a, b]``             :class:`Interval`
``grid(lo, hi, n)``    :class:`Grid`
``param[i]``           :class:`ParamRef`
``a, b, c``            tuple of parsed scalars
``a, b; c, d``         tuple of tuples (a matrix, rows split on ``;``)
anything else          the stripped string
=====================  =============================================
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import ConfigError

SECTIONS = ("state", "action", "theta", "kernel.true", "kernel.model", "payoff", "solve")

_GRID = re.compile(r"^grid\(\s*([^,]+),([^,]+),([^,]+)\)$")
_INTERVAL = re.compile(r"^\[\s*([^,\]]+),([^,\]]+)\]$")
_PARAM = re.compile(r"^param\[\s*(\d+)\s*\]$")
_INT = re.compile(r"^[+-]?\d+$")


@dataclass(frozen=True)
class ParamRef:
    """Binds a kernel coefficient to coordinate ``index`` of the parameter."""

    index: int

    def __str__(self):
        return f"param[{self.index}]"


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __str__(self):
        return f"[{_fmt(self.lo)},{_fmt(self.hi)}]"


@dataclass(frozen=True)
class Grid:
    lo: float
    hi: float
    n: int

    def __str__(self):
        return f"grid({_fmt(self.lo)},{_fmt(self.hi)},{self.n})"


def _fmt(v):
    if isinstance(v, float) and v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v) if isinstance(v, float) else str(v)


def _scalar(token, path):
    token = token.strip()
    if not token:
        raise ConfigError("empty value", path)
    m = _PARAM.match(token)
    if m:
        return ParamRef(int(m.group(1)))
    if _INT.match(token):
        return int(token)
    try:
        return float(token)
    except ValueError:
        return token


def _number(token, path):
    v = _scalar(token, path)
    if isinstance(v, (int, float)):
        return float(v)
    raise ConfigError(f"expected a number, got {token.strip()!r}", path)


def parse_value(text, path=None):
    """Parse one right-hand side according to the grammar above."""
    text = text.strip()
    m = _GRID.match(text)
    if m:
        n = _scalar(m.group(3), path)
        if not isinstance(n, int) or n < 1:
            raise ConfigError("grid count must be a positive integer", path)
        return Grid(_number(m.group(1), path), _number(m.group(2), path), n)
    m = _INTERVAL.match(text)
    if m:
        lo, hi = _number(m.group(1), path), _number(m.group(2), path)
        if lo > hi:
            raise ConfigError(f"empty interval [{lo}, {hi}]", path)
        return Interval(lo, hi)
    if text.startswith("[") or text.startswith("grid("):
        raise ConfigError(f"cannot parse {text!r}", path)
    if ";" in text:
        return tuple(tuple(_scalar(t, path) for t in row.split(",")) for row in text.split(";"))
    if "," in text:
        return tuple(_scalar(t, path) for t in text.split(","))
    return _scalar(text, path)


def parse_document(text):
    """Parse a model document into a flat ``{dotted.key: value}`` dict."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        if not any(key == s or key.startswith(s + ".") for s in SECTIONS):
            raise ConfigError(f"line {lineno}: unknown section", key)
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key", key)
        out[key] = parse_value(value, key)
    return out


def format_value(value):
    """Inverse of :func:`parse_value` for values it produces."""
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return "; ".join(", ".join(format_value(v) for v in row) for row in value)
        return ", ".join(format_value(v) for v in value)
    if isinstance(value, (float, int)) and not isinstance(value, bool):
        return _fmt(value)
    return str(value)


def format_document(config):
    """Render a flat config dict as document text (keys in insertion order)."""
    return "".join(f"{k} = {format_value(v)}\n" for k, v in config.items())
