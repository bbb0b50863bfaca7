"""Plain-text run configuration: ``key = value`` lines with ``#`` comments.

Keys that describe a benchmark matrix (``N``, ``coefficient``,
``preconditioner``) accept comma-separated lists; everything else is scalar.
"""
from __future__ import annotations

from pathlib import Path

from .errors import ConfigError

LIST_KEYS = frozenset({"N", "coefficient", "preconditioner"})

CONVERTERS = {
    "a": float,
    "b": float,
    "T": float,
    "N": int,
    "M": int,
    "beta": float,
    "lambda": float,
    "gamma1": float,
    "coefficient": str,
    "preconditioner": str,
    "l": int,
    "tol": float,
    "maxit": int,
    "side": str,
    "restart": int,
    "source": str,
    "initial": str,
    "eigensolver": str,
}


def _convert(key, raw, lineno):
    try:
        return CONVERTERS[key](raw)
    except ValueError:
        raise ConfigError(f"line {lineno}: bad value {raw!r} for key '{key}'") from None


def parse_config(text: str) -> dict:
    """Parse config text into ``{key: value or [values]}``.

    List keys always map to a list, even when a single value is given.
    """
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in CONVERTERS:
            raise ConfigError(f"line {lineno}: unknown key '{key}'")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key '{key}'")
        if not raw:
            raise ConfigError(f"line {lineno}: empty value for key '{key}'")
        if key in LIST_KEYS:
            items = [s.strip() for s in raw.split(",")]
            if not all(items):
                raise ConfigError(f"line {lineno}: empty list item for key '{key}'")
            out[key] = [_convert(key, s, lineno) for s in items]
        else:
            out[key] = _convert(key, raw, lineno)
    return out


def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)
