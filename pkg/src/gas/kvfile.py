"""Flat ``key = value`` text documents used for params, checkpoints and configs."""
from __future__ import annotations

from pathlib import Path

import numpy as np


def format_float(x: float) -> str:
    """17 significant digits: enough for an exact float64 round trip."""
    return "%.17g" % float(x)


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format_float(v)
    if isinstance(v, np.ndarray):
        return " ".join(format_float(x) for x in v.ravel())
    return str(v)


def dumps(items) -> str:
    lines = []
    for key, value in items:
        if any(ch.isspace() for ch in key) or "=" in key:
            raise ValueError(f"bad key {key!r}")
        lines.append(f"{key} = {format_value(value)}")
    return "\n".join(lines) + "\n"


def write(path, items) -> None:
    Path(path).write_text(dumps(items), encoding="utf-8")


def loads(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key = key.strip()
        if key in out:
            raise ValueError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def read(path) -> dict[str, str]:
    return loads(Path(path).read_text(encoding="utf-8"))
