"""Deterministic JSON and CSV serialization of check results."""

from __future__ import annotations

import io
import json
import math

import numpy as np

ROW_FIELDS = (
    "name", "check", "group", "surface", "lhs", "rhs", "margin", "error", "verdict", "value",
    "residual", "seed", "tol_cell", "depth_cap", "tol_char", "version", "constants",
)


def fmt(value) -> str:
    """17 significant digits for floats; ``nan``/``inf`` spelled out."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return "%.17g" % v
    if isinstance(value, dict):
        return ";".join(f"{k}={fmt(value[k])}" for k in sorted(value))
    return str(value)


def _cell(text: str) -> str:
    if any(c in text for c in ',"\n'):
        return '"' + text.replace('"', '""') + '"'
    return text


def csv_text(rows, columns=ROW_FIELDS) -> str:
    out = io.StringIO()
    out.write(",".join(columns) + "\n")
    for row in rows:
        out.write(",".join(_cell(fmt(row.get(c, ""))) for c in columns) + "\n")
    return out.getvalue()


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    return obj


def json_text(doc) -> str:
    return json.dumps(_plain(doc), indent=2, sort_keys=True) + "\n"


def write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
