"""Canonical JSON/CSV emission: fixed key order, reals with 17 significant
digits, so identical inputs produce byte-identical files."""

from __future__ import annotations

import numpy as np


def fmt_real(x) -> str:
    """Format a real with 17 significant digits (round-trips float64)."""
    return format(float(x), ".17g")


def _emit(obj, out: list[str]) -> None:
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(fmt_real(obj))
    elif isinstance(obj, str):
        out.append('"' + obj.replace("\\", "\\\\").replace('"', '\\"') + '"')
    elif isinstance(obj, dict):
        out.append("{")
        for j, (key, val) in enumerate(obj.items()):
            if j:
                out.append(", ")
            _emit(str(key), out)
            out.append(": ")
            _emit(val, out)
        out.append("}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        seq = obj.tolist() if isinstance(obj, np.ndarray) else obj
        out.append("[")
        for j, val in enumerate(seq):
            if j:
                out.append(", ")
            _emit(val, out)
        out.append("]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def to_canonical_json(obj) -> str:
    """Serialize to a canonical JSON string (insertion key order preserved)."""
    out: list[str] = []
    _emit(obj, out)
    return "".join(out)


def write_canonical_json(obj, path) -> None:
    with open(path, "w") as fh:
        fh.write(to_canonical_json(obj))
        fh.write("\n")
