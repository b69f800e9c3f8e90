"""Deterministic JSON serialization.

Floats are written with 17 significant digits (lossless for float64, so
re-reading reproduces values bit-exactly) and dict keys keep insertion
order; two identical in-memory structures therefore always serialize to
byte-identical text.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np


def dumps(obj, indent=0) -> str:
    pieces = []
    _write(obj, pieces, indent, 0)
    return "".join(pieces) + ("\n" if indent else "")


def dump(obj, path, indent=2):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj, indent=indent))


def load(path):
    with open(path) as fh:
        return json.load(fh)


def format_float(x) -> str:
    if math.isnan(x):
        raise ValueError("NaN is not representable in JSON output")
    if math.isinf(x):
        raise ValueError("infinity is not representable in JSON output")
    if x == int(x) and abs(x) < 1e16:
        return f"{x:.1f}"
    return format(x, ".17g")


def _write(obj, out, indent, level):
    pad = " " * (indent * (level + 1)) if indent else ""
    close_pad = " " * (indent * level) if indent else ""
    sep = ",\n" if indent else ", "
    if isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n" if indent else "{")
        for i, (key, value) in enumerate(obj.items()):
            if i:
                out.append(sep)
            out.append(f"{pad}{json.dumps(str(key))}: ")
            _write(value, out, indent, level + 1)
        out.append(("\n" + close_pad + "}") if indent else "}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        items = list(obj)
        if not items:
            out.append("[]")
            return
        out.append("[\n" if indent else "[")
        for i, value in enumerate(items):
            if i:
                out.append(sep)
            if indent:
                out.append(pad)
            _write(value, out, indent, level + 1)
        out.append(("\n" + close_pad + "]") if indent else "]")
    elif isinstance(obj, bool) or isinstance(obj, np.bool_):
        out.append("true" if obj else "false")
    elif obj is None:
        out.append("null")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(format_float(float(obj)))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")
