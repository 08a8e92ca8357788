"""Canonical JSON writer: stable key order, 12-significant-digit floats.

Byte-identical output for equal documents is the contract; instance files
and experiment reports both rely on it.
"""

from __future__ import annotations

import math
from typing import Any

import numpy as np


def _fmt_float(x: float) -> str:
    if math.isnan(x) or math.isinf(x):
        raise ValueError("non-finite floats are not representable in reports")
    s = format(x, ".12g")
    # keep the value recognizably a float for schema purposes
    if "e" not in s and "E" not in s and "." not in s:
        s += ".0"
    return s


def _write(obj: Any, out: list) -> None:
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(_fmt_float(float(obj)))
    elif isinstance(obj, str):
        out.append('"' + obj.translate(_ESCAPES) + '"')
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, item in enumerate(obj):
            if i:
                out.append(",")
            _write(item, out)
        out.append("]")
    elif isinstance(obj, dict):
        out.append("{")
        for i, key in enumerate(sorted(obj)):
            if not isinstance(key, str):
                raise TypeError(f"non-string key {key!r}")
            if i:
                out.append(",")
            _write(key, out)
            out.append(":")
            _write(obj[key], out)
        out.append("}")
    else:
        raise TypeError(f"unserializable value {obj!r}")


_ESCAPES = {
    ord("\\"): "\\\\",
    ord('"'): '\\"',
    ord("\n"): "\\n",
    ord("\r"): "\\r",
    ord("\t"): "\\t",
    **{i: f"\\u{i:04x}" for i in range(0x20) if i not in (0x09, 0x0A, 0x0D)},
}


def canonical_dumps(obj: Any) -> str:
    out: list = []
    _write(obj, out)
    return "".join(out)
