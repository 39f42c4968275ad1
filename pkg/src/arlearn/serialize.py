"""Canonical text serialization for checkpoints, metrics, and tables.

The format is plain JSON restricted to a canonical form so identical data
always serializes to identical bytes: keys sorted, no whitespace, floats
rendered with %.17g (which round-trips float64 exactly) and always carrying
a decimal point or exponent so they parse back as floats.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .errors import SerializationError


def format_float(x: float) -> str:
    """%.17g with a guaranteed '.' or 'e' so the value stays a float."""
    if not math.isfinite(x):
        raise SerializationError(f"cannot serialize non-finite float {x!r}")
    s = format(float(x), ".17g")
    if "." not in s and "e" not in s and "n" not in s:
        s += ".0"
    return s


def _emit(obj, out: list[str]) -> None:
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, (int, np.integer)) and not isinstance(obj, bool):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(format_float(float(obj)))
    elif isinstance(obj, str):
        out.append(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, np.ndarray):
        _emit(obj.tolist(), out)
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, item in enumerate(obj):
            if i:
                out.append(",")
            _emit(item, out)
        out.append("]")
    elif isinstance(obj, dict):
        out.append("{")
        for i, key in enumerate(sorted(obj)):
            if not isinstance(key, str):
                raise SerializationError(f"dict keys must be strings, got {key!r}")
            if i:
                out.append(",")
            out.append(json.dumps(key, ensure_ascii=False))
            out.append(":")
            _emit(obj[key], out)
        out.append("}")
    else:
        raise SerializationError(f"cannot serialize {type(obj).__name__}")


def dumps_canonical(obj) -> str:
    """Canonical single-line JSON encoding of ``obj``."""
    out: list[str] = []
    _emit(obj, out)
    return "".join(out)


def dump_canonical(path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_canonical(obj))
        fh.write("\n")


def loads(text: str):
    return json.loads(text)


def load(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def dump_jsonl(path, records) -> None:
    """One canonical JSON object per line."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(dumps_canonical(rec))
            fh.write("\n")


def load_jsonl(path) -> list:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records
