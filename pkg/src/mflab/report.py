"""Canonical JSON reports and their bundled schemas."""

from __future__ import annotations

import json
import math
import sys
from functools import lru_cache
from importlib import resources

import numpy as np

SCHEMA_TAG = "mflab.run/1"


def _enc(obj, indent: int, level: int) -> str:
    pad = "\n" + " " * (indent * (level + 1))
    end = "\n" + " " * (indent * level)
    if obj is None or isinstance(obj, (bool, np.bool_)):
        return "null" if obj is None else ("true" if obj else "false")
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            raise ValueError(f"non-finite number {x} in report")
        return format(x, ".17g")
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        keys = sorted(obj)
        for k in keys:
            if not isinstance(k, str):
                raise TypeError("report keys must be strings")
        items = [json.dumps(k) + ": " + _enc(obj[k], indent, level + 1) for k in keys]
        return "{" + pad + ("," + pad).join(items) + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(_enc(v, indent, level + 1) for v in obj) + "]"
        return "[" + pad + ("," + pad).join(_enc(v, indent, level + 1) for v in obj) + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def canonical_dumps(obj, indent: int = 2) -> str:
    """Sorted keys, 17 significant digits for floats, fixed layout."""
    return _enc(obj, indent, 0) + "\n"


def emit(report: dict, path: str = "-") -> None:
    text = canonical_dumps(report)
    if path == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


@lru_cache(maxsize=None)
def load_schema(name: str) -> dict:
    return json.loads(resources.files("mflab").joinpath("schemas", name).read_text())


def validate_report(report: dict) -> None:
    """Validate a run report against the envelope and its payload schema."""
    import jsonschema

    jsonschema.validate(report, load_schema("run.schema.json"))
    sub = report["subcommand"].replace("-", "_")
    jsonschema.validate(report["payload"], load_schema(f"payload_{sub}.schema.json"))
