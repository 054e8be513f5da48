"""JSON report documents and atomic file output."""

import hashlib
import json
import math
import os
import tempfile
from dataclasses import asdict, is_dataclass

SCHEMA_VERSION = "1"
TOOL = "jjtune 0.1.0"


def write_text_atomic(path, text):
    """Whole-file atomic write: temp file in the target dir, then rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def digest_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()[:16]


def _jsonable(obj):
    if is_dataclass(obj) and not isinstance(obj, type):
        return _jsonable(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "tolist"):
        return _jsonable(obj.tolist())
    if isinstance(obj, float):
        if math.isnan(obj):
            return "nan"
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    if isinstance(obj, (str, int, bool)) or obj is None:
        return obj
    return str(obj)


def build_report(kind, payload, inputs=None, flags=None, seed=None):
    """Self-describing report document; deterministic given inputs and seed."""
    doc = {
        "schema_version": SCHEMA_VERSION,
        "tool": TOOL,
        "kind": kind,
        "inputs": _jsonable(inputs or {}),
        "seed": seed,
        "payload": _jsonable(payload),
        "flags": _jsonable(flags or {}),
    }
    return doc


def format_report(doc):
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def write_report(doc, path):
    write_text_atomic(path, format_report(doc))


def parse_report(text):
    return json.loads(text)
