"""Shared helpers for the versioned JSON file family.

Every document carries ``format`` and ``version`` keys.  Non-finite reals are
written as the literal string ``"inf"``; finite floats go through ``repr`` (the
json module's default), which round-trips doubles exactly.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from pathlib import Path

from .errors import SchemaError

SCHEMA_VERSION = 1
INF_TOKEN = "inf"


def encode_real(x):
    x = float(x)
    if math.isinf(x) and x > 0:
        return INF_TOKEN
    if math.isnan(x) or math.isinf(x):
        raise ValueError(f"cannot encode {x!r}")
    return x


def decode_real(value, field):
    if isinstance(value, str):
        if value == INF_TOKEN:
            return math.inf
        raise SchemaError(f"expected a number or {INF_TOKEN!r}, got {value!r}", field=field)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"expected a number, got {type(value).__name__}", field=field)
    return float(value)


def decode_matrix(doc, field, rows, cols):
    raw = require(doc, field)
    if not isinstance(raw, list) or len(raw) != rows:
        raise SchemaError(f"expected {rows} rows", field=field)
    out = []
    for r, row in enumerate(raw):
        name = f"{field}[{r}]"
        if not isinstance(row, list) or len(row) != cols:
            raise SchemaError(f"expected {cols} columns", field=name)
        out.append([decode_real(v, f"{name}[{c}]") for c, v in enumerate(row)])
    return out


def require(doc, field):
    if field not in doc:
        raise SchemaError("missing required field", field=field)
    return doc[field]


def dump_document(path, kind, body):
    doc = {"format": kind, "version": SCHEMA_VERSION}
    doc.update(body)
    text = json.dumps(doc, indent=1, allow_nan=False) + "\n"
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=str(path.parent))
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def load_document(path, kind):
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"malformed document: {exc.msg}", line=exc.lineno) from exc
    if not isinstance(doc, dict):
        raise SchemaError("top-level value must be an object", line=1)
    found = require(doc, "format")
    if found != kind:
        raise SchemaError(f"expected format {kind!r}, found {found!r}", field="format")
    version = require(doc, "version")
    if version != SCHEMA_VERSION:
        raise SchemaError(f"unsupported version {version!r}", field="version")
    return doc
