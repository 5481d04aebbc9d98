"""Plain-text JSON documents for fields, operators, reducing matrices and reports.

Every document carries a ``schema`` tag such as ``mwlab.field/1``.  Floats are
written with Python's shortest round-trip representation (at most 17
significant digits), so reloading reproduces every entry bit for bit.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .errors import ParameterError
from .field import MatrixField, VectorField
from .grid import GridSpec
from .operators import OperatorMatrix
from .reducing import ReducingMatrix

FIELD_SCHEMA = "mwlab.field/1"
OPERATOR_SCHEMA = "mwlab.operator/1"
REDUCING_SCHEMA = "mwlab.reducing/1"
REPORT_SCHEMA = "mwlab.report/1"
RESULT_SCHEMA = "mwlab.result/1"
CONFIG_SCHEMA = "mwlab.config/1"


def to_jsonable(obj):
    """Recursively convert numpy containers and non-finite floats."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def dumps(doc: dict) -> str:
    return json.dumps(to_jsonable(doc), indent=1, sort_keys=True) + "\n"


def write(doc: dict, path) -> None:
    text = dumps(doc)
    if path in (None, "-"):
        import sys
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def read(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParameterError(f"cannot read {path}: {exc}") from exc
    if not isinstance(doc, dict) or "schema" not in doc:
        raise ParameterError(f"{path} has no schema tag")
    return doc


def _grid_doc(grid: GridSpec) -> dict:
    return {"d": grid.d, "L": grid.L}


def _grid(doc: dict) -> GridSpec:
    try:
        return GridSpec(int(doc["d"]), int(doc["L"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParameterError(f"malformed grid {doc!r}") from exc


def field_doc(F) -> dict:
    if isinstance(F, VectorField):
        kind, n = "vector", F.n
    else:
        kind, n = F.kind, F.n
    meta = {k: v for k, v in F.meta.items() if k != "warnings"}
    meta["warnings"] = list(F.meta.get("warnings", []))
    return {"schema": FIELD_SCHEMA, "kind": kind, "grid": _grid_doc(F.grid), "n": n,
            "values": F.values, "meta": meta}


def field_from_doc(doc: dict):
    if doc.get("schema") != FIELD_SCHEMA:
        raise ParameterError(f"expected schema {FIELD_SCHEMA}, got {doc.get('schema')!r}")
    grid = _grid(doc["grid"])
    values = np.asarray(doc["values"], dtype=float)
    if doc["kind"] == "vector":
        F = VectorField(grid, values)
    else:
        F = MatrixField(grid, values, doc["kind"])
    F.meta.update(doc.get("meta", {}))
    return F


def operator_doc(T: OperatorMatrix) -> dict:
    return {"schema": OPERATOR_SCHEMA, "kind": T.kind, "grid": _grid_doc(T.grid), "n": T.n,
            "storage": "scalar" if T.scalar else "block", "blocks": T.blocks, "meta": T.meta}


def operator_from_doc(doc: dict) -> OperatorMatrix:
    if doc.get("schema") != OPERATOR_SCHEMA:
        raise ParameterError(f"expected schema {OPERATOR_SCHEMA}, got {doc.get('schema')!r}")
    return OperatorMatrix(_grid(doc["grid"]), int(doc["n"]), np.asarray(doc["blocks"], dtype=float),
                          doc["kind"], dict(doc.get("meta", {})))


def reducing_doc(R: ReducingMatrix) -> dict:
    return {"schema": REDUCING_SCHEMA, **R.to_dict()}


def reducing_from_doc(doc: dict) -> ReducingMatrix:
    if doc.get("schema") != REDUCING_SCHEMA:
        raise ParameterError(f"expected schema {REDUCING_SCHEMA}, got {doc.get('schema')!r}")
    return ReducingMatrix(np.asarray(doc["A"], dtype=float), doc["mode"], float(doc["distortion"]),
                          float(doc["upper"]), int(doc["samples"]), dict(doc.get("solver", {})))


def load_artifact(path):
    """Load any serialized artifact and return ``(schema, object)``."""
    doc = read(path)
    schema = doc["schema"]
    if schema == FIELD_SCHEMA:
        return schema, field_from_doc(doc)
    if schema == OPERATOR_SCHEMA:
        return schema, operator_from_doc(doc)
    if schema == REDUCING_SCHEMA:
        return schema, reducing_from_doc(doc)
    if schema in (REPORT_SCHEMA, RESULT_SCHEMA, CONFIG_SCHEMA):
        return schema, doc
    raise ParameterError(f"unknown schema {schema!r}")


def artifact_doc(schema: str, obj) -> dict:
    if schema == FIELD_SCHEMA:
        return field_doc(obj)
    if schema == OPERATOR_SCHEMA:
        return operator_doc(obj)
    if schema == REDUCING_SCHEMA:
        return reducing_doc(obj)
    return obj
