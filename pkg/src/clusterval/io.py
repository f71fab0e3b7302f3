"""CSV and JSON serialization for datasets, partitions and reports."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path

import numpy as np

from .core import DissimilarityDataset, FeatureDataset, Partition
from .errors import InvalidDataError, SchemaMismatchError


def _read_rows(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror}") from exc
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    if len(rows) < 2:
        raise InvalidDataError(f"{path}: need a header row and at least one data row")
    return rows


def _parse_float(s, path, row, col):
    try:
        v = float(s)
    except ValueError:
        raise InvalidDataError(f"{path}: non-numeric value {s!r} at row {row}, column {col}")
    if not math.isfinite(v):
        raise InvalidDataError(f"{path}: non-finite value at row {row}, column {col}")
    return v


def read_feature_csv(path) -> FeatureDataset:
    rows = _read_rows(path)
    header = rows[0][1:]
    ids, values = [], []
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(header) + 1:
            raise InvalidDataError(f"{path}: row {r} has {len(row)} fields, expected "
                                   f"{len(header) + 1}")
        ids.append(row[0])
        values.append([_parse_float(s, path, r, c) for c, s in enumerate(row[1:], start=2)])
    return FeatureDataset(np.array(values), ids, header)


def read_dissimilarity_csv(path) -> DissimilarityDataset:
    rows = _read_rows(path)
    header = rows[0][1:]
    row_ids = [row[0] for row in rows[1:]]
    if sorted(row_ids) != sorted(header):
        raise SchemaMismatchError(f"{path}: row ids differ from column ids",
                                  sorted(set(row_ids) ^ set(header)))
    m = np.array([[_parse_float(s, path, r, c) for c, s in enumerate(row[1:], start=2)]
                  for r, row in enumerate(rows[1:], start=2)])
    pos = {o: i for i, o in enumerate(header)}
    cols = [pos[o] for o in row_ids]
    return DissimilarityDataset(m[:, cols], row_ids)


def read_dataset(path, form="feature"):
    if form == "feature":
        return read_feature_csv(path)
    if form == "dissimilarity":
        return read_dissimilarity_csv(path)
    raise InvalidDataError(f"unknown data form {form!r}")


def read_matrix_csv(path):
    """Rectangular block with row and column ids (used for cross blocks)."""
    rows = _read_rows(path)
    cols = rows[0][1:]
    ids = [row[0] for row in rows[1:]]
    m = np.array([[_parse_float(s, path, r, c) for c, s in enumerate(row[1:], start=2)]
                  for r, row in enumerate(rows[1:], start=2)])
    return m, ids, cols


def format_float(x) -> str:
    return repr(float(x))


def feature_csv_text(data: FeatureDataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["object_id", *data.variable_ids])
    for oid, row in zip(data.object_ids, data.values):
        w.writerow([oid, *map(format_float, row)])
    return buf.getvalue()


def matrix_csv_text(m, row_ids, col_ids, corner="object_id") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([corner, *col_ids])
    for oid, row in zip(row_ids, m):
        w.writerow([oid, *map(format_float, row)])
    return buf.getvalue()


def dataset_csv_text(data) -> str:
    if isinstance(data, FeatureDataset):
        return feature_csv_text(data)
    return matrix_csv_text(data.d, data.object_ids, data.object_ids)


def write_text(path, text: str) -> str:
    """Write UTF-8 text and return its SHA-256."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = text.encode("utf-8")
    path.write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def partition_csv_text(p: Partition) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["object_id", "label"])
    for oid, lab in zip(p.object_ids, p.labels.tolist()):
        w.writerow([oid, lab])
    return buf.getvalue()


def read_partition_csv(path, k=None) -> Partition:
    rows = _read_rows(path)
    ids, labels = [], []
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != 2:
            raise InvalidDataError(f"{path}: row {r} must have object_id,label")
        ids.append(row[0])
        try:
            labels.append(int(row[1]))
        except ValueError:
            raise InvalidDataError(f"{path}: label {row[1]!r} at row {r} is not an integer")
    return Partition(labels, k, ids)


def read_table_csv(path):
    """Generic table: returns (object_ids, {column: list of raw strings})."""
    rows = _read_rows(path)
    header = rows[0]
    cols = {h: [] for h in header[1:]}
    ids = []
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise InvalidDataError(f"{path}: row {r} has {len(row)} fields")
        ids.append(row[0])
        for h, v in zip(header[1:], row[1:]):
            cols[h].append(v)
    return ids, cols


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def dumps_json(obj) -> str:
    """Deterministic JSON: sorted keys, no NaN/inf literals."""
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"
