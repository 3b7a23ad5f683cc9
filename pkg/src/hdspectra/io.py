"""CSV and JSON helpers shared by the command line and the demos.

CSV files always carry a header row. JSON documents are single objects
tagged with ``"schema": "hdspectra/1"`` and a ``"kind"``.
"""

from __future__ import annotations

import csv
import io
import json
import math

import numpy as np

from .errors import DataError
from .estimators import SpikeEstimate, SpikeEstimates

SCHEMA = "hdspectra/1"
ESTIMATE_FIELDS = ("method", "k", "d", "distant", "lambda_hat", "cos2_angle", "corr2_score", "shrinkage")


def _read_rows(path):
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except csv.Error as exc:
        raise DataError(f"malformed CSV in {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path} is empty")
    return rows


def read_table(path):
    """Numeric CSV with a header row; returns ``(header, array)``."""
    rows = _read_rows(path)
    header, body = [h.strip() for h in rows[0]], rows[1:]
    if not body:
        raise DataError(f"{path} has a header but no data rows")
    try:
        float(header[0])
    except ValueError:
        pass
    else:
        raise DataError(f"{path} must start with a header row")
    width = len(header)
    data = np.empty((len(body), width))
    for i, row in enumerate(body, start=2):
        if len(row) != width:
            raise DataError(f"{path}, line {i}: expected {width} fields, got {len(row)}")
        try:
            data[i - 2] = [float(c) for c in row]
        except ValueError as exc:
            raise DataError(f"{path}, line {i}: {exc}") from exc
    if not np.all(np.isfinite(data)):
        raise DataError(f"{path} contains non-finite values")
    return header, data


def read_vector(path):
    """A single column or a single row of numbers (header required)."""
    header, data = read_table(path)
    if data.shape[1] == 1:
        return data[:, 0]
    if data.shape[0] == 1:
        return data[0]
    raise DataError(f"{path} must hold one column or one row of values")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else repr(float(v))
    return str(v)


def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def json_text(obj):
    def clean(x):
        if isinstance(x, dict):
            return {str(k): clean(v) for k, v in x.items()}
        if isinstance(x, (list, tuple)):
            return [clean(v) for v in x]
        if isinstance(x, np.ndarray):
            return clean(x.tolist())
        if isinstance(x, (np.floating, float)):
            return None if not math.isfinite(x) else float(x)
        if isinstance(x, np.integer):
            return int(x)
        if isinstance(x, np.bool_):
            return bool(x)
        return x

    return json.dumps(clean(obj), indent=2) + "\n"


def estimates_rows(estimate_sets):
    for est in estimate_sets:
        for e in est.estimates:
            row = e.as_row()
            yield [est.method] + [row[f] for f in ESTIMATE_FIELDS[1:]]


def estimates_csv(estimate_sets):
    return csv_text(ESTIMATE_FIELDS, estimates_rows(estimate_sets))


def estimates_json(estimate_sets, **meta):
    doc = {"schema": SCHEMA, "kind": "spike_estimates", **meta,
           "estimates": [dict(zip(ESTIMATE_FIELDS, r)) for r in estimates_rows(estimate_sets)]}
    return json_text(doc)


def _estimate_from(rec):
    def num(v):
        if v is None or v == "":
            return None
        return float(v)

    distant = rec["distant"]
    if isinstance(distant, str):
        distant = distant.strip().lower() == "true"
    return SpikeEstimate(int(rec["k"]), float(rec["d"]), bool(distant), num(rec["lambda_hat"]),
                         num(rec["cos2_angle"]), num(rec["corr2_score"]), num(rec["shrinkage"]))


def _group(records):
    out = {}
    for rec in records:
        out.setdefault(rec["method"], []).append(_estimate_from(rec))
    return [SpikeEstimates(m, tuple(v)) for m, v in out.items()]


def parse_estimates_csv(text):
    reader = csv.DictReader(io.StringIO(text))
    return _group(list(reader))


def parse_estimates_json(text):
    doc = json.loads(text)
    if doc.get("schema") != SCHEMA:
        raise DataError("unsupported schema")
    return _group(doc["estimates"])
