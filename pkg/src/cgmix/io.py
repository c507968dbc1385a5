"""CSV ingestion/emission and JSON (de)serialization of fitted parameters.

CSV files carry a mandatory header whose columns are named by role:
``x1..xq`` for covariates (never missing) and ``y1..yp`` for study variables,
where an empty cell, ``NA`` or ``NaN`` (case-insensitive) marks a missing
response.  Parameter files use the ``cgmm-params-v1`` schema.
"""

from __future__ import annotations

import csv
import json
import re

import numpy as np

from .model import CgmmParams, DataError, Dataset, DesignSpec
from .imputation import ImputationResult

PARAMS_SCHEMA = "cgmm-params-v1"
_MISSING_TOKENS = {"", "na", "nan"}
_COL_RE = re.compile(r"^([xy])(\d+)$")


def _parse_header(header):
    x_cols, y_cols = {}, {}
    for j, name in enumerate(header):
        m = _COL_RE.match(name.strip().lower())
        if not m:
            raise DataError(f"unrecognized column name {name!r} (expected x#/y#)")
        (x_cols if m.group(1) == "x" else y_cols)[int(m.group(2))] = j
    if not x_cols or not y_cols:
        raise DataError("need at least one x column and one y column")
    for role, cols in (("x", x_cols), ("y", y_cols)):
        if sorted(cols) != list(range(1, len(cols) + 1)):
            raise DataError(f"{role} columns must be numbered 1..{len(cols)}")
    return ([x_cols[i] for i in sorted(x_cols)],
            [y_cols[i] for i in sorted(y_cols)])


def load_csv(path) -> Dataset:
    """Read a dataset; missing x is a hard error, missing y sets delta to 0."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        xi, yi = _parse_header(header)
        x_rows, y_rows, d_rows = [], [], []
        for rnum, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(f"{path}: ragged row {rnum} "
                                f"({len(row)} cells, expected {len(header)})")
            xr = []
            for k, j in enumerate(xi, start=1):
                cell = row[j].strip()
                if cell.lower() in _MISSING_TOKENS:
                    raise DataError(f"{path}: missing x value at row {rnum}, "
                                    f"column x{k}")
                try:
                    xr.append(float(cell))
                except ValueError:
                    raise DataError(f"{path}: non-numeric cell {cell!r} at "
                                    f"row {rnum}, column x{k}") from None
            yr, dr = [], []
            for k, j in enumerate(yi, start=1):
                cell = row[j].strip()
                if cell.lower() in _MISSING_TOKENS:
                    yr.append(np.nan)
                    dr.append(0)
                else:
                    try:
                        yr.append(float(cell))
                    except ValueError:
                        raise DataError(f"{path}: non-numeric cell {cell!r} at "
                                        f"row {rnum}, column y{k}") from None
                    dr.append(1)
            x_rows.append(xr)
            y_rows.append(yr)
            d_rows.append(dr)
    if not x_rows:
        raise DataError(f"{path}: no data rows")
    return Dataset(np.array(x_rows), np.array(y_rows), np.array(d_rows))


def save_csv(path, data: Dataset, y_values: np.ndarray | None = None):
    """Write a dataset; missing responses become empty cells.

    ``y_values`` overrides the response matrix (used to emit completed data,
    in which case nothing is blanked)."""
    y = data.y if y_values is None else np.asarray(y_values, dtype=float)
    blank_missing = y_values is None
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{j + 1}" for j in range(data.q)]
                        + [f"y{j + 1}" for j in range(data.p)])
        for i in range(data.n):
            row = [repr(float(v)) for v in data.x[i]]
            for j in range(data.p):
                if blank_missing and not data.delta[i, j]:
                    row.append("")
                else:
                    row.append(repr(float(y[i, j])))
            writer.writerow(row)


def save_fractional_csv(path, result: ImputationResult, p: int):
    """Long-format weight system: one row per (unit, component)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row", "g", "weight"] + [f"mean_y{j + 1}" for j in range(p)])
        for rec in result.fractional:
            for g in range(rec.weights.shape[0]):
                row = [rec.row, g + 1, repr(float(rec.weights[g]))]
                means = [""] * p
                for k, j in enumerate(rec.mis_idx):
                    means[int(j)] = repr(float(rec.means[g, k]))
                writer.writerow(row + means)


# ---------------------------------------------------------------------------
# params JSON
# ---------------------------------------------------------------------------

def params_to_dict(params: CgmmParams, design: DesignSpec,
                   extra: dict | None = None) -> dict:
    doc = {
        "version": PARAMS_SCHEMA,
        "G": params.G,
        "design": {
            "gate_cols": None if design.gate_cols is None else list(design.gate_cols),
            "mean_cols": None if design.mean_cols is None else list(design.mean_cols),
            "gate_intercept": design.gate_intercept,
            "mean_intercept": design.mean_intercept,
        },
        "alpha": params.alpha.tolist(),
        "B": [b.tolist() for b in params.B],
        "Sigma": [s.tolist() for s in params.Sigma],
    }
    if extra:
        doc.update(extra)
    return doc


def save_params(path, params: CgmmParams, design: DesignSpec,
                extra: dict | None = None):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(params_to_dict(params, design, extra), fh, indent=1)
        fh.write("\n")


def load_params(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("version") != PARAMS_SCHEMA:
        raise DataError(f"{path}: unsupported params schema "
                        f"{doc.get('version')!r}")
    d = doc["design"]
    design = DesignSpec(
        gate_cols=None if d["gate_cols"] is None else tuple(d["gate_cols"]),
        mean_cols=None if d["mean_cols"] is None else tuple(d["mean_cols"]),
        gate_intercept=bool(d["gate_intercept"]),
        mean_intercept=bool(d["mean_intercept"]))
    params = CgmmParams(int(doc["G"]), np.array(doc["alpha"]),
                        [np.array(b) for b in doc["B"]],
                        [np.array(s) for s in doc["Sigma"]])
    return params, design, doc
