"""CSV and JSON readers/writers and flat ``key = value`` config files."""

from __future__ import annotations

import configparser
import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import InputError

CURVE_COLUMNS = ["estimator", "flavor", "calibration", "tuning", "bias_sq", "variance", "total", "l2_norm"]
LIMIT_COLUMN = "limit"
FLOAT_COLUMNS = ("tuning", "bias_sq", "variance", "total", "l2_norm")


def format_value(v) -> str:
    """Exact text for floats (``repr`` round-trips), lowercase booleans."""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_rows(path, rows, columns) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([format_value(row.get(c, "")) for c in columns])


def write_curve_csv(path, rows) -> None:
    """Write curve rows; the ``limit`` column is added when any row has one."""
    rows = list(rows)
    cols = list(CURVE_COLUMNS)
    if any(LIMIT_COLUMN in r for r in rows):
        cols.append(LIMIT_COLUMN)
        rows = [dict(r, limit=r.get(LIMIT_COLUMN, False)) for r in rows]
    write_rows(path, rows, cols)


def _parse_float(text: str, where: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise InputError(f"{where}: not a number: {text!r}") from None


def read_curve_csv(path) -> list:
    """Read rows written by :func:`write_curve_csv`; floats come back exact."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise InputError(f"{path}: empty file")
        missing = [c for c in CURVE_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise InputError(f"{path}: missing columns {missing}")
        rows = []
        for k, raw in enumerate(reader, start=2):
            row = dict(raw)
            for c in FLOAT_COLUMNS:
                row[c] = _parse_float(raw[c], f"{path}:{k}")
            if LIMIT_COLUMN in raw:
                row[LIMIT_COLUMN] = raw[LIMIT_COLUMN].strip().lower() == "true"
            rows.append(row)
    if not rows:
        raise InputError(f"{path}: no data rows")
    return rows


def read_design_csv(path, response_column: int | None = None):
    """Read a numeric matrix from CSV, skipping one header line if it is not numeric.

    With ``response_column`` set, that column is split off and returned as
    ``y``; the result is ``(X, y)``. Otherwise ``(X, None)``.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if lines:
        try:
            [float(c) for c in lines[0]]
        except ValueError:
            lines = lines[1:]
    if not lines:
        raise InputError(f"{path}: no data rows")
    width = len(lines[0])
    if any(len(r) != width for r in lines):
        raise InputError(f"{path}: ragged rows")
    data = np.array([[_parse_float(c, str(path)) for c in r] for r in lines])
    if not np.all(np.isfinite(data)):
        raise InputError(f"{path}: non-finite entries")
    if response_column is None:
        return data, None
    j = response_column % width
    y = data[:, j]
    X = np.delete(data, j, axis=1)
    if X.shape[1] == 0:
        raise InputError(f"{path}: no feature columns besides the response")
    return X, y


def read_vector(path) -> np.ndarray:
    X, _ = read_design_csv(path)
    return X.reshape(-1)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _clean(o):
    """Replace non-finite floats by strings so the output is strict JSON."""
    if isinstance(o, float) and not math.isfinite(o):
        return "nan" if math.isnan(o) else ("inf" if o > 0 else "-inf")
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    return o


def dumps(obj) -> str:
    obj = json.loads(json.dumps(obj, default=_json_default))
    return json.dumps(_clean(obj), indent=2, allow_nan=False) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj), encoding="utf-8")


def read_config(path) -> dict:
    """Flat ``key = value`` lines (``#`` comments allowed) into a dict of strings.

    Keys may use dashes or underscores; they are normalised to underscores.
    """
    text = Path(path).read_text(encoding="utf-8")
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"))
    try:
        parser.read_string("[config]\n" + text)
    except configparser.Error as exc:
        raise InputError(f"{path}: {exc}") from None
    return {k.replace("-", "_"): v for k, v in parser["config"].items()}
