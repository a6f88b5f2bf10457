"""Deterministic CSV and JSON writers for command outputs.

Every CSV starts with a ``# biphoton <version> config=<hash>`` comment line.
Numbers use ``repr`` of Python floats, which is locale independent and
round-trips exactly; JSON is written with sorted keys.
"""

import csv
import json
import math
from pathlib import Path

import numpy as np

from . import __version__


def header_line(config_hash):
    return f"# biphoton {__version__} config={config_hash}"


def _cell(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return "nan" if math.isnan(value) else repr(value)
    return "" if value is None else str(value)


def write_csv(path, config_hash, columns, rows):
    """Write ``rows`` under ``columns``; returns the path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(header_line(config_hash) + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    return path


def read_csv(path):
    """``(columns, rows)`` of a file written by ``write_csv``; cells stay strings."""
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    columns = next(reader)
    return columns, list(reader)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        obj = float(obj)
        return obj if math.isfinite(obj) else None
    return obj


def write_json(path, config_hash, payload):
    """Write ``payload`` with tool version and config hash added."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"tool": "biphoton", "version": __version__, "config_hash": config_hash}
    doc.update(_jsonable(payload))
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2, allow_nan=False)
        fh.write("\n")
    return path


def write_matrix_csv(path, config_hash, row_axis, col_axis, matrix, corner="signal_nm\\idler_nm"):
    """Matrix with the column axis as header row and the row axis as first column."""
    rows = ([r, *m] for r, m in zip(row_axis, matrix))
    return write_csv(path, config_hash, [corner, *(_cell(c) for c in col_axis)], rows)
