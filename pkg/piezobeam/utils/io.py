"""Artifact writers and readers.

All writes are atomic: the content goes to a temporary file in the target
directory which then replaces the destination. Floats are written with 17
significant digits so that identical runs give byte-identical files.
"""
import os
import csv
import json
import math
import logging
import tempfile

import numpy as np

from ..errors import FileFormat

logger = logging.getLogger('piezobeam')

FLOAT_FORMAT = '%.17g'
NA = 'NA'
IC_COLUMNS = ('x', 'v0', 'p0', 'v1', 'p1')


def format_value(value):
    if value is None:
        return NA
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return FLOAT_FORMAT % float(value)
    return str(value)


def atomic_write_text(path, text):
    """Write text to path through a temporary file and os.replace."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix='.tmp-', suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, 'w', encoding='utf-8', newline='') as f:
            f.write(text)
        os.replace(tmp_path, path)
    except Exception:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise
    logger.debug(f"Wrote {path}")
    return path


def write_csv(path, columns, rows):
    """Write a header and rows with fixed column order."""
    lines = [','.join(columns)]
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"row has {len(row)} fields, expected {len(columns)}")
        lines.append(','.join(format_value(v) for v in row))
    return atomic_write_text(path, '\n'.join(lines) + '\n')


def _json_ready(value):
    if isinstance(value, dict):
        return {str(k): _json_ready(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_json_ready(v) for v in value]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else str(value)
    if isinstance(value, np.bool_):
        return bool(value)
    return value


def to_json(data, indent=None):
    return json.dumps(_json_ready(data), sort_keys=True, indent=indent)


def write_json(path, data):
    return atomic_write_text(path, to_json(data, indent=2) + '\n')


def read_csv(path):
    """Read a CSV written by write_csv into (columns, rows of strings)."""
    try:
        with open(path, 'r', encoding='utf-8', newline='') as f:
            reader = csv.reader(f)
            columns = next(reader)
            rows = [row for row in reader if row]
    except StopIteration:
        raise FileFormat(f"{path} is empty")
    except OSError as e:
        raise FileFormat(f"cannot read {path}: {e}")
    return [c.strip() for c in columns], rows


def read_initial_condition(path, N, L):
    """Read a custom initial condition sampled on x_1..x_{N+1}.

    The file is a CSV with columns x, v0, p0, v1, p1. A row at x = 0 is
    accepted and dropped (the clamped end must be zero).

    Returns:
        tuple: (v0, p0, v1, p1) arrays of length N+1
    """
    columns, rows = read_csv(path)
    if tuple(columns) != IC_COLUMNS:
        raise FileFormat(f"{path}: expected columns {','.join(IC_COLUMNS)}, got {','.join(columns)}",
                         key_path='simulation.ic')
    try:
        data = np.array([[float(v) for v in row] for row in rows], dtype=float)
    except ValueError as e:
        raise FileFormat(f"{path}: non-numeric entry ({e})", key_path='simulation.ic')
    if data.ndim != 2 or data.shape[1] != len(IC_COLUMNS):
        raise FileFormat(f"{path}: every row needs {len(IC_COLUMNS)} fields", key_path='simulation.ic')

    h = L / (N + 1)
    if len(data) == N + 2:
        if not np.allclose(data[0, 1:], 0.0) or abs(data[0, 0]) > 1e-12 * L:
            raise FileFormat(f"{path}: the row at x=0 must be zero", key_path='simulation.ic')
        data = data[1:]
    if len(data) != N + 1:
        raise FileFormat(f"{path}: expected {N + 1} nodes, got {len(data)}", key_path='simulation.ic')
    nodes = h * np.arange(1, N + 2)
    if not np.allclose(data[:, 0], nodes, rtol=0.0, atol=1e-9 * L):
        raise FileFormat(f"{path}: x column does not match the grid x_j = j*{h:g}", key_path='simulation.ic')
    return data[:, 1], data[:, 2], data[:, 3], data[:, 4]
