"""CSV serialisation of entropy traces and 2D fields.

Floats are written with 17 significant digits so every value round-trips
bit for bit.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence, Tuple

import numpy as np

from .entropy import TRACE_COLUMNS, EntropyTrace

__all__ = ["fmt", "emit_trace", "read_trace", "emit_field", "read_field", "emit_table"]


def fmt(x) -> str:
    return format(float(x), ".17g")


def emit_trace(trace: EntropyTrace, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for row in trace.rows:
            writer.writerow([fmt(v) for v in row])
    return path


def read_trace(path) -> EntropyTrace:
    trace = EntropyTrace()
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != TRACE_COLUMNS:
            raise ValueError(f"unexpected trace header {header}")
        for row in reader:
            trace.append(*(float(v) for v in row))
    return trace


def emit_field(values: np.ndarray, bounds: Sequence[float], path, axes: Tuple[str, str] = ("chi", "z")) -> Path:
    """Write a 2D array row-major (first index = row) behind a two-line header.

    Line 1: ``# bounds,<axis0>,lo,hi,<axis1>,lo,hi``; line 2: ``# shape,n0,n1``.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 2:
        raise ValueError("field must be two-dimensional")
    b = [fmt(v) for v in bounds]
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"# bounds,{axes[0]},{b[0]},{b[1]},{axes[1]},{b[2]},{b[3]}\n")
        fh.write(f"# shape,{values.shape[0]},{values.shape[1]}\n")
        writer = csv.writer(fh, lineterminator="\n")
        for row in values:
            writer.writerow([fmt(v) for v in row])
    return path


def read_field(path):
    """Inverse of :func:`emit_field`; returns ``(values, bounds, axes)``."""
    with Path(path).open() as fh:
        first = fh.readline().strip().split(",")
        second = fh.readline().strip().split(",")
        if first[0] != "# bounds" or second[0] != "# shape":
            raise ValueError("missing field header")
        axes = (first[1], first[4])
        bounds = (float(first[2]), float(first[3]), float(first[5]), float(first[6]))
        shape = (int(second[1]), int(second[2]))
        values = np.array([[float(v) for v in row] for row in csv.reader(fh)], dtype=float)
    values = values.reshape(shape)
    return values, bounds, axes


def emit_table(header: Sequence[str], rows, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return path
