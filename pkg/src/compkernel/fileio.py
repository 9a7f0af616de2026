"""Matrix file formats shared by datasets, kernel matrices and features.

Binary files are little-endian: two int64 values ``(rows, cols)`` followed by
the float64 entries in row-major order. CSV files hold one row per line with
``repr`` floats so that round trips are exact.
"""

from __future__ import annotations

import csv
import io
import struct
from pathlib import Path

import numpy as np


def matrix_to_bytes(a: np.ndarray) -> bytes:
    a = np.ascontiguousarray(a, dtype="<f8")
    if a.ndim != 2:
        raise ValueError("expected a 2-D array")
    return struct.pack("<qq", *a.shape) + a.tobytes()


def matrix_from_bytes(data: bytes) -> np.ndarray:
    if len(data) < 16:
        raise ValueError("binary matrix file is too short for its header")
    rows, cols = struct.unpack("<qq", data[:16])
    body = data[16:]
    if len(body) != 8 * rows * cols:
        raise ValueError(f"header says {rows}x{cols} but payload has {len(body)} bytes")
    return np.frombuffer(body, dtype="<f8").reshape(rows, cols).astype(float)


def matrix_to_csv(a: np.ndarray) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in np.atleast_2d(a):
        writer.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def matrix_from_csv(text: str) -> np.ndarray:
    rows = [[float(v) for v in row] for row in csv.reader(io.StringIO(text)) if row]
    if not rows:
        raise ValueError("empty CSV matrix")
    if len({len(r) for r in rows}) != 1:
        raise ValueError("CSV rows have different lengths")
    return np.array(rows, dtype=float)


def read_matrix(path: str | Path) -> np.ndarray:
    """Read a CSV (``.csv`` suffix) or binary matrix file."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return matrix_from_csv(path.read_text())
    return matrix_from_bytes(path.read_bytes())


def write_matrix(path: str | Path, a: np.ndarray) -> None:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        path.write_text(matrix_to_csv(a))
    else:
        path.write_bytes(matrix_to_bytes(a))
