"""Reading and writing prediction / gradient matrices.

Two formats are supported:

* CSV: one row per output, comma-separated decimals, no header.
* PMAT: the 4 bytes ``b"PMAT"``, little-endian ``u32`` rows and columns,
  then ``rows * cols`` little-endian float32 values in row-major order.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

MAGIC = b"PMAT"
_HEADER = struct.Struct("<4sII")


class MatrixFormatError(ValueError):
    pass


def encode_pmat(matrix: np.ndarray) -> bytes:
    m = np.asarray(matrix)
    if m.ndim != 2:
        raise MatrixFormatError("PMAT stores 2-D matrices only")
    rows, cols = m.shape
    return _HEADER.pack(MAGIC, rows, cols) + np.ascontiguousarray(m, dtype="<f4").tobytes()


def decode_pmat(data: bytes) -> np.ndarray:
    if len(data) < _HEADER.size:
        raise MatrixFormatError("truncated PMAT header")
    magic, rows, cols = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise MatrixFormatError(f"bad magic {magic!r}")
    expected = _HEADER.size + 4 * rows * cols
    if len(data) != expected:
        raise MatrixFormatError(f"PMAT payload is {len(data)} bytes, expected {expected}")
    body = np.frombuffer(data, dtype="<f4", offset=_HEADER.size, count=rows * cols)
    return body.reshape(rows, cols).astype(np.float32)


def format_csv(matrix: np.ndarray) -> str:
    buf = io.StringIO()
    m = np.asarray(matrix)
    if m.dtype.kind == "f":
        m = m + m.dtype.type(0)  # print -0.0 as 0.0
    # repr of float32 -> shortest round-trip text for that precision
    for row in m:
        buf.write(",".join(repr(float(x)) if m.dtype == np.float64 else str(x) for x in row))
        buf.write("\n")
    return buf.getvalue()


def parse_csv(text: str) -> np.ndarray:
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rows.append([float(x) for x in line.split(",")])
        except ValueError:
            raise MatrixFormatError(f"line {lineno}: non-numeric value") from None
    if not rows:
        raise MatrixFormatError("empty matrix")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise MatrixFormatError("ragged CSV matrix")
    return np.asarray(rows, dtype=np.float64)


def read_matrix(path: str | Path) -> np.ndarray:
    """Read a PMAT file (detected by magic bytes) or a CSV file."""
    data = Path(path).read_bytes()
    if data[:4] == MAGIC:
        return decode_pmat(data)
    return parse_csv(data.decode("utf-8"))


def write_matrix(path: str | Path, matrix: np.ndarray) -> None:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        path.write_text(format_csv(matrix), encoding="utf-8")
    else:
        path.write_bytes(encode_pmat(matrix))
