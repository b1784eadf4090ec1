"""Output formats: time-series CSV and ``CGFLOW1`` binary snapshots.

Snapshot layout (ASCII header, then raw data)::

    CGFLOW1
    dims d N1 [N2 [N3]]
    fields k
    t <shortest round-trip decimal>
    <k * N1 * ... * Nd float64 little-endian values, row-major, component-major>
"""

from __future__ import annotations

import csv
import math
import os
from pathlib import Path

import numpy as np

__all__ = ["SnapshotFormatError", "write_snapshot", "read_snapshot", "format_value", "CsvSeriesWriter"]

MAGIC = b"CGFLOW1\n"


class SnapshotFormatError(ValueError):
    """A snapshot file does not follow the ``CGFLOW1`` layout."""


def write_snapshot(path, fields, t: float, dims: int | None = None) -> None:
    """Write one field (shape ``(N1, ..)``) or a stack ``(k, N1, ..)``.

    ``dims`` disambiguates a stack from a single field of higher dimension;
    by default a 1D..3D array is one field.
    """
    arr = np.asarray(fields, dtype=np.float64)
    if dims is None:
        dims = arr.ndim
    if arr.ndim == dims:
        arr = arr[None]
    if arr.ndim != dims + 1 or not 1 <= dims <= 3:
        raise ValueError(f"cannot store array of shape {arr.shape} as {dims}D fields")
    header = (
        f"dims {dims} {' '.join(str(n) for n in arr.shape[1:])}\n"
        f"fields {arr.shape[0]}\n"
        f"t {float(t)!r}\n"
    ).encode("ascii")
    tmp = Path(str(path) + ".part")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(header)
        fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes(order="C"))
    os.replace(tmp, path)


def _line(fh, prefix):
    raw = fh.readline()
    try:
        text = raw.decode("ascii")
    except UnicodeDecodeError:
        raise SnapshotFormatError(f"non-ASCII header line {raw[:40]!r}") from None
    if not text.endswith("\n") or not text.startswith(prefix + " "):
        raise SnapshotFormatError(f"expected '{prefix} ...' header line, got {text!r}")
    return text[len(prefix) + 1 : -1].split(" ")


def read_snapshot(path) -> tuple[np.ndarray, float]:
    """Return ``(fields, t)`` with ``fields`` shaped ``(k, N1, ..)``."""
    with open(path, "rb") as fh:
        if fh.readline() != MAGIC:
            raise SnapshotFormatError("missing CGFLOW1 magic line")
        try:
            d, *ns = (int(x) for x in _line(fh, "dims"))
            (k,) = (int(x) for x in _line(fh, "fields"))
            (t,) = (float(x) for x in _line(fh, "t"))
        except ValueError as exc:
            if isinstance(exc, SnapshotFormatError):
                raise
            raise SnapshotFormatError(f"bad header value: {exc}") from None
        if len(ns) != d or not 1 <= d <= 3 or k < 1 or any(n < 1 for n in ns):
            raise SnapshotFormatError(f"inconsistent header: dims {d} {ns}, fields {k}")
        count = k * math.prod(ns)
        payload = fh.read()
    if len(payload) != 8 * count:
        raise SnapshotFormatError(f"payload has {len(payload)} bytes, header implies {8 * count}")
    data = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape((k, *ns))
    return data, t


def format_value(v) -> str:
    """Shortest round-trip text for floats; integers and booleans as integers."""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return ""
    return repr(float(v))


class CsvSeriesWriter:
    """Append rows to a CSV file, flushing after each complete record."""

    def __init__(self, path, columns):
        self.columns = list(columns)
        self._fh = open(path, "w", newline="", encoding="utf-8")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(self.columns)
        self._fh.flush()

    def write(self, row: dict) -> None:
        self._w.writerow([format_value(row.get(c)) for c in self.columns])
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
