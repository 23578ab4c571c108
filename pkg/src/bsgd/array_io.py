"""BSGD-ARRAY v1 file format.

One ASCII header line ``BSGD <ndim> <dim1> <dim2> ...`` terminated by a
newline, followed by the row-major IEEE-754 float64 little-endian payload.
Used for phantoms, data blocks, and reconstructions.
"""

from __future__ import annotations

import numpy as np

from .geometry import GridVector, _LebesgueVector

__all__ = ["read_array", "write_array"]

_MAGIC = b"BSGD"
_MAX_HEADER = 4096


def write_array(path, values) -> None:
    """Write an array (or vector wrapper) as a BSGD-ARRAY v1 file."""
    if isinstance(values, _LebesgueVector):
        values = values.values
    arr = np.ascontiguousarray(values, dtype=np.float64)
    header = " ".join([_MAGIC.decode(), str(arr.ndim)] + [str(d) for d in arr.shape])
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii") + b"\n")
        fh.write(arr.astype("<f8").tobytes(order="C"))


def read_array(path) -> GridVector:
    """Read a BSGD-ARRAY v1 file."""
    with open(path, "rb") as fh:
        header = fh.readline(_MAX_HEADER)
        if not header.endswith(b"\n"):
            raise ValueError(f"{path}: missing or overlong BSGD header line")
        parts = header.decode("ascii", errors="replace").split()
        if not parts or parts[0] != _MAGIC.decode():
            raise ValueError(f"{path}: not a BSGD-ARRAY file")
        try:
            ndim = int(parts[1])
            shape = tuple(int(d) for d in parts[2:])
        except (IndexError, ValueError) as exc:
            raise ValueError(f"{path}: malformed BSGD header") from exc
        if len(shape) != ndim or any(d <= 0 for d in shape):
            raise ValueError(f"{path}: header dims {shape} inconsistent with ndim {ndim}")
        count = int(np.prod(shape))
        payload = fh.read(8 * count + 1)
        if len(payload) != 8 * count:
            raise ValueError(
                f"{path}: payload size mismatch (expected {8 * count} bytes)"
            )
    arr = np.frombuffer(payload, dtype="<f8").reshape(shape)
    return GridVector(arr)
