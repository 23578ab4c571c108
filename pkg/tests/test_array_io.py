import struct

import numpy as np
import pytest

from bsgd.array_io import read_array, write_array
from bsgd.geometry import GridVector


def test_round_trip(tmp_path, rng):
    arr = rng.standard_normal((5, 7))
    path = tmp_path / "x.bsgd"
    write_array(path, arr)
    back = read_array(path)
    assert back.shape == (5, 7)
    np.testing.assert_array_equal(back.values, arr)


def test_round_trip_grid_vector(tmp_path):
    v = GridVector([[1.0, -2.0], [0.5, 3.0]])
    path = tmp_path / "v.bsgd"
    write_array(path, v)
    np.testing.assert_array_equal(read_array(path).values, v.values)


def test_header_layout(tmp_path):
    path = tmp_path / "h.bsgd"
    write_array(path, np.arange(6.0).reshape(2, 3))
    raw = path.read_bytes()
    header, payload = raw.split(b"\n", 1)
    assert header == b"BSGD 2 2 3"
    assert len(payload) == 6 * 8
    assert struct.unpack("<d", payload[:8])[0] == 0.0
    assert struct.unpack("<d", payload[8:16])[0] == 1.0


def test_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.bsgd"
    path.write_bytes(b"NOPE 1 3\n" + b"\x00" * 24)
    with pytest.raises(ValueError, match="not a BSGD"):
        read_array(path)


def test_rejects_truncated_payload(tmp_path):
    path = tmp_path / "short.bsgd"
    path.write_bytes(b"BSGD 1 3\n" + b"\x00" * 16)
    with pytest.raises(ValueError, match="payload"):
        read_array(path)


def test_rejects_trailing_bytes(tmp_path):
    path = tmp_path / "long.bsgd"
    path.write_bytes(b"BSGD 1 2\n" + b"\x00" * 24)
    with pytest.raises(ValueError, match="payload"):
        read_array(path)


def test_rejects_inconsistent_dims(tmp_path):
    path = tmp_path / "dims.bsgd"
    path.write_bytes(b"BSGD 2 3\n" + b"\x00" * 24)
    with pytest.raises(ValueError, match="inconsistent"):
        read_array(path)


def test_deterministic_bytes(tmp_path, rng):
    arr = rng.standard_normal((4, 4))
    p1 = tmp_path / "a.bsgd"
    p2 = tmp_path / "b.bsgd"
    write_array(p1, arr)
    write_array(p2, arr)
    assert p1.read_bytes() == p2.read_bytes()
