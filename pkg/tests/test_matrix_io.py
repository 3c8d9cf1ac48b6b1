import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tnormloss.matrix_io import (
    MatrixFormatError,
    decode_pmat,
    encode_pmat,
    format_csv,
    parse_csv,
    read_matrix,
    write_matrix,
)
from tnormloss.validation import ShapeMismatchError, check_prediction_matrix


def test_pmat_layout():
    m = np.array([[0.25, 0.5, 1.0], [0.0, 0.75, 0.125]], dtype=np.float32)
    data = encode_pmat(m)
    assert data[:4] == b"PMAT"
    assert struct.unpack("<II", data[4:12]) == (2, 3)
    assert struct.unpack("<6f", data[12:]) == (0.25, 0.5, 1.0, 0.0, 0.75, 0.125)
    np.testing.assert_array_equal(decode_pmat(data), m)


@given(arrays(np.float32, st.tuples(st.integers(0, 6), st.integers(0, 6)), elements=st.floats(0, 1, width=32)))
def test_pmat_round_trip(m):
    np.testing.assert_array_equal(decode_pmat(encode_pmat(m)), m)


@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 5)), elements=st.floats(0, 1)))
def test_csv_round_trip_double(m):
    np.testing.assert_array_equal(parse_csv(format_csv(m)), m)


@given(arrays(np.float32, st.tuples(st.integers(1, 5), st.integers(1, 5)), elements=st.floats(0, 1, width=32)))
def test_csv_round_trip_single(m):
    np.testing.assert_array_equal(parse_csv(format_csv(m)).astype(np.float32), m)


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_csv_negative_zero_printed_as_zero(dtype):
    assert format_csv(np.array([[-0.0, -0.5]], dtype=dtype)) == "0.0,-0.5\n"


@pytest.mark.parametrize(
    "data",
    [b"PMA", b"XXXX" + struct.pack("<II", 1, 1) + b"\0" * 4, b"PMAT" + struct.pack("<II", 2, 2) + b"\0" * 4],
)
def test_pmat_errors(data):
    with pytest.raises(MatrixFormatError):
        decode_pmat(data)


@pytest.mark.parametrize("text", ["", "0.1,0.2\n0.3\n", "0.1,abc\n"])
def test_csv_errors(text):
    with pytest.raises(MatrixFormatError):
        parse_csv(text)


def test_read_write_detects_format(tmp_path):
    m = np.array([[0.5, 0.25]], dtype=np.float32)
    write_matrix(tmp_path / "g.pmat", m)
    write_matrix(tmp_path / "g.csv", m)
    assert (tmp_path / "g.pmat").read_bytes()[:4] == b"PMAT"
    assert (tmp_path / "g.csv").read_text() == "0.5,0.25\n"
    np.testing.assert_array_equal(read_matrix(tmp_path / "g.pmat"), m)
    np.testing.assert_array_equal(read_matrix(tmp_path / "g.csv"), m)


def test_check_prediction_matrix_dtypes():
    assert check_prediction_matrix(np.zeros((2, 3)), 3).dtype == np.float64
    assert check_prediction_matrix(np.zeros((2, 3), dtype=np.float32), 3).dtype == np.float32
    assert check_prediction_matrix(np.zeros((2, 3), dtype=np.int64), 3).dtype == np.float32
    assert check_prediction_matrix(np.zeros((0, 3)), 3).shape == (0, 3)
    with pytest.raises(ShapeMismatchError):
        check_prediction_matrix(np.zeros((2, 2)), 3)
    with pytest.raises(ValueError):
        check_prediction_matrix(np.array([[np.inf, 0, 0]]), 3)
    with pytest.raises(ValueError):
        check_prediction_matrix(np.zeros(3), 3)
