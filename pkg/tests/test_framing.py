import numpy as np
import pytest
from hypothesis import given, strategies as st

from lwecontrol import framing


@given(st.integers(1, 4), st.integers(1, 6), st.data())
def test_matrix_roundtrip(rows, N, data):
    q = 10**11
    vals = data.draw(st.lists(st.integers(-(q // 2), q // 2 - 1), min_size=rows * (N + 1), max_size=rows * (N + 1)))
    body = np.array(vals, dtype=object).reshape(rows, N + 1)
    blob = framing.pack_matrix(framing.CIPHERTEXT_MAGIC, body, 10, 11, N)
    header, out, end = framing.unpack_matrix(blob, expect_magic=framing.CIPHERTEXT_MAGIC)
    assert end == len(blob)
    assert (header.base, header.d, header.N, header.rows, header.q) == (10, 11, N, rows, q)
    assert out.tolist() == body.tolist()


def test_wide_values_roundtrip():
    body = np.array([[10**30, -(10**30)]], dtype=object)
    blob = framing.pack_matrix(framing.KEY_MAGIC, body, 10, 31, 1)
    _, out, _ = framing.unpack_matrix(blob)
    assert out.tolist() == body.tolist()


def test_wrong_magic_rejected():
    blob = framing.pack_matrix(framing.KEY_MAGIC, np.array([[1, 2]], dtype=object), 10, 2, 1)
    with pytest.raises(framing.FrameError):
        framing.unpack_matrix(blob, expect_magic=framing.CIPHERTEXT_MAGIC)


def test_truncated_frame_rejected():
    blob = framing.pack_matrix(framing.CIPHERTEXT_MAGIC, np.array([[1, 2]], dtype=object), 10, 2, 1)
    for cut in (3, len(blob) - 1):
        with pytest.raises(framing.FrameError):
            framing.unpack_matrix(blob[:cut])


def test_bad_version_rejected():
    blob = bytearray(framing.pack_matrix(framing.CIPHERTEXT_MAGIC, np.array([[1, 2]], dtype=object), 10, 2, 1))
    blob[4] = 99
    with pytest.raises(framing.FrameError):
        framing.unpack_matrix(bytes(blob))


def test_width_must_match_N():
    with pytest.raises((framing.FrameError, ValueError)):
        framing.pack_matrix(framing.CIPHERTEXT_MAGIC, np.array([[1, 2, 3]], dtype=object), 10, 2, 1)


def test_gsw_header_roundtrip():
    blob = framing.pack_gsw_header(2, 3) + b"rest"
    m, n, off = framing.unpack_gsw_header(blob)
    assert (m, n) == (2, 3) and blob[off:] == b"rest"
