import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from londn.data_model import (
    FormatError,
    SamplingMask,
    check_smaps,
    make_rng,
    read_complex,
    read_mask,
    write_complex,
    write_mask,
)


def test_write_complex_single_pixel_bytes(tmp_path):
    write_complex(tmp_path / "a", np.array([[1 + 2j]]))
    assert (tmp_path / "a.hdr").read_bytes() == b"CPX1\n1 1 1\n"
    assert (tmp_path / "a.cpx").read_bytes() == struct.pack("<ff", 1.0, 2.0)


def test_write_complex_two_coil_bytes(tmp_path):
    write_complex(tmp_path / "k", np.array([[[0]], [[1j]]]))
    assert (tmp_path / "k.hdr").read_text() == "CPX1\n2 1 1\n"
    assert (tmp_path / "k.cpx").read_bytes() == struct.pack("<ffff", 0, 0, 0, 1)


def test_complex_roundtrip(tmp_path, rng):
    x = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    write_complex(tmp_path / "x", x)
    y = read_complex(tmp_path / "x")
    assert y.shape == (1, 4, 4)
    np.testing.assert_allclose(y[0], x, rtol=1e-6, atol=1e-7)


def test_read_complex_rejects_bad_header(tmp_path):
    (tmp_path / "b.hdr").write_text("CPX2\n1 1 1\n")
    (tmp_path / "b.cpx").write_bytes(b"\0" * 8)
    with pytest.raises(FormatError):
        read_complex(tmp_path / "b")


def test_read_complex_rejects_size_mismatch(tmp_path):
    (tmp_path / "b.hdr").write_text("CPX1\n1 2 2\n")
    (tmp_path / "b.cpx").write_bytes(b"\0" * 8)
    with pytest.raises(FormatError, match="expected 32 bytes"):
        read_complex(tmp_path / "b")


def test_read_complex_missing_file_names_path(tmp_path):
    with pytest.raises(OSError, match="nope"):
        read_complex(tmp_path / "nope")


def test_mask_all_ones_bytes(tmp_path):
    write_mask(tmp_path / "m.msk", SamplingMask(np.ones((2, 2), dtype=np.uint8), 1, 0))
    raw = (tmp_path / "m.msk").read_bytes()
    assert raw == b"MSK1\n2 2 1 0\n" + bytes([1, 1, 1, 1])


def test_mask_column_pattern_bytes(tmp_path):
    write_mask(tmp_path / "m.msk", SamplingMask.from_columns([1, 0], 2, 2, 1))
    assert (tmp_path / "m.msk").read_bytes().endswith(bytes([1, 0, 1, 0]))


def test_mask_rejects_bad_byte(tmp_path):
    (tmp_path / "m.msk").write_bytes(b"MSK1\n1 2 2 0\n" + bytes([1, 2]))
    with pytest.raises(FormatError, match="outside"):
        read_mask(tmp_path / "m.msk")


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 6), st.integers(1, 9), st.integers(0, 2**32 - 1))
def test_mask_roundtrip(tmp_path_factory, h, w, seed):
    rng = np.random.default_rng(seed)
    cols = rng.integers(0, 2, w)
    mask = SamplingMask.from_columns(cols, h, accel=4, center_lines=min(1, int(cols.sum())))
    path = tmp_path_factory.mktemp("m") / "m.msk"
    write_mask(path, mask)
    assert read_mask(path) == mask


def test_mask_invariants():
    with pytest.raises(ValueError, match="column"):
        SamplingMask(np.array([[1, 0], [0, 0]]))
    with pytest.raises(ValueError, match="center_lines"):
        SamplingMask.from_columns([1, 0, 0], 2, 4, center_lines=2)


def test_smaps_check():
    ok = np.ones((1, 3, 3)) * np.exp(1j * 0.3)
    check_smaps(ok)
    with pytest.raises(ValueError):
        check_smaps(2 * ok)


def test_rng_reproducible():
    a = make_rng(5, 1, 2).standard_normal(8)
    b = make_rng(5, 1, 2).standard_normal(8)
    c = make_rng(5, 1, 3).standard_normal(8)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
