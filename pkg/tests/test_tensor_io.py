"""Tensor/NPY and PGM serialization: round trips, byte layout, rejection."""

import io
import tempfile
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from attentropy.tensor_io import (
    NpyFormatError,
    PgmFormatError,
    as_mask,
    load_gray,
    load_mask,
    load_tensor,
    save_gray,
    save_mask,
    save_tensor,
)


def test_round_trip_2x2(tmp_path):
    t = np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32)
    save_tensor(t, tmp_path / "t.npy")
    back = load_tensor(tmp_path / "t.npy")
    assert back.shape == (2, 2)
    np.testing.assert_array_equal(back, t)


def test_round_trip_single_element(tmp_path):
    save_tensor(np.array([0.0], dtype=np.float32), tmp_path / "t.npy")
    back = load_tensor(tmp_path / "t.npy")
    assert back.shape == (1,) and back[0] == 0.0


def test_round_trip_empty_dim(tmp_path):
    save_tensor(np.zeros((0,), dtype=np.float32), tmp_path / "t.npy")
    back = load_tensor(tmp_path / "t.npy")
    assert back.shape == (0,)


def test_bytes_match_reference_writer(tmp_path):
    """The hand-rolled writer must be byte-identical to numpy's own NPY v1.0."""
    t = np.arange(24, dtype=np.float32).reshape(2, 3, 4)
    save_tensor(t, tmp_path / "ours.npy")
    buf = io.BytesIO()
    np.save(buf, t)
    assert (tmp_path / "ours.npy").read_bytes() == buf.getvalue()


def test_loads_files_written_by_numpy(tmp_path):
    t = np.linspace(-3, 3, 30, dtype=np.float32).reshape(5, 6)
    np.save(tmp_path / "ref.npy", t)
    np.testing.assert_array_equal(load_tensor(tmp_path / "ref.npy"), t)


@settings(max_examples=60, deadline=None)
@given(
    shape=st.lists(st.integers(0, 16), min_size=1, max_size=4).map(tuple),
    seed=st.integers(0, 2**31),
)
def test_round_trip_random_shapes(shape, seed):
    rng = np.random.default_rng(seed)
    t = rng.normal(size=shape).astype(np.float32)
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "t.npy"
        save_tensor(t, path)
        back = load_tensor(path)
    assert back.shape == t.shape
    np.testing.assert_array_equal(back, t)


def test_rejects_float64_file(tmp_path):
    np.save(tmp_path / "d.npy", np.zeros((2, 2), dtype=np.float64))
    with pytest.raises(NpyFormatError, match="unsupported dtype") as exc:
        load_tensor(tmp_path / "d.npy")
    assert exc.value.field == "descr"


def test_rejects_bad_magic(tmp_path):
    (tmp_path / "x.npy").write_bytes(b"not an npy file at all")
    with pytest.raises(NpyFormatError) as exc:
        load_tensor(tmp_path / "x.npy")
    assert exc.value.field == "magic"


def test_rejects_truncated_payload(tmp_path):
    t = np.ones((4, 4), dtype=np.float32)
    save_tensor(t, tmp_path / "t.npy")
    raw = (tmp_path / "t.npy").read_bytes()
    (tmp_path / "cut.npy").write_bytes(raw[:-5])
    with pytest.raises(NpyFormatError) as exc:
        load_tensor(tmp_path / "cut.npy")
    assert exc.value.field == "payload"


def test_rejects_fortran_order(tmp_path):
    t = np.arange(6, dtype=np.float32).reshape(2, 3)
    np.save(tmp_path / "f.npy", np.asfortranarray(t))
    with pytest.raises(NpyFormatError) as exc:
        load_tensor(tmp_path / "f.npy")
    assert exc.value.field == "fortran_order"


def test_rejects_nan_on_save(tmp_path):
    with pytest.raises(NpyFormatError) as exc:
        save_tensor(np.array([np.nan], dtype=np.float32), tmp_path / "t.npy")
    assert exc.value.field == "data"


def test_rejects_zero_dim(tmp_path):
    with pytest.raises(NpyFormatError):
        save_tensor(np.float32(1.0), tmp_path / "t.npy")


def test_save_casts_float64_input(tmp_path):
    save_tensor(np.array([[1.5, 2.5]]), tmp_path / "t.npy")
    back = load_tensor(tmp_path / "t.npy")
    assert back.dtype == np.float32


# --- PGM images and masks --------------------------------------------------


def test_gray_round_trip(tmp_path):
    img = np.arange(42, dtype=np.uint8).reshape(6, 7)
    save_gray(img, tmp_path / "g.pgm")
    np.testing.assert_array_equal(load_gray(tmp_path / "g.pgm"), img)


@settings(max_examples=40, deadline=None)
@given(
    img=hnp.arrays(
        np.uint8, hnp.array_shapes(min_dims=2, max_dims=2, min_side=1, max_side=16)
    )
)
def test_gray_round_trip_random(img):
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "g.pgm"
        save_gray(img, path)
        back = load_gray(path)
    np.testing.assert_array_equal(back, img)


def test_mask_round_trip(tmp_path):
    mask = np.array([[0, 1], [255, 0]], dtype=np.uint8)
    save_mask(mask, tmp_path / "m.pgm")
    np.testing.assert_array_equal(load_mask(tmp_path / "m.pgm"), mask)


def test_mask_round_trip_1x1(tmp_path):
    mask = np.array([[1]], dtype=np.uint8)
    save_mask(mask, tmp_path / "m.pgm")
    np.testing.assert_array_equal(load_mask(tmp_path / "m.pgm"), mask)


def test_mask_rejects_illegal_value(tmp_path):
    img = np.array([[0, 7]], dtype=np.uint8)
    save_gray(img, tmp_path / "bad.pgm")
    with pytest.raises(PgmFormatError, match="illegal mask value 7"):
        load_mask(tmp_path / "bad.pgm")


def test_as_mask_rejects_illegal_value():
    with pytest.raises(PgmFormatError, match="illegal mask value 2"):
        as_mask(np.array([[2]], dtype=np.uint8))


def test_pgm_rejects_wrong_maxval(tmp_path):
    (tmp_path / "m.pgm").write_bytes(b"P5\n1 1\n127\n\x00")
    with pytest.raises(PgmFormatError) as exc:
        load_gray(tmp_path / "m.pgm")
    assert exc.value.field == "maxval"


def test_pgm_rejects_truncated_pixels(tmp_path):
    (tmp_path / "m.pgm").write_bytes(b"P5\n2 2\n255\n\x00\x01")
    with pytest.raises(PgmFormatError):
        load_gray(tmp_path / "m.pgm")


def test_pgm_reads_comment_headers(tmp_path):
    (tmp_path / "c.pgm").write_bytes(b"P5\n# a comment\n2 1\n255\n\x05\x06")
    np.testing.assert_array_equal(
        load_gray(tmp_path / "c.pgm"), np.array([[5, 6]], dtype=np.uint8)
    )
