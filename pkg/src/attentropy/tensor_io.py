"""File I/O for the numeric artifacts shared across the toolkit.

Tensors are stored as NPY v1.0 files restricted to little-endian float32,
C order. Grayscale images and segmentation masks are stored as binary PGM
(P5, maxval 255). Masks additionally restrict pixel values to
{0 = background, 1 = object, 255 = ignore}.
"""

from __future__ import annotations

import ast
import struct
from pathlib import Path

import numpy as np

MASK_BACKGROUND = 0
MASK_OBJECT = 1
MASK_IGNORE = 255

_NPY_MAGIC = b"\x93NUMPY"
_NPY_VERSION = b"\x01\x00"


class NpyFormatError(ValueError):
    """A NPY file violated the supported subset; `field` names the offender."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class PgmFormatError(ValueError):
    """A PGM file violated the supported subset; `field` names the offender."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def save_tensor(tensor: np.ndarray, path: str | Path) -> None:
    """Write `tensor` as NPY v1.0 (<f4, C order). Round-trips bit-exactly.

    Values must be finite after the cast to float32; at least one dimension
    is required (scalars are not tensors here).
    """
    if np.asarray(tensor).ndim == 0:
        raise NpyFormatError("shape", "tensors need at least one dimension")
    arr = np.ascontiguousarray(tensor, dtype=np.float32)
    if arr.size and not np.all(np.isfinite(arr)):
        raise NpyFormatError("data", "non-finite value in tensor")
    header = "{'descr': '<f4', 'fortran_order': False, 'shape': %s, }" % repr(
        arr.shape
    )
    pad = (-(len(_NPY_MAGIC) + len(_NPY_VERSION) + 2 + len(header) + 1)) % 64
    header = header + " " * pad + "\n"
    with open(path, "wb") as fh:
        fh.write(_NPY_MAGIC)
        fh.write(_NPY_VERSION)
        fh.write(struct.pack("<H", len(header)))
        fh.write(header.encode("latin1"))
        fh.write(arr.tobytes())


def load_tensor(path: str | Path) -> np.ndarray:
    """Read an NPY v1.0 <f4 file written by `save_tensor` (or numpy itself)."""
    raw = Path(path).read_bytes()
    if raw[: len(_NPY_MAGIC)] != _NPY_MAGIC:
        raise NpyFormatError("magic", "not an NPY file")
    pos = len(_NPY_MAGIC)
    version = raw[pos : pos + 2]
    if version != _NPY_VERSION:
        raise NpyFormatError("version", f"unsupported NPY version {version!r}")
    pos += 2
    if len(raw) < pos + 2:
        raise NpyFormatError("header", "truncated header length")
    (header_len,) = struct.unpack("<H", raw[pos : pos + 2])
    pos += 2
    header_bytes = raw[pos : pos + header_len]
    if len(header_bytes) != header_len:
        raise NpyFormatError("header", "truncated header")
    pos += header_len
    try:
        header = ast.literal_eval(header_bytes.decode("latin1"))
    except (ValueError, SyntaxError) as exc:
        raise NpyFormatError("header", f"malformed header dict: {exc}") from exc
    if not isinstance(header, dict):
        raise NpyFormatError("header", "header is not a dict")
    descr = header.get("descr")
    if descr != "<f4":
        raise NpyFormatError(
            "descr", f"unsupported dtype {descr!r} (only '<f4' is accepted)"
        )
    if header.get("fortran_order") is not False:
        raise NpyFormatError("fortran_order", "only C-order arrays are supported")
    shape = header.get("shape")
    if (
        not isinstance(shape, tuple)
        or len(shape) < 1
        or not all(isinstance(s, int) and s >= 0 for s in shape)
    ):
        raise NpyFormatError("shape", f"malformed shape {shape!r}")
    count = int(np.prod(shape, dtype=np.int64))
    payload = raw[pos:]
    if len(payload) != 4 * count:
        raise NpyFormatError(
            "payload",
            f"truncated payload: expected {4 * count} bytes, got {len(payload)}",
        )
    arr = np.frombuffer(payload, dtype="<f4").reshape(shape)
    if count and not np.all(np.isfinite(arr)):
        raise NpyFormatError("data", "non-finite value in tensor")
    return arr.copy()


def _write_pgm(pixels: np.ndarray, path: str | Path) -> None:
    h, w = pixels.shape
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (w, h))
        fh.write(pixels.tobytes())


def _read_pgm(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:2] != b"P5":
        raise PgmFormatError("magic", "not a P5 PGM file")
    pos = 2
    tokens = []
    while len(tokens) < 3:
        if pos >= len(raw):
            raise PgmFormatError("header", "truncated header")
        ch = raw[pos : pos + 1]
        if ch in b" \t\r\n":
            pos += 1
        elif ch == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
        else:
            start = pos
            while pos < len(raw) and raw[pos : pos + 1] not in b" \t\r\n":
                pos += 1
            tok = raw[start:pos]
            if not tok.isdigit():
                raise PgmFormatError("header", f"non-numeric token {tok!r}")
            tokens.append(int(tok))
    pos += 1  # single whitespace byte after maxval
    w, h, maxval = tokens
    if w < 1 or h < 1:
        raise PgmFormatError("dimensions", f"bad dimensions {w}x{h}")
    if maxval != 255:
        raise PgmFormatError("maxval", f"maxval must be 255, got {maxval}")
    payload = raw[pos:]
    if len(payload) != w * h:
        raise PgmFormatError(
            "payload", f"expected {w * h} pixel bytes, got {len(payload)}"
        )
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w).copy()


def save_gray(image: np.ndarray, path: str | Path) -> None:
    """Write a uint8 grayscale image (h, w) as binary PGM."""
    img = np.ascontiguousarray(image, dtype=np.uint8)
    if img.ndim != 2:
        raise PgmFormatError("dimensions", "image must be 2-D")
    _write_pgm(img, path)


def load_gray(path: str | Path) -> np.ndarray:
    """Read a binary PGM into a uint8 array of shape (h, w)."""
    return _read_pgm(path)


def as_mask(values: np.ndarray) -> np.ndarray:
    """Validate and return a {0, 1, 255} uint8 mask."""
    mask = np.ascontiguousarray(values, dtype=np.uint8)
    if mask.ndim != 2:
        raise PgmFormatError("dimensions", "mask must be 2-D")
    bad = mask[(mask != MASK_BACKGROUND) & (mask != MASK_OBJECT) & (mask != MASK_IGNORE)]
    if bad.size:
        raise PgmFormatError("value", f"illegal mask value {int(bad.flat[0])}")
    return mask


def save_mask(mask: np.ndarray, path: str | Path) -> None:
    """Write a {0, 1, 255} mask as binary PGM."""
    _write_pgm(as_mask(mask), path)


def load_mask(path: str | Path) -> np.ndarray:
    """Read a binary PGM and validate the {0, 1, 255} mask convention."""
    return as_mask(_read_pgm(path))
