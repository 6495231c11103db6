"""Array conventions, seeded randomness and the on-disk formats.

Images are 2D ``complex128`` arrays of shape ``(H, W)``. Multi-coil data
(k-space stacks, sensitivity maps) are ``(C, H, W)`` arrays. Sampling masks
carry their acquisition metadata in :class:`SamplingMask`.

Disk formats
------------
``<stem>.hdr`` / ``<stem>.cpx``
    ASCII header ``CPX1\\n<ncoils> <height> <width>\\n`` followed by raw
    little-endian float32 data, interleaved real/imag, row-major, coil-major.
``<stem>.msk``
    ASCII header ``MSK1\\n<height> <width> <accel> <center_lines>\\n``
    followed by ``height * width`` bytes, each 0 or 1.
"""
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CPX_MAGIC = "CPX1"
MSK_MAGIC = "MSK1"
SMAP_NORM_TOL = 1e-6


class FormatError(ValueError):
    """Raised when a file on disk does not follow the expected layout."""


def as_image(x):
    """Return ``x`` as a finite 2D complex128 array."""
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim != 2:
        raise ValueError(f"expected a 2D image, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("image contains non-finite values")
    return x


def as_stack(x):
    """Return ``x`` as a ``(C, H, W)`` complex128 stack (2D input gets C=1)."""
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3:
        raise ValueError(f"expected (C, H, W) data, got shape {x.shape}")
    return x


def check_smaps(smaps, atol=SMAP_NORM_TOL):
    """Validate coil sensitivities: sum of squared magnitudes is 1 per pixel."""
    smaps = as_stack(smaps)
    ssq = np.sum(np.abs(smaps) ** 2, axis=0)
    err = np.max(np.abs(ssq - 1.0))
    if err > atol:
        raise ValueError(f"coil maps not normalized (max deviation {err:.3g})")
    return smaps


def normalize_smaps(smaps):
    """Scale raw coil profiles so that ``sum_c |S_c|^2 == 1`` at every pixel."""
    smaps = as_stack(smaps)
    rss = np.sqrt(np.sum(np.abs(smaps) ** 2, axis=0))
    return smaps / rss


@dataclass(frozen=True)
class SamplingMask:
    """Binary Cartesian sampling pattern.

    Phase-encode lines are columns: each column of ``grid`` is either all
    zeros or all ones.

    Attributes:
        grid (ndarray): ``(H, W)`` uint8 array of 0/1.
        accel (float): nominal acceleration factor.
        center_lines (int): number of fully sampled central columns.
    """

    grid: np.ndarray
    accel: float = 1.0
    center_lines: int = 0

    def __post_init__(self):
        grid = np.ascontiguousarray(self.grid, dtype=np.uint8)
        if grid.ndim != 2:
            raise ValueError(f"mask grid must be 2D, got shape {grid.shape}")
        if np.any(grid > 1):
            raise ValueError("mask grid must contain only 0 and 1")
        if np.any(grid != grid[:1]):
            raise ValueError("mask must be constant along each column")
        if int(grid[0].sum()) < self.center_lines:
            raise ValueError("fewer sampled columns than center_lines")
        grid.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "accel", float(self.accel))
        object.__setattr__(self, "center_lines", int(self.center_lines))

    @classmethod
    def from_columns(cls, columns, height, accel=1.0, center_lines=0):
        """Replicate a 1D column pattern down ``height`` rows."""
        columns = np.asarray(columns, dtype=np.uint8)
        return cls(np.tile(columns, (height, 1)), accel, center_lines)

    @property
    def shape(self):
        return self.grid.shape

    @property
    def columns(self):
        """The 1D phase-encode pattern."""
        return self.grid[0]

    @property
    def n_sampled(self):
        return int(self.grid[0].sum())

    def __eq__(self, other):
        if not isinstance(other, SamplingMask):
            return NotImplemented
        return (
            self.accel == other.accel
            and self.center_lines == other.center_lines
            and np.array_equal(self.grid, other.grid)
        )

    def __hash__(self):
        return hash((self.grid.tobytes(), self.grid.shape, self.accel, self.center_lines))


def make_rng(seed, *keys):
    """Seeded generator; extra integer ``keys`` derive independent substreams.

    ``make_rng(seed, 1, i)`` gives the stream for sample ``i`` regardless of
    how many other samples are drawn or in which order.
    """
    return np.random.default_rng([int(seed), *map(int, keys)])


def _atomic_write(path, data):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_bytes_atomic(path, data):
    """Write ``data`` via a temporary file and rename."""
    try:
        _atomic_write(path, data)
    except OSError as e:
        raise OSError(f"failed to write {path}: {e}") from e


def write_text_atomic(path, text):
    write_bytes_atomic(path, text.encode("utf-8"))


def write_complex(path_stem, data):
    """Write an image or a coil stack as ``<stem>.hdr`` + ``<stem>.cpx``."""
    stack = as_stack(data)
    nc, h, w = stack.shape
    header = f"{CPX_MAGIC}\n{nc} {h} {w}\n"
    payload = np.ascontiguousarray(stack, dtype="<c8").tobytes()
    stem = Path(path_stem)
    write_text_atomic(stem.with_name(stem.name + ".hdr"), header)
    write_bytes_atomic(stem.with_name(stem.name + ".cpx"), payload)


def read_complex(path_stem):
    """Read a ``CPX1`` pair back as a ``(C, H, W)`` complex128 array."""
    stem = Path(path_stem)
    hdr_path = stem.with_name(stem.name + ".hdr")
    cpx_path = stem.with_name(stem.name + ".cpx")
    try:
        lines = hdr_path.read_text().splitlines()
        raw = cpx_path.read_bytes()
    except OSError as e:
        raise OSError(f"failed to read {stem}: {e}") from e
    if len(lines) < 2 or lines[0] != CPX_MAGIC:
        raise FormatError(f"{hdr_path}: missing {CPX_MAGIC} magic")
    try:
        nc, h, w = (int(v) for v in lines[1].split())
    except ValueError:
        raise FormatError(f"{hdr_path}: malformed dims line {lines[1]!r}") from None
    if min(nc, h, w) < 1:
        raise FormatError(f"{hdr_path}: non-positive dims")
    expected = nc * h * w * 8
    if len(raw) != expected:
        raise FormatError(f"{cpx_path}: expected {expected} bytes for {nc}x{h}x{w}, got {len(raw)}")
    return np.frombuffer(raw, dtype="<c8").astype(np.complex128).reshape(nc, h, w)


def _accel_str(accel):
    return f"{accel:g}"


def write_mask(path, mask):
    """Write a :class:`SamplingMask` to ``path`` (conventionally ``*.msk``)."""
    h, w = mask.shape
    header = f"{MSK_MAGIC}\n{h} {w} {_accel_str(mask.accel)} {mask.center_lines}\n"
    write_bytes_atomic(path, header.encode("ascii") + mask.grid.tobytes())


def read_mask(path):
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise OSError(f"failed to read {path}: {e}") from e
    parts = raw.split(b"\n", 2)
    if len(parts) < 3 or parts[0] != MSK_MAGIC.encode():
        raise FormatError(f"{path}: missing {MSK_MAGIC} magic")
    try:
        h, w, accel, center = parts[1].decode("ascii").split()
        h, w, accel, center = int(h), int(w), float(accel), int(center)
    except ValueError:
        raise FormatError(f"{path}: malformed mask header") from None
    body = parts[2]
    if len(body) != h * w:
        raise FormatError(f"{path}: expected {h * w} mask bytes, got {len(body)}")
    grid = np.frombuffer(body, dtype=np.uint8).reshape(h, w)
    if np.any(grid > 1):
        raise FormatError(f"{path}: mask byte outside {{0, 1}}")
    return SamplingMask(grid.copy(), accel, center)
