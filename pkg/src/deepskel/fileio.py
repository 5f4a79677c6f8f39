"""On-disk formats: binary PGM masks/images, .f32map rasters, checkpoints.

Byte layouts are fixed:
  PGM      -- P5, maxval 255, binary masks use values 0/255.
  .f32map  -- magic "F32M", u32 width, u32 height (little-endian), then
              width*height float32 little-endian, row-major.
  checkpoint -- magic "FSDSCKPT", u32 version, u32 precision flag
              (0 = float32, 1 = float64), u32 entry count, then per entry:
              u32 name length + UTF-8 name, u32 ndim, ndim * u32 dims,
              raw little-endian values.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DataFormat, IOFailure

F32MAP_MAGIC = b"F32M"
CKPT_MAGIC = b"FSDSCKPT"
CKPT_VERSION = 1


def read_pgm(path) -> np.ndarray:
    """Read a binary (P5) PGM file into a uint8 array of shape (H, W)."""
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise IOFailure(f"cannot read {path}: {e}") from e
    if not data.startswith(b"P5"):
        raise DataFormat(f"{path}: not a binary PGM (missing P5 magic)")
    # Header tokens: magic, width, height, maxval; '#' comments allowed.
    tokens = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError as e:
        raise DataFormat(f"{path}: bad PGM header") from e
    if maxval != 255:
        raise DataFormat(f"{path}: unsupported maxval {maxval}")
    raster = data[pos:pos + width * height]
    if len(raster) != width * height:
        raise DataFormat(f"{path}: truncated PGM raster")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width)


def write_pgm(path, image: np.ndarray) -> None:
    """Write a 2-D uint8 array as binary PGM."""
    image = np.ascontiguousarray(image, dtype=np.uint8)
    if image.ndim != 2:
        raise DataFormat("PGM images must be 2-D")
    h, w = image.shape
    try:
        with open(path, "wb") as f:
            f.write(b"P5\n%d %d\n255\n" % (w, h))
            f.write(image.tobytes())
    except OSError as e:
        raise IOFailure(f"cannot write {path}: {e}") from e


def read_mask(path) -> np.ndarray:
    """Read a 0/255 PGM mask as a boolean array."""
    img = read_pgm(path)
    bad = np.setdiff1d(np.unique(img), [0, 255])
    if bad.size:
        raise DataFormat(f"{path}: mask values other than 0/255: {bad.tolist()}")
    return img > 0


def write_mask(path, mask: np.ndarray) -> None:
    """Write a boolean array as a 0/255 PGM mask."""
    write_pgm(path, np.where(np.asarray(mask, bool), 255, 0).astype(np.uint8))


def read_f32map(path) -> np.ndarray:
    """Read an .f32map raster into a float32 array of shape (H, W)."""
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise IOFailure(f"cannot read {path}: {e}") from e
    if data[:4] != F32MAP_MAGIC:
        raise DataFormat(f"{path}: bad f32map magic")
    width, height = struct.unpack("<II", data[4:12])
    expected = 12 + 4 * width * height
    if len(data) != expected:
        raise DataFormat(f"{path}: expected {expected} bytes, got {len(data)}")
    values = np.frombuffer(data, dtype="<f4", offset=12)
    return values.reshape(height, width).copy()


def write_f32map(path, values: np.ndarray) -> None:
    """Write a 2-D array as an .f32map raster."""
    values = np.ascontiguousarray(values, dtype="<f4")
    if values.ndim != 2:
        raise DataFormat("f32map rasters must be 2-D")
    h, w = values.shape
    try:
        with open(path, "wb") as f:
            f.write(F32MAP_MAGIC)
            f.write(struct.pack("<II", w, h))
            f.write(values.tobytes())
    except OSError as e:
        raise IOFailure(f"cannot write {path}: {e}") from e


def save_checkpoint(path, arrays: dict[str, np.ndarray], precision: str = "f32") -> None:
    """Save named arrays to a checkpoint file.

    `precision` selects the on-disk element type ("f32" or "f64"); entries
    are written in a fixed (sorted) order so identical states produce
    byte-identical files.
    """
    if precision not in ("f32", "f64"):
        raise DataFormat(f"unknown precision {precision!r}")
    dtype = "<f4" if precision == "f32" else "<f8"
    try:
        with open(path, "wb") as f:
            f.write(CKPT_MAGIC)
            f.write(struct.pack("<III", CKPT_VERSION,
                                0 if precision == "f32" else 1, len(arrays)))
            for name in sorted(arrays):
                arr = np.ascontiguousarray(arrays[name], dtype=dtype)
                encoded = name.encode("utf-8")
                f.write(struct.pack("<I", len(encoded)))
                f.write(encoded)
                f.write(struct.pack("<I", arr.ndim))
                f.write(struct.pack("<%dI" % arr.ndim, *arr.shape))
                f.write(arr.tobytes())
    except OSError as e:
        raise IOFailure(f"cannot write {path}: {e}") from e


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], str]:
    """Load a checkpoint file; returns (arrays, precision)."""
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise IOFailure(f"cannot read {path}: {e}") from e
    if data[:8] != CKPT_MAGIC:
        raise DataFormat(f"{path}: bad checkpoint magic")
    version, flag, count = struct.unpack("<III", data[8:20])
    if version != CKPT_VERSION:
        raise DataFormat(f"{path}: unsupported checkpoint version {version}")
    if flag not in (0, 1):
        raise DataFormat(f"{path}: bad precision flag {flag}")
    precision = "f32" if flag == 0 else "f64"
    dtype = np.dtype("<f4" if flag == 0 else "<f8")
    arrays: dict[str, np.ndarray] = {}
    pos = 20
    try:
        for _ in range(count):
            (nlen,) = struct.unpack_from("<I", data, pos)
            pos += 4
            name = data[pos:pos + nlen].decode("utf-8")
            pos += nlen
            (ndim,) = struct.unpack_from("<I", data, pos)
            pos += 4
            shape = struct.unpack_from("<%dI" % ndim, data, pos)
            pos += 4 * ndim
            size = int(np.prod(shape, dtype=np.int64)) if ndim else 1
            arr = np.frombuffer(data, dtype=dtype, count=size, offset=pos)
            pos += size * dtype.itemsize
            arrays[name] = arr.reshape(shape).copy()
    except (struct.error, ValueError) as e:
        raise DataFormat(f"{path}: truncated or corrupt checkpoint") from e
    if pos != len(data):
        raise DataFormat(f"{path}: trailing bytes in checkpoint")
    return arrays, precision
