"""Binary PPM (P6) and PGM (P5) readers and writers, 8-bit maxval."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ShapeError


def _write_netpbm(path, magic: bytes, arr: np.ndarray) -> None:
    h, w = arr.shape[:2]
    with open(path, "wb") as fh:
        fh.write(magic + b"\n%d %d\n255\n" % (w, h))
        fh.write(arr.astype(np.uint8).tobytes())


def write_ppm(path, rgb: np.ndarray) -> None:
    """Write an H x W x 3 uint8 (or [0,1] float) array as binary P6."""

    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ShapeError(f"write_ppm: need HxWx3, got {rgb.shape}")
    if rgb.dtype != np.uint8:
        rgb = np.clip(np.rint(rgb * 255.0), 0, 255).astype(np.uint8)
    _write_netpbm(path, b"P6", rgb)


def write_pgm(path, gray: np.ndarray) -> None:
    """Write an H x W uint8 array as binary P5."""

    if gray.ndim != 2:
        raise ShapeError(f"write_pgm: need HxW, got {gray.shape}")
    _write_netpbm(path, b"P5", gray.astype(np.uint8))


def _read_header(blob: bytes, magic: bytes, path) -> tuple[int, int, int]:
    if blob[:2] != magic:
        raise ShapeError(f"{path}: expected {magic.decode()} file, got {blob[:2]!r}")
    fields: list[int] = []
    pos = 2
    while len(fields) < 3:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if blob[pos : pos + 1] == b"#":  # comment line
            while blob[pos : pos + 1] not in (b"\n", b""):
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        fields.append(int(blob[start:pos]))
    pos += 1  # single whitespace after maxval
    w, h, maxval = fields
    if maxval != 255:
        raise ShapeError(f"{path}: only 8-bit maxval supported, got {maxval}")
    return w, h, pos


def read_ppm(path) -> np.ndarray:
    """Read binary P6 into an H x W x 3 uint8 array."""

    blob = Path(path).read_bytes()
    w, h, pos = _read_header(blob, b"P6", path)
    return np.frombuffer(blob, np.uint8, count=h * w * 3, offset=pos).reshape(h, w, 3).copy()


def read_pgm(path) -> np.ndarray:
    """Read binary P5 into an H x W uint8 array."""

    blob = Path(path).read_bytes()
    w, h, pos = _read_header(blob, b"P5", path)
    return np.frombuffer(blob, np.uint8, count=h * w, offset=pos).reshape(h, w).copy()


def export_pgm(values: np.ndarray, path, upscale: int = 1) -> None:
    """Min-max normalize to [0, 255], nearest-neighbor upscale, write P5.

    A constant map has no contrast to normalize and is written all-zero.
    """

    if upscale < 1:
        raise ShapeError(f"export_pgm: upscale must be >= 1, got {upscale}")
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ShapeError(f"export_pgm: need a 2-d map, got {values.shape}")
    lo, hi = values.min(), values.max()
    if hi > lo:
        scaled = np.rint((values - lo) / (hi - lo) * 255.0)
    else:
        scaled = np.zeros_like(values)
    big = np.repeat(np.repeat(scaled, upscale, axis=0), upscale, axis=1)
    write_pgm(path, big.astype(np.uint8))
