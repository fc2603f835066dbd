"""Binary PGM (P5) reading and writing, 8- and 16-bit grayscale.

PGM is the mandatory dependency-free interchange format; PNG grayscale is
supported behind an optional Pillow import.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np


def _read_token(stream: io.BufferedReader) -> bytes:
    """Next whitespace-delimited header token, skipping '#' comments."""
    token = b""
    while True:
        ch = stream.read(1)
        if not ch:
            if token:
                return token
            raise ValueError("unexpected end of PGM header")
        if ch == b"#":
            stream.readline()
            continue
        if ch.isspace():
            if token:
                return token
            continue
        token += ch


def read_pgm(path) -> tuple[np.ndarray, int]:
    """Read a binary PGM; returns (levels array, maxval).

    8-bit files (maxval < 256) yield uint8, larger maxvals yield uint16
    with big-endian sample order per the PNM convention.
    """
    with open(path, "rb") as f:
        magic = _read_token(f)
        if magic != b"P5":
            raise ValueError(f"{path}: not a binary PGM (magic {magic!r})")
        width = int(_read_token(f))
        height = int(_read_token(f))
        maxval = int(_read_token(f))
        if width < 1 or height < 1:
            raise ValueError(f"{path}: invalid dimensions {width}x{height}")
        if not 0 < maxval < 65536:
            raise ValueError(f"{path}: invalid maxval {maxval}")
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        count = width * height
        raw = f.read(count * dtype.itemsize)
        if len(raw) != count * dtype.itemsize:
            raise ValueError(f"{path}: truncated pixel data")
        levels = np.frombuffer(raw, dtype=dtype).reshape(height, width)
    if levels.max(initial=0) > maxval:
        raise ValueError(f"{path}: sample exceeds declared maxval {maxval}")
    return levels.astype(np.uint16 if maxval > 255 else np.uint8), maxval


def write_pgm(path, levels: np.ndarray, maxval: int | None = None) -> None:
    """Write a binary PGM with the conventional maxval for the dtype."""
    levels = np.asarray(levels)
    if levels.ndim != 2:
        raise ValueError(f"PGM data must be 2-D, got shape {levels.shape}")
    if maxval is None:
        maxval = 255 if levels.dtype == np.uint8 else 65535
    if not 0 < maxval < 65536:
        raise ValueError(f"invalid maxval {maxval}")
    if levels.min(initial=0) < 0 or levels.max(initial=0) > maxval:
        raise ValueError("levels out of range for the declared maxval")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    header = f"P5\n{levels.shape[1]} {levels.shape[0]}\n{maxval}\n".encode("ascii")
    with open(path, "wb") as f:
        f.write(header)
        f.write(levels.astype(dtype).tobytes())


def _read_png(path) -> tuple[np.ndarray, int]:
    try:
        from PIL import Image
    except ImportError as exc:  # pragma: no cover - depends on environment
        raise ValueError(
            f"{path}: PNG support requires Pillow (install the 'png' extra)"
        ) from exc
    with Image.open(path) as img:
        if img.mode == "I;16":
            return np.asarray(img, dtype=np.uint16), 65535
        if img.mode in ("L", "1"):
            return np.asarray(img.convert("L"), dtype=np.uint8), 255
        if img.mode == "I":
            arr = np.asarray(img, dtype=np.int64)
            if arr.min() < 0 or arr.max() > 65535:
                raise ValueError(f"{path}: integer PNG out of 16-bit range")
            return arr.astype(np.uint16), 65535
        raise ValueError(f"{path}: unsupported PNG mode {img.mode!r} (need grayscale)")


def read_gray_image(path) -> tuple[np.ndarray, int]:
    """Read a grayscale image by extension; returns (levels, maxval)."""
    suffix = Path(path).suffix.lower()
    if suffix == ".pgm":
        return read_pgm(path)
    if suffix == ".png":
        return _read_png(path)
    raise ValueError(f"{path}: unsupported image format {suffix!r} (need .pgm or .png)")
