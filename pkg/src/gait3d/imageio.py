"""Reading and writing grayscale frames and binary masks.

Frames travel as 8-bit grayscale PGM (P5) or PNG files. Masks are written
as PGM with foreground = 255.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import FormatError


def read_gray(path: str | Path) -> np.ndarray:
    """Load a frame as a (h, w) uint8 array.

    PGM is parsed natively; PNG goes through Pillow, converting color
    images with the standard 0.299/0.587/0.114 luminance weights.
    """
    path = Path(path)
    if path.suffix.lower() in (".pgm", ".ppm"):
        return _read_pgm(path)
    from PIL import Image

    with Image.open(path) as img:
        if img.mode != "L":
            img = img.convert("L")
        return np.asarray(img, dtype=np.uint8)


def write_gray(path: str | Path, frame: np.ndarray) -> None:
    """Write a (h, w) uint8 array; format chosen by file extension."""
    path = Path(path)
    frame = np.ascontiguousarray(frame, dtype=np.uint8)
    if frame.ndim != 2:
        raise FormatError(f"expected a 2-d grayscale array, got shape {frame.shape}")
    if path.suffix.lower() == ".pgm":
        _write_pgm(path, frame)
    else:
        from PIL import Image

        Image.fromarray(frame, mode="L").save(path)


def write_mask(path: str | Path, mask: np.ndarray) -> None:
    """Write a boolean mask with foreground = 255."""
    write_gray(path, np.where(mask, 255, 0).astype(np.uint8))


def read_mask(path: str | Path, threshold: int = 127) -> np.ndarray:
    """Load a mask image; pixels brighter than ``threshold`` are foreground."""
    return read_gray(path) > threshold


def _read_pgm(path: Path) -> np.ndarray:
    data = path.read_bytes()
    fields: list[int] = []
    pos = 2
    if data[:2] != b"P5":
        raise FormatError(f"{path}: not a binary PGM (missing P5 magic)")
    # header: width, height, maxval as whitespace-separated tokens, '#' comments
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise FormatError(f"{path}: truncated PGM header")
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        try:
            fields.append(int(data[start:pos]))
        except ValueError as exc:
            raise FormatError(f"{path}: bad PGM header token {data[start:pos]!r}") from exc
    pos += 1  # single whitespace after maxval
    width, height, maxval = fields
    if maxval != 255:
        raise FormatError(f"{path}: only 8-bit PGM supported (maxval {maxval})")
    pixels = np.frombuffer(data, dtype=np.uint8, offset=pos)
    if pixels.size < width * height:
        raise FormatError(f"{path}: expected {width * height} pixels, found {pixels.size}")
    return pixels[: width * height].reshape(height, width).copy()


def _write_pgm(path: Path, frame: np.ndarray) -> None:
    h, w = frame.shape
    header = f"P5\n{w} {h}\n255\n".encode("ascii")
    path.write_bytes(header + frame.tobytes())
