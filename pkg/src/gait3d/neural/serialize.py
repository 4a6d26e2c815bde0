"""Self-describing binary container for trained models.

Layout (all integers little-endian u32):

    offset  0   magic "G3DC"
    offset  4   format version (currently 1)
    offset  8   header length in bytes
    offset 12   CRC32 of the header bytes
    offset 16   header: UTF-8 JSON {"input_shape": [...], "layers": [...]}
    then        every parameter array as raw little-endian float64, in
                declaration order (weights before bias per layer), no padding

The file must end exactly where the last parameter does; loading validates
magic, version, checksum, the JSON structure, and the byte count implied by
the declared shapes, and reports the failing offset.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from ..errors import FormatError, ParameterError, ShapeError
from .model import ModelSpec, param_shapes

__all__ = ["MAGIC", "FORMAT_VERSION", "save_model", "load_model"]

MAGIC = b"G3DC"
FORMAT_VERSION = 1
_HEADER_START = 16


def save_model(params: list[np.ndarray], spec: ModelSpec, path) -> None:
    """Write spec + parameters; load_model(path) restores them bit-exactly."""
    shapes = param_shapes(spec)
    got = [tuple(p.shape) for p in params]
    if got != shapes:
        raise ShapeError(f"parameter shapes {got} do not match spec {shapes}")
    header = json.dumps(spec.to_dict(), separators=(",", ":"), sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", FORMAT_VERSION, len(header), zlib.crc32(header)))
        fh.write(header)
        for p in params:
            fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load_model(path) -> tuple[list[np.ndarray], ModelSpec]:
    """Read a model container, validating every field before trusting it."""
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER_START:
        raise FormatError(f"file is {len(blob)} bytes, smaller than the 16-byte preamble")
    if blob[:4] != MAGIC:
        raise FormatError(f"bad magic {blob[:4]!r} at offset 0, expected {MAGIC!r}")
    version, header_len, header_crc = struct.unpack_from("<III", blob, 4)
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version} at offset 4")
    end = _HEADER_START + header_len
    if end > len(blob):
        raise FormatError(
            f"header length {header_len} at offset 8 runs past the file ({len(blob)} bytes)"
        )
    header = blob[_HEADER_START:end]
    crc = zlib.crc32(header)
    if crc != header_crc:
        raise FormatError(
            f"header checksum mismatch at offset 12: stored {header_crc:#010x}, "
            f"computed {crc:#010x}"
        )
    try:
        described = json.loads(header.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"header at offset {_HEADER_START} is not valid JSON: {exc}") from exc
    try:
        spec = ModelSpec.from_dict(described)
    except (ParameterError, ShapeError) as exc:
        raise FormatError(
            f"header at offset {_HEADER_START} describes no valid model: {exc}"
        ) from exc

    shapes = param_shapes(spec)
    counts = [int(np.prod(s)) for s in shapes]
    expected = 8 * sum(counts)
    actual = len(blob) - end
    if actual != expected:
        raise FormatError(
            f"parameter block at offset {end} holds {actual} bytes, expected {expected} "
            f"for {len(shapes)} arrays"
        )
    params: list[np.ndarray] = []
    pos = end
    for shape, count in zip(shapes, counts):
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=pos)
        params.append(arr.astype(np.float64).reshape(shape))
        pos += 8 * count
    return params, spec
