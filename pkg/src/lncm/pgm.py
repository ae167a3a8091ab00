"""PGM image IO: plain (P2) and binary (P5), 8-bit and 10-bit-in-16-bit.

maxval 255 maps to bit depth 8, maxval 1023 to bit depth 10 (stored as two
big-endian bytes per sample in P5, per the PNM convention).  The writer
always emits P5 and applies the explicit round-and-clip step, since planes
are stored unclipped in memory.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import IoError, ParseError
from .tensor_core import Plane

__all__ = ["read_pgm", "write_pgm"]


def read_pgm(path) -> Plane:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc

    pos = 0

    def next_token() -> bytes:
        nonlocal pos
        while pos < len(data):
            c = data[pos]
            if c in b" \t\r\n":
                pos += 1
            elif c in b"#":
                while pos < len(data) and data[pos] not in b"\n":
                    pos += 1
            else:
                break
        start = pos
        while pos < len(data) and data[pos] not in b" \t\r\n":
            pos += 1
        if start == pos:
            raise ParseError(f"{path}: truncated PGM header")
        return data[start:pos]

    def int_token(name: str) -> int:
        tok = next_token()
        try:
            return int(tok)
        except ValueError as exc:
            raise ParseError(f"{path}: bad {name} {tok!r}") from exc

    magic = next_token()
    if magic not in (b"P2", b"P5"):
        raise ParseError(f"{path}: not a P2/P5 PGM (magic {magic!r})", line=1)
    width = int_token("width")
    height = int_token("height")
    maxval = int_token("maxval")
    if width < 1 or height < 1:
        raise ParseError(f"{path}: bad dimensions {width}x{height}")
    if maxval not in (255, 1023):
        raise ParseError(f"{path}: unsupported maxval {maxval} (want 255 or 1023)")
    count = width * height

    if magic == b"P5":
        pos += 1  # exactly one whitespace byte separates maxval from the raster
        raster = data[pos:]
        if maxval == 255:
            if len(raster) < count:
                raise ParseError(f"{path}: raster truncated ({len(raster)} of {count} bytes)")
            arr = np.frombuffer(raster[:count], dtype=np.uint8).astype(np.float64)
        else:
            if len(raster) < 2 * count:
                raise ParseError(f"{path}: raster truncated ({len(raster)} of {2 * count} bytes)")
            arr = np.frombuffer(raster[:2 * count], dtype=">u2").astype(np.float64)
    else:
        values = np.empty(count)
        for i in range(count):
            values[i] = int_token("sample")
        arr = values
    if arr.max(initial=0) > maxval:
        raise ParseError(f"{path}: sample exceeds maxval {maxval}")
    bit_depth = 8 if maxval == 255 else 10
    return Plane(arr.reshape(height, width), bit_depth)


def write_pgm(path, plane: Plane) -> None:
    maxval = plane.max_value
    arr = np.clip(np.rint(plane.samples), 0, maxval)
    header = f"P5\n{plane.width} {plane.height}\n{maxval}\n".encode()
    if maxval == 255:
        raster = arr.astype(np.uint8).tobytes()
    else:
        raster = arr.astype(">u2").tobytes()
    try:
        Path(path).write_bytes(header + raster)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
