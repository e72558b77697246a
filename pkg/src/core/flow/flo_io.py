"""
Middlebury ``.flo`` files.

Layout: 4 magic bytes ``PIEH`` (the float 202021.25), width and height as little-endian
int32, then row-major interleaved (u, v) little-endian float32.
"""

from pathlib import Path

import numpy as np

from src.common.errors import DatasetIOError, FormatError
from src.core.flow.horn_schunck import FlowField

FLO_MAGIC = b"PIEH"


def encode_flo(flow: FlowField) -> bytes:
    height, width = flow.shape
    header = FLO_MAGIC + np.array([width, height], dtype="<i4").tobytes()
    return header + flow.stacked().astype("<f4").tobytes()


def decode_flo(payload: bytes) -> FlowField:
    """
    Parse ``.flo`` bytes.

    Raises:
        FormatError: Bad magic or payload length
    """
    if payload[:4] != FLO_MAGIC:
        raise FormatError("not a .flo file: bad magic bytes")
    if len(payload) < 12:
        raise FormatError("truncated .flo header")
    width, height = np.frombuffer(payload, dtype="<i4", count=2, offset=4)
    if width <= 0 or height <= 0:
        raise FormatError(f"invalid .flo extent {width}x{height}")
    expected = 12 + int(width) * int(height) * 2 * 4
    if len(payload) != expected:
        raise FormatError(f".flo payload has {len(payload)} bytes, expected {expected}")
    data = np.frombuffer(payload, dtype="<f4", offset=12).reshape(int(height), int(width), 2)
    data = data.astype(np.float64)
    return FlowField(data[..., 0].copy(), data[..., 1].copy())


def write_flo(path: Path | str, flow: FlowField) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(encode_flo(flow))
    except OSError as e:
        raise DatasetIOError(f"cannot write flow file: {e}", path) from e


def read_flo(path: Path | str) -> FlowField:
    path = Path(path)
    try:
        payload = path.read_bytes()
    except OSError as e:
        raise DatasetIOError(f"cannot read flow file: {e}", path) from e
    try:
        return decode_flo(payload)
    except FormatError as e:
        raise FormatError(str(e), path) from e
