"""Binary PPM (P6) frames and PGM (P5) masks / attention maps."""

from pathlib import Path

import numpy as np

from src.common.errors import DatasetIOError, FormatError


def encode_pnm(image: np.ndarray) -> bytes:
    """Encode an H×W (P5) or H×W×3 (P6) uint8 image."""
    image = np.asarray(image)
    if image.dtype != np.uint8:
        raise FormatError(f"PNM encoding needs uint8 pixels, got {image.dtype}")
    if image.ndim == 2:
        magic = b"P5"
    elif image.ndim == 3 and image.shape[2] == 3:
        magic = b"P6"
    else:
        raise FormatError(f"cannot encode image of shape {image.shape} as PNM")
    height, width = image.shape[:2]
    return magic + f"\n{width} {height}\n255\n".encode("ascii") + image.tobytes()


def _header_tokens(payload: bytes, count: int) -> tuple[list[bytes], int]:
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < count:
        while pos < len(payload) and payload[pos : pos + 1].isspace():
            pos += 1
        if payload[pos : pos + 1] == b"#":
            while pos < len(payload) and payload[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(payload) and not payload[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated PNM header")
        tokens.append(payload[start:pos])
    return tokens, pos + 1


def decode_pnm(payload: bytes) -> np.ndarray:
    """Decode P5/P6 bytes with maxval 255 into a uint8 array."""
    tokens, offset = _header_tokens(payload, 4)
    magic, width, height, maxval = tokens
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"unsupported PNM magic {magic!r}")
    if int(maxval) != 255:
        raise FormatError(f"unsupported PNM maxval {int(maxval)}")
    channels = 3 if magic == b"P6" else 1
    shape = (int(height), int(width), channels) if channels == 3 else (int(height), int(width))
    expected = int(np.prod(shape))
    data = payload[offset : offset + expected]
    if len(data) != expected:
        raise FormatError(f"PNM payload has {len(data)} bytes, expected {expected}")
    return np.frombuffer(data, dtype=np.uint8).reshape(shape).copy()


def write_image(path: Path | str, image: np.ndarray) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(encode_pnm(image))
    except OSError as e:
        raise DatasetIOError(f"cannot write image: {e}", path) from e


def read_image(path: Path | str) -> np.ndarray:
    path = Path(path)
    try:
        payload = path.read_bytes()
    except OSError as e:
        raise DatasetIOError(f"cannot read image: {e}", path) from e
    try:
        return decode_pnm(payload)
    except FormatError as e:
        raise FormatError(str(e), path) from e


def to_uint8(image: np.ndarray) -> np.ndarray:
    """Quantize [0, 1] floats to uint8 with rounding."""
    return np.clip(np.rint(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)


def to_unit(image: np.ndarray) -> np.ndarray:
    return np.asarray(image, dtype=np.float64) / 255.0
