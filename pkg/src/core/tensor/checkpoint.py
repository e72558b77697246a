"""
Checkpoint files.

Layout: magic ``FRID``, one version byte, then until end of file a sequence of records
``(name length u32, name bytes, rank u32, extents u64 each, values)``, all little-endian.
Version 0x01 stores values as 32-bit floats, version 0x02 as 64-bit floats.
"""

import struct
from pathlib import Path

import numpy as np
import structlog

from src.common.errors import DatasetIOError, FormatError

logger = structlog.get_logger(__name__)

MAGIC = b"FRID"
VERSION_F32 = 0x01
VERSION_F64 = 0x02
_VALUE_DTYPES = {VERSION_F32: np.dtype("<f4"), VERSION_F64: np.dtype("<f8")}


def encode_checkpoint(state: dict[str, np.ndarray], version: int | None = None) -> bytes:
    """Serialize named arrays; the version defaults to the widest dtype present."""
    if version is None:
        wide = any(np.asarray(v).dtype == np.float64 for v in state.values())
        version = VERSION_F64 if wide else VERSION_F32
    if version not in _VALUE_DTYPES:
        raise FormatError(f"unsupported checkpoint version {version:#04x}")
    value_dtype = _VALUE_DTYPES[version]
    chunks = [MAGIC, bytes([version])]
    for name, value in state.items():
        array = np.asarray(value)
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<I", array.ndim))
        chunks.append(struct.pack(f"<{array.ndim}Q", *array.shape))
        chunks.append(np.ascontiguousarray(array, dtype=value_dtype).tobytes())
    return b"".join(chunks)


def decode_checkpoint(payload: bytes) -> dict[str, np.ndarray]:
    """
    Parse checkpoint bytes into named arrays (float32 for v1, float64 for v2).

    Raises:
        FormatError: Bad magic, unknown version or truncated record
    """
    if payload[:4] != MAGIC:
        raise FormatError("not a checkpoint: bad magic bytes")
    if len(payload) < 5 or payload[4] not in _VALUE_DTYPES:
        raise FormatError(f"unsupported checkpoint version {payload[4:5].hex() or 'missing'}")
    value_dtype = _VALUE_DTYPES[payload[4]]
    state: dict[str, np.ndarray] = {}
    offset = 5
    try:
        while offset < len(payload):
            (name_len,) = struct.unpack_from("<I", payload, offset)
            offset += 4
            name = payload[offset : offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<I", payload, offset)
            offset += 4
            shape = struct.unpack_from(f"<{rank}Q", payload, offset)
            offset += 8 * rank
            count = int(np.prod(shape)) if rank else 1
            nbytes = count * value_dtype.itemsize
            if offset + nbytes > len(payload):
                raise FormatError(f"truncated values for '{name}'")
            values = np.frombuffer(payload, dtype=value_dtype, count=count, offset=offset)
            offset += nbytes
            if name in state:
                raise FormatError(f"duplicate parameter name '{name}'")
            state[name] = values.reshape(shape).astype(value_dtype.newbyteorder("="))
    except struct.error as e:
        raise FormatError(f"truncated checkpoint: {e}") from e
    return state


def save_checkpoint(path: Path | str, state: dict[str, np.ndarray], version: int | None = None) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(encode_checkpoint(state, version))
    except OSError as e:
        raise DatasetIOError(f"cannot write checkpoint: {e}", path) from e
    logger.info("Checkpoint saved", path=str(path), tensors=len(state))


def load_checkpoint(path: Path | str) -> dict[str, np.ndarray]:
    path = Path(path)
    try:
        payload = path.read_bytes()
    except OSError as e:
        raise DatasetIOError(f"cannot read checkpoint: {e}", path) from e
    state = decode_checkpoint(payload)
    logger.info("Checkpoint loaded", path=str(path), tensors=len(state))
    return state
