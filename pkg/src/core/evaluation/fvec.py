"""
FVEC descriptor files.

Layout: magic ``FVEC``, one version byte, D as little-endian u32, then one record per clip:
clip_id length (LE u32) and UTF-8 bytes, identity (LE u32), camera (LE u32), D LE float32.
"""

import struct
from pathlib import Path

import numpy as np

from src.common.errors import DatasetIOError, FormatError
from src.core.evaluation.metrics import DescriptorSet

FVEC_MAGIC = b"FVEC"
FVEC_VERSION = 1


def encode_fvec(descriptors: DescriptorSet) -> bytes:
    dim = descriptors.dim
    chunks = [FVEC_MAGIC, bytes([FVEC_VERSION]), struct.pack("<I", dim)]
    clip_ids = descriptors.clip_ids or [""] * len(descriptors)
    for clip_id, identity, camera, vector in zip(
        clip_ids, descriptors.identities, descriptors.cameras, descriptors.vectors
    ):
        name = clip_id.encode("utf-8")
        chunks.append(struct.pack("<I", len(name)) + name)
        chunks.append(struct.pack("<II", int(identity), int(camera)))
        chunks.append(np.asarray(vector, dtype="<f4").tobytes())
    return b"".join(chunks)


def decode_fvec(payload: bytes) -> DescriptorSet:
    """
    Raises:
        FormatError: Bad magic, unknown version or truncated records
    """
    if payload[:4] != FVEC_MAGIC:
        raise FormatError("not an FVEC file: bad magic bytes")
    if len(payload) < 9:
        raise FormatError("truncated FVEC header")
    if payload[4] != FVEC_VERSION:
        raise FormatError(f"unsupported FVEC version {payload[4]}")
    (dim,) = struct.unpack_from("<I", payload, 5)
    offset = 9
    clip_ids, identities, cameras, vectors = [], [], [], []
    try:
        while offset < len(payload):
            (length,) = struct.unpack_from("<I", payload, offset)
            offset += 4
            name = payload[offset : offset + length]
            if len(name) != length:
                raise FormatError("truncated FVEC clip id")
            offset += length
            identity, camera = struct.unpack_from("<II", payload, offset)
            offset += 8
            vector = np.frombuffer(payload, dtype="<f4", count=dim, offset=offset)
            offset += 4 * dim
            clip_ids.append(name.decode("utf-8"))
            identities.append(identity)
            cameras.append(camera)
            vectors.append(vector.astype(np.float64))
    except (struct.error, ValueError) as e:
        raise FormatError(f"truncated FVEC record: {e}") from e
    return DescriptorSet(
        vectors=np.stack(vectors) if vectors else np.zeros((0, dim)),
        identities=np.array(identities, dtype=np.int64),
        cameras=np.array(cameras, dtype=np.int64),
        clip_ids=clip_ids,
    )


def write_fvec(path: Path | str, descriptors: DescriptorSet) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(encode_fvec(descriptors))
    except OSError as e:
        raise DatasetIOError(f"cannot write feature file: {e}", path) from e


def read_fvec(path: Path | str) -> DescriptorSet:
    path = Path(path)
    try:
        payload = path.read_bytes()
    except OSError as e:
        raise DatasetIOError(f"cannot read feature file: {e}", path) from e
    try:
        return decode_fvec(payload)
    except FormatError as e:
        raise FormatError(str(e), path) from e
