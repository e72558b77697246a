"""Descriptor extraction with a trained network, plus attention-map export."""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import structlog

from src.core.data.imageio import to_uint8, write_image
from src.core.data.loader import ClipLoader
from src.core.data.manifest import ClipRecord
from src.core.data.transforms import clip_arrays
from src.core.evaluation.metrics import DescriptorSet
from src.core.models.network import ReidNetwork

logger = structlog.get_logger(__name__)


@dataclass
class Extraction:
    descriptors: DescriptorSet
    attention: list[np.ndarray] | None = None
    masks: list[np.ndarray] | None = None


def extract_descriptors(
    model: ReidNetwork,
    loader: ClipLoader,
    records: list[ClipRecord],
    seq_len: int,
    height: int,
    width: int,
    cap: float = 16.0,
    batch_clips: int = 16,
    keep_attention: bool = False,
) -> Extraction:
    """
    Evenly spaced clips of every record through the network, in record order.

    Too-short tracklets are skipped with a warning.
    """
    clips = loader.load_split(records, seq_len, with_masks=keep_attention)
    vectors, attention, masks = [], [], []
    for start in range(0, len(clips), batch_clips):
        chunk = clips[start : start + batch_clips]
        arrays = [clip_arrays(c, f, height, width, cap) for c, f in chunk]
        frames = np.stack([a for a, _ in arrays])
        flows = np.stack([f for _, f in arrays])
        output = model(frames, flows)
        vectors.append(np.asarray(output.descriptors.data, dtype=np.float64))
        if keep_attention and output.attention is not None:
            maps = output.attention.reshape((len(chunk), seq_len) + output.attention.shape[1:])
            attention.extend(maps)
            masks.extend(c.masks for c, _ in chunk)
    dim = model.config.backbone.descriptor_dim
    descriptors = DescriptorSet(
        vectors=np.concatenate(vectors) if vectors else np.zeros((0, dim)),
        identities=np.array([c.identity for c, _ in clips], dtype=np.int64),
        cameras=np.array([c.camera for c, _ in clips], dtype=np.int64),
        clip_ids=[c.clip_id for c, _ in clips],
    )
    logger.info("Descriptors extracted", clips=len(descriptors), dim=dim)
    return Extraction(descriptors, attention or None, masks or None)


def dump_attention(directory: Path | str, clip_ids: list[str], maps: list[np.ndarray]) -> int:
    """Write each frame's attention map as an 8-bit PGM; returns the file count."""
    directory = Path(directory)
    count = 0
    for clip_id, clip_maps in zip(clip_ids, maps):
        for t, frame_map in enumerate(clip_maps):
            write_image(directory / f"{clip_id}_t{t:02d}.pgm", to_uint8(frame_map[0]))
            count += 1
    return count
