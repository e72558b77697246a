"""
Clip loading: sample a window of frames from a tracklet together with its flow fields.

Training draws random contiguous windows; evaluation takes evenly spaced frames covering the
whole tracklet.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import structlog

from src.common.errors import TrackletTooShortError
from src.common.utils import evenly_spaced_indices
from src.core.data.imageio import read_image, to_unit
from src.core.data.manifest import ClipRecord, DatasetManifest
from src.core.flow.flo_io import read_flo
from src.core.flow.horn_schunck import FlowField, FlowParams, estimate_flow, to_luma

logger = structlog.get_logger(__name__)

SAMPLING_MODES = ("random-contiguous", "evenly-spaced")
CACHED_TRACKLETS = 512
FLOWS_PER_TRACKLET = 16


@dataclass
class FrameClip:
    """Ordered RGB frames (T×H×W×3 in [0, 1]) of one identity seen by one camera."""

    clip_id: str
    identity: int
    camera: int
    frames: np.ndarray
    indices: list[int]
    masks: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.frames)


@dataclass
class FlowClip:
    """One flow field per frame of the matching FrameClip."""

    fields: list[FlowField] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.fields)


def sample_indices(
    length: int, seq_len: int, sampling: str, rng: np.random.Generator | None = None
) -> list[int]:
    """
    Choose ``seq_len`` frame indices from a tracklet of ``length`` frames.

    Raises:
        TrackletTooShortError: If the tracklet is shorter than ``seq_len``
        ValueError: Unknown sampling mode, or random sampling without a generator
    """
    if sampling not in SAMPLING_MODES:
        raise ValueError(f"unknown sampling '{sampling}'; expected one of {SAMPLING_MODES}")
    if length < seq_len:
        raise TrackletTooShortError(f"tracklet has {length} frames, need {seq_len}")
    if sampling == "evenly-spaced":
        return evenly_spaced_indices(length, seq_len)
    if rng is None:
        raise ValueError("random-contiguous sampling needs a random generator")
    start = int(rng.integers(0, length - seq_len + 1))
    return list(range(start, start + seq_len))


class ClipLoader:
    """
    Reads frames, masks and flows for manifest records, caching decoded tracklets and flow
    fields in bounded least-recently-used caches.

    Flows come from the estimated-flow files when present, otherwise they are computed on
    the fly with Horn–Schunck; ``flow_source="ground_truth"`` reads the generator's exact
    fields instead.
    """

    def __init__(
        self,
        manifest: DatasetManifest,
        flow_source: str = "estimated",
        flow_params: FlowParams | None = None,
        cache_clips: int = CACHED_TRACKLETS,
    ):
        self.manifest = manifest
        self.flow_source = flow_source
        self.flow_params = flow_params or FlowParams()
        self._warned: set[str] = set()
        self._cached_tracklet = lru_cache(maxsize=cache_clips)(self._read_tracklet)
        self._cached_flow = lru_cache(maxsize=cache_clips * FLOWS_PER_TRACKLET)(self._read_flow)

    def cache_sizes(self) -> tuple[int, int]:
        """Entries currently held as (tracklets, flow fields)."""
        return self._cached_tracklet.cache_info().currsize, self._cached_flow.cache_info().currsize

    def _read_tracklet(self, clip_id: str) -> np.ndarray:
        record = self.manifest.get(clip_id)
        return np.stack([read_image(self.manifest.path(p)) for p in record.frames])

    def tracklet(self, record: ClipRecord) -> np.ndarray:
        """All frames of a tracklet as uint8 n×H×W×3."""
        return self._cached_tracklet(record.clip_id)

    def masks(self, record: ClipRecord, indices: list[int]) -> np.ndarray | None:
        if not record.masks:
            return None
        return np.stack([read_image(self.manifest.path(record.masks[i])) > 127 for i in indices])

    def _read_flow(self, clip_id: str, index: int) -> FlowField:
        record = self.manifest.get(clip_id)
        if self.flow_source == "ground_truth" and record.gt_flows:
            return read_flo(self.manifest.path(record.gt_flows[index]))
        if self.flow_source == "estimated" and record.flows:
            return read_flo(self.manifest.path(record.flows[index]))
        if clip_id not in self._warned:
            logger.warning(
                "No stored flow for clip, estimating on the fly",
                clip_id=clip_id,
                flow_source=self.flow_source,
            )
            self._warned.add(clip_id)
        frames = self.tracklet(record)
        src = min(index, len(frames) - 2)
        return estimate_flow(
            to_luma(to_unit(frames[src])), to_luma(to_unit(frames[src + 1])), self.flow_params
        )

    def flow_at(self, record: ClipRecord, index: int) -> FlowField:
        return self._cached_flow(record.clip_id, index)

    def load(
        self,
        clip_id: str,
        seq_len: int,
        sampling: str = "evenly-spaced",
        rng: np.random.Generator | None = None,
        with_masks: bool = False,
    ) -> tuple[FrameClip, FlowClip]:
        record = self.manifest.get(clip_id)
        indices = sample_indices(record.length, seq_len, sampling, rng)
        frames = to_unit(self.tracklet(record)[indices])
        clip = FrameClip(
            clip_id=record.clip_id,
            identity=record.identity,
            camera=record.camera,
            frames=frames,
            indices=indices,
            masks=self.masks(record, indices) if with_masks else None,
        )
        return clip, FlowClip([self.flow_at(record, i) for i in indices])

    def load_split(
        self, records: list[ClipRecord], seq_len: int, with_masks: bool = False
    ) -> list[tuple[FrameClip, FlowClip]]:
        """Evenly spaced clips for evaluation; too-short tracklets are skipped and logged."""
        clips = []
        for record in records:
            try:
                clips.append(self.load(record.clip_id, seq_len, "evenly-spaced", with_masks=with_masks))
            except TrackletTooShortError as e:
                logger.warning("Skipping short tracklet", clip_id=record.clip_id, error=str(e))
        return clips


def load_clip(
    manifest: DatasetManifest,
    clip_id: str,
    seq_len: int,
    sampling: str = "evenly-spaced",
    rng: np.random.Generator | None = None,
    flow_source: str = "estimated",
) -> tuple[FrameClip, FlowClip]:
    """One-off convenience wrapper around ``ClipLoader.load``."""
    return ClipLoader(manifest, flow_source=flow_source).load(clip_id, seq_len, sampling, rng)
