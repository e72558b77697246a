"""
Synthetic video re-identification benchmark.

Each identity is a textured, articulated sprite (head, patterned torso, swinging legs) that
walks at its own speed across a camera-specific background, turning back at the frame edges.
Camera 1 adds a global illumination shift and mild sensor noise. Alongside the RGB frames the
generator writes per-frame sprite masks and exact ground-truth flow: inside the mask the flow
equals the sprite's displacement to the next frame, outside it is zero.
"""

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import structlog
from pydantic import BaseModel, Field
from scipy.ndimage import gaussian_filter

from src.common.errors import ConfigError
from src.common.utils import make_rng
from src.core.data.imageio import to_uint8, write_image
from src.core.data.manifest import ClipRecord, DatasetManifest, write_manifest
from src.core.flow.flo_io import write_flo
from src.core.flow.horn_schunck import FlowField
from src.worker.pool import parallel_map

logger = structlog.get_logger(__name__)

_IDENTITY_STREAM = 0x1D
_CLIP_STREAM = 0xC1
_NOISE_STREAM = 0x015E

MAX_SPEED = 2


class SpriteIdentity(BaseModel):
    """Appearance and gait of one synthetic person; a pure function of (seed, index)."""

    index: int
    torso_color: tuple[float, float, float]
    leg_color: tuple[float, float, float]
    head_color: tuple[float, float, float]
    stripe_period: float
    stripe_strength: float
    check_period: float
    scale: float
    gait_frequency: float
    gait_phase: float
    speed: int

    @classmethod
    def from_seed(cls, seed: int, index: int) -> "SpriteIdentity":
        rng = make_rng(seed, _IDENTITY_STREAM, index)
        return cls(
            index=index,
            torso_color=tuple(float(c) for c in rng.uniform(0.1, 0.95, 3)),
            leg_color=tuple(float(c) for c in rng.uniform(0.05, 0.9, 3)),
            head_color=tuple(float(c) for c in rng.uniform(0.5, 0.9, 3)),
            stripe_period=float(rng.uniform(4.0, 10.0)),
            stripe_strength=float(rng.uniform(0.0, 0.6)),
            scale=float(rng.uniform(0.8, 1.0)),
            gait_frequency=float(rng.uniform(0.08, 0.2)),
            gait_phase=float(rng.uniform(0.0, 2 * math.pi)),
            speed=int(rng.integers(1, MAX_SPEED + 1)),
            check_period=float(rng.uniform(3.0, 6.0)),
        )


class GeneratorConfig(BaseModel):
    seed: int = 0
    num_identities: int = Field(32, ge=1)
    clips_per_identity: int = Field(4, ge=1)
    frames_per_clip: int = Field(16, ge=2)
    height: int = Field(64, ge=32)
    width: int = Field(32, ge=16)
    noise_sigma: float = Field(0.01, ge=0)
    tracklet_jitter: int = Field(0, ge=0)


@dataclass
class RenderedClip:
    frames: np.ndarray  # n×H×W×3 in [0, 1]
    masks: np.ndarray  # n×H×W bool
    gt_flows: list[FlowField]


def _sprite_layer(identity: SpriteIdentity, height: int, width: int, t: int):
    """Sprite colors and mask in sprite-local coordinates (rigid except the legs)."""
    sh = max(12, int(round(0.8 * height * identity.scale)))
    sw = max(6, int(round(0.4 * width * identity.scale)))
    rgb = np.zeros((sh, sw, 3))
    mask = np.zeros((sh, sw), dtype=bool)
    head_h = max(3, sh // 5)
    torso_end = int(sh * 0.6)

    yy, xx = np.mgrid[0:head_h, 0:sw]
    cy, cx = (head_h - 1) / 2, (sw - 1) / 2
    head = ((yy - cy) / (head_h / 2)) ** 2 + ((xx - cx) / (sw / 3)) ** 2 <= 1.0
    rgb[:head_h][head] = identity.head_color
    mask[:head_h] |= head

    rows = np.arange(head_h, torso_end)
    stripes = 1.0 - identity.stripe_strength * 0.5 * (
        1 + np.sin(2 * math.pi * rows / identity.stripe_period)
    )
    checks = 1.0 - 0.15 * (1 + np.sin(2 * math.pi * np.arange(sw) / identity.check_period))
    pattern = stripes[:, None] * checks[None, :]
    rgb[head_h:torso_end, :] = np.asarray(identity.torso_color)[None, None, :] * pattern[:, :, None]
    mask[head_h:torso_end, :] = True

    swing = int(round(math.sin(2 * math.pi * identity.gait_frequency * t + identity.gait_phase)))
    leg_w = max(2, sw // 3)
    for base, direction in ((0, 1), (sw - leg_w, -1)):
        x0 = int(np.clip(base + direction * swing, 0, sw - leg_w))
        rgb[torso_end:, x0 : x0 + leg_w] = identity.leg_color
        mask[torso_end:, x0 : x0 + leg_w] = True
    return rgb, mask


def _background(seed: int, camera: int, identity: int, slot: int, height: int, width: int):
    rng = make_rng(seed, _CLIP_STREAM, camera, identity, slot)
    sigma = 1.0 if camera == 0 else 0.6
    texture = gaussian_filter(rng.random((height, width, 3)), sigma=(sigma, sigma, 0))
    texture = (texture - texture.min()) / max(texture.max() - texture.min(), 1e-12)
    tint = np.array([0.45, 0.5, 0.4]) if camera == 0 else np.array([0.35, 0.4, 0.55])
    return 0.6 * texture * tint * 2 + 0.1


def walk_position(start: int, offset: int, lo: int, hi: int) -> int:
    """Column after walking ``offset`` pixels from ``start``, turning back at ``lo`` and ``hi``."""
    span = hi - lo
    if span <= 0:
        return lo
    folded = (start - lo + offset) % (2 * span)
    return lo + (folded if folded <= span else 2 * span - folded)


def render_clip(
    config: GeneratorConfig, identity: SpriteIdentity, camera: int, slot: int
) -> RenderedClip:
    """Render one tracklet with masks and ground-truth flow."""
    n, height, width = config.frames_per_clip, config.height, config.width
    rng = make_rng(config.seed, _CLIP_STREAM, 0xF0, camera, identity.index, slot)
    background = _background(config.seed, camera, identity.index, slot, height, width)

    _, sprite_mask = _sprite_layer(identity, height, width, 0)
    sh, sw = sprite_mask.shape
    direction = 1 if rng.random() < 0.5 else -1
    lo, hi = 1, max(1, width - sw - 1)
    start = lo if direction > 0 else hi
    y_base = (height - sh) // 2

    jitter = config.tracklet_jitter
    positions = []
    for t in range(n):
        x = walk_position(start, direction * identity.speed * t, lo, hi)
        y = y_base
        if jitter:
            x += int(rng.integers(-jitter, jitter + 1))
            y += int(rng.integers(-jitter, jitter + 1))
        positions.append((int(np.clip(y, 0, height - sh)), int(np.clip(x, 0, width - sw))))

    noise_rng = make_rng(config.seed, _NOISE_STREAM, camera, identity.index, slot)
    frames = np.empty((n, height, width, 3))
    masks = np.zeros((n, height, width), dtype=bool)
    for t, (y, x) in enumerate(positions):
        rgb, local = _sprite_layer(identity, height, width, t)
        frame = background.copy()
        frame[y : y + sh, x : x + sw][local] = rgb[local]
        masks[t, y : y + sh, x : x + sw] = local
        if camera == 1:
            frame = 0.8 * frame + 0.12
            frame += noise_rng.normal(0.0, config.noise_sigma, frame.shape)
        frames[t] = np.clip(frame, 0.0, 1.0)

    gt_flows = []
    for t in range(n - 1):
        dy = positions[t + 1][0] - positions[t][0]
        dx = positions[t + 1][1] - positions[t][1]
        field = FlowField.zeros(height, width)
        field.u[masks[t]] = dx
        field.v[masks[t]] = dy
        gt_flows.append(field)
    gt_flows.append(gt_flows[-1].copy())
    return RenderedClip(frames=frames, masks=masks, gt_flows=gt_flows)


def clip_id_for(identity: int, camera: int, slot: int) -> str:
    return f"id{identity:04d}_c{camera}_s{slot:02d}"


def _generate_one(job: tuple[GeneratorConfig, str, int, int, int, str]) -> ClipRecord:
    config, out_dir, identity_index, camera, slot, split = job
    identity = SpriteIdentity.from_seed(config.seed, identity_index)
    clip = render_clip(config, identity, camera, slot)
    clip_id = clip_id_for(identity_index, camera, slot)
    root = Path(out_dir)
    frames, masks, gt_flows = [], [], []
    for t in range(config.frames_per_clip):
        frame_rel = f"frames/{clip_id}/{t:04d}.ppm"
        mask_rel = f"masks/{clip_id}/{t:04d}.pgm"
        flow_rel = f"gt_flow/{clip_id}/{t:04d}.flo"
        write_image(root / frame_rel, to_uint8(clip.frames[t]))
        write_image(root / mask_rel, clip.masks[t].astype(np.uint8) * 255)
        write_flo(root / flow_rel, clip.gt_flows[t])
        frames.append(frame_rel)
        masks.append(mask_rel)
        gt_flows.append(flow_rel)
    return ClipRecord(
        clip_id=clip_id,
        identity=identity_index,
        camera=camera,
        split=split,
        frames=frames,
        masks=masks,
        gt_flows=gt_flows,
    )


def split_for(identity: int, num_identities: int) -> str:
    """Identities below the midpoint train; the rest form the disjoint test split."""
    if num_identities < 2:
        return "train"
    return "train" if identity < num_identities // 2 else "test"


def generate(config: GeneratorConfig, out_dir: Path | str, workers: int | None = None) -> DatasetManifest:
    """
    Render the benchmark to ``out_dir`` and write its manifest.

    Args:
        config: Seed, counts and frame extent
        out_dir: Destination directory
        workers: Parallel render processes (None = available CPUs)

    Returns:
        DatasetManifest: Records for every clip, ordered by (identity, camera, slot)

    Raises:
        ConfigError: Frame extent below 32×16
        DatasetIOError: If a file cannot be written
    """
    if config.height < 32 or config.width < 16:
        raise ConfigError(f"frame extent must be at least 32x16, got {config.height}x{config.width}")
    out_dir = Path(out_dir)
    jobs = [
        (config, str(out_dir), identity, camera, slot, split_for(identity, config.num_identities))
        for identity in range(config.num_identities)
        for camera in (0, 1)
        for slot in range(config.clips_per_identity)
    ]
    logger.info(
        "Generating synthetic dataset",
        out_dir=str(out_dir),
        seed=config.seed,
        identities=config.num_identities,
        clips=len(jobs),
    )
    records = parallel_map(_generate_one, jobs, workers=workers, label="render")
    manifest = DatasetManifest(
        seed=config.seed,
        height=config.height,
        width=config.width,
        num_identities=config.num_identities,
        clips_per_identity=config.clips_per_identity,
        frames_per_clip=config.frames_per_clip,
        records=records,
        root=str(out_dir),
    )
    path = write_manifest(out_dir / "manifest.txt", manifest)
    logger.info("Dataset generated", manifest=str(path), clips=len(records))
    return manifest
