"""Clip-level augmentation: horizontal flip and a small random crop, shared by all frames."""

import numpy as np

CROP_MARGIN = 2


def hflip(frames: np.ndarray, flows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mirror T×C×H×W frames and flows; the flow's horizontal component changes sign."""
    flipped = flows[..., ::-1].copy()
    flipped[:, 0] = -flipped[:, 0]
    return frames[..., ::-1].copy(), flipped


def random_crop(
    frames: np.ndarray, flows: np.ndarray, rng: np.random.Generator, margin: int = CROP_MARGIN
) -> tuple[np.ndarray, np.ndarray]:
    """Shift by up to ``margin`` pixels in each direction, padding with edge values."""
    dy, dx = (int(v) for v in rng.integers(0, 2 * margin + 1, size=2))
    height, width = frames.shape[2:]
    pad = ((0, 0), (0, 0), (margin, margin), (margin, margin))
    window = (slice(None), slice(None), slice(dy, dy + height), slice(dx, dx + width))
    return np.pad(frames, pad, mode="edge")[window], np.pad(flows, pad, mode="edge")[window]


def augment_clip(
    frames: np.ndarray, flows: np.ndarray, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    if rng.random() < 0.5:
        frames, flows = hflip(frames, flows)
    return random_crop(frames, flows, rng)
