"""Conversion of loaded clips into network input arrays."""

import numpy as np

from src.core.data.loader import FlowClip, FrameClip
from src.core.flow.horn_schunck import FlowField, flow_to_input


def resize_nearest(image: np.ndarray, height: int, width: int) -> np.ndarray:
    """Nearest-neighbour resize over the first two axes."""
    h, w = image.shape[:2]
    if (h, w) == (height, width):
        return image
    rows = (np.arange(height) * h) // height
    cols = (np.arange(width) * w) // width
    return image[rows][:, cols]


def resize_flow(flow: FlowField, height: int, width: int) -> FlowField:
    """Resize a flow field, scaling displacements with the extent."""
    h, w = flow.shape
    if (h, w) == (height, width):
        return flow
    return FlowField(
        resize_nearest(flow.u, height, width) * (width / w),
        resize_nearest(flow.v, height, width) * (height / h),
    )


def normalize_frame(frame: np.ndarray) -> np.ndarray:
    """Per channel: subtract the mean, divide by the value range (1 when flat)."""
    centered = frame - frame.mean(axis=(0, 1), keepdims=True)
    spread = frame.max(axis=(0, 1), keepdims=True) - frame.min(axis=(0, 1), keepdims=True)
    return centered / np.where(spread > 0, spread, 1.0)


def clip_arrays(
    clip: FrameClip, flows: FlowClip, height: int, width: int, cap: float = 16.0
) -> tuple[np.ndarray, np.ndarray]:
    """
    Network inputs for one clip.

    Returns:
        tuple: frames T×3×H×W (normalized) and flows T×2×H×W (scaled into [-1, 1])
    """
    frames = np.stack(
        [normalize_frame(resize_nearest(f, height, width)).transpose(2, 0, 1) for f in clip.frames]
    )
    flow_inputs = np.stack(
        [flow_to_input(resize_flow(f, height, width), cap) for f in flows.fields]
    )
    return frames, flow_inputs
