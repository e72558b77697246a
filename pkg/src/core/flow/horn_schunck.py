"""
Dense optical flow by the Horn–Schunck method.

Both images are blurred with a small Gaussian first. Derivatives use the classical 2×2×2
stencil (the forward cell spanning pixels (i, j) to (i+1, j+1) in both frames); the smoothness
term is enforced with Jacobi updates against the weighted 3×3 neighbourhood average.
"""

from dataclasses import dataclass

import numpy as np
import structlog
from pydantic import BaseModel, Field
from scipy.ndimage import correlate, gaussian_filter

from src.common.errors import ShapeError

logger = structlog.get_logger(__name__)

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

_KERNEL_X = np.array([[-1.0, 1.0], [-1.0, 1.0]]) * 0.25
_KERNEL_Y = np.array([[-1.0, -1.0], [1.0, 1.0]]) * 0.25
_KERNEL_T = np.ones((2, 2)) * 0.25
_KERNEL_AVG = np.array(
    [[1 / 12, 1 / 6, 1 / 12], [1 / 6, 0.0, 1 / 6], [1 / 12, 1 / 6, 1 / 12]]
)


class FlowParams(BaseModel):
    """Horn–Schunck parameters; pixel values are expected in [0, 1]."""

    alpha: float = Field(0.1, gt=0)
    iterations: int = Field(100, ge=1)
    cap: float = Field(16.0, gt=0)
    # Gaussian sigma applied to both images before differentiation; 0 disables
    presmooth: float = Field(0.5, ge=0)


@dataclass
class FlowField:
    """Per-pixel displacement in pixels: ``u`` horizontal (x), ``v`` vertical (y)."""

    u: np.ndarray
    v: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.u.shape

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.u, self.v)

    def stacked(self) -> np.ndarray:
        """H×W×2 array of interleaved (u, v)."""
        return np.stack([self.u, self.v], axis=-1)

    def copy(self) -> "FlowField":
        return FlowField(self.u.copy(), self.v.copy())

    def flipped_horizontally(self) -> "FlowField":
        """Mirror the field left-right; horizontal motion changes sign."""
        return FlowField(-self.u[:, ::-1].copy(), self.v[:, ::-1].copy())

    @classmethod
    def zeros(cls, height: int, width: int) -> "FlowField":
        return cls(np.zeros((height, width)), np.zeros((height, width)))


def to_luma(frame: np.ndarray) -> np.ndarray:
    """Convert an H×W×3 RGB frame in [0, 1] to luma; 2-D input passes through."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim == 2:
        return frame
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise ShapeError(f"expected H×W×3 RGB or H×W grayscale frame, got {frame.shape}")
    return frame @ LUMA_WEIGHTS


def derivatives(prev: np.ndarray, nxt: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Spatial and temporal derivatives averaged over the forward 2×2×2 cube."""
    kwargs = {"mode": "nearest", "origin": -1}
    ix = correlate(prev, _KERNEL_X, **kwargs) + correlate(nxt, _KERNEL_X, **kwargs)
    iy = correlate(prev, _KERNEL_Y, **kwargs) + correlate(nxt, _KERNEL_Y, **kwargs)
    it = correlate(nxt, _KERNEL_T, **kwargs) - correlate(prev, _KERNEL_T, **kwargs)
    return ix, iy, it


def estimate_flow(
    prev: np.ndarray, nxt: np.ndarray, params: FlowParams | None = None
) -> FlowField:
    """
    Estimate the flow that carries ``prev`` onto ``nxt``.

    Args:
        prev: Grayscale image at time t, values in [0, 1]
        nxt: Grayscale image at time t+1, same extent
        params: Smoothness weight, iteration count, magnitude cap and pre-smoothing sigma

    Returns:
        FlowField: Displacements clamped to ``[-cap, cap]``

    Raises:
        ShapeError: If the extents differ or the images are not 2-D
        ValueError: If any pixel is NaN or infinite
    """
    params = params or FlowParams()
    prev = np.asarray(prev, dtype=np.float64)
    nxt = np.asarray(nxt, dtype=np.float64)
    if prev.ndim != 2 or prev.shape != nxt.shape:
        raise ShapeError(f"flow needs two equal 2-D images, got {prev.shape} and {nxt.shape}")
    if not (np.isfinite(prev).all() and np.isfinite(nxt).all()):
        raise ValueError("flow input contains non-finite pixels")

    if params.presmooth > 0:
        prev = gaussian_filter(prev, params.presmooth, mode="nearest")
        nxt = gaussian_filter(nxt, params.presmooth, mode="nearest")
    ix, iy, it = derivatives(prev, nxt)
    denom = params.alpha**2 + ix * ix + iy * iy
    u = np.zeros_like(prev)
    v = np.zeros_like(prev)
    for _ in range(params.iterations):
        u_avg = correlate(u, _KERNEL_AVG, mode="nearest")
        v_avg = correlate(v, _KERNEL_AVG, mode="nearest")
        step = (ix * u_avg + iy * v_avg + it) / denom
        u = u_avg - ix * step
        v = v_avg - iy * step

    np.clip(u, -params.cap, params.cap, out=u)
    np.clip(v, -params.cap, params.cap, out=v)
    return FlowField(u, v)


def clip_flow(frames: np.ndarray, params: FlowParams | None = None) -> list[FlowField]:
    """
    Flow for each consecutive frame pair of a clip, padded to one field per frame.

    ``flow[t]`` estimates frame t → t+1; the last field repeats ``flow[n-2]``.

    Args:
        frames: n×H×W×3 RGB (or n×H×W grayscale) frames in [0, 1]

    Raises:
        ShapeError: If the clip has fewer than two frames
    """
    if len(frames) < 2:
        raise ShapeError(f"flow needs at least two frames, clip has {len(frames)}")
    luma = [to_luma(frame) for frame in frames]
    fields = [estimate_flow(luma[t], luma[t + 1], params) for t in range(len(luma) - 1)]
    fields.append(fields[-1].copy())
    return fields


def flow_to_input(flow: FlowField, cap: float = 16.0) -> np.ndarray:
    """Encode a field as a 2×H×W network input: (u, v) scaled by 1/cap into [-1, 1]."""
    stacked = np.stack([flow.u, flow.v]) / cap
    return np.clip(stacked, -1.0, 1.0)


def endpoint_error(estimate: FlowField, truth: FlowField, margin: int = 0) -> float:
    """Mean Euclidean distance between two fields, ignoring a border of ``margin`` pixels."""
    du = estimate.u - truth.u
    dv = estimate.v - truth.v
    err = np.hypot(du, dv)
    if margin:
        err = err[margin:-margin, margin:-margin]
    return float(err.mean())
