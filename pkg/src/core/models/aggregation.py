"""
Temporal aggregation of per-frame features into one clip descriptor.

Weighted aggregation compares every frame with a reference feature (temporal max-pool by
default) in a small embedding space; the cosine similarity, exponentiated and normalized
over the clip, weights a convex combination of the frames. Average pooling and a learned
temporal-attention scorer are the baselines.
"""

from dataclasses import dataclass, field

import numpy as np
import structlog

from src.common.errors import ShapeError
from src.core.tensor import ops
from src.core.tensor.nn import Linear, Module
from src.core.tensor.tensor import Tensor

logger = structlog.get_logger(__name__)

AGGREGATIONS = ("avg", "weighted", "tattn")
REFERENCE_MODES = ("temporal_max", "argmax_frame")

# Norms below this are treated as zero; the cosine of such a frame is defined as 0.
NORM_FLOOR = 1e-12
_NORM_EPS = 1e-30


@dataclass
class ClipDescriptor:
    vector: np.ndarray
    identity: int
    camera: int
    clip_id: str = ""


@dataclass
class AggregationDiagnostics:
    degenerate_frames: list[int] = field(default_factory=list)


class TinyEmbedding(Module):
    """FC D→D/4 with ReLU, optionally followed by a second FC D/4→D/4 with ReLU."""

    def __init__(self, dim: int, rng: np.random.Generator, layers: int = 1):
        super().__init__()
        if dim < 4:
            raise ShapeError(f"embedding needs descriptor_dim >= 4, got {dim}")
        hidden = dim // 4
        self.layers = [self.add_module("fc1", Linear(dim, hidden, rng))]
        if layers == 2:
            self.layers.append(self.add_module("fc2", Linear(hidden, hidden, rng)))
        elif layers != 1:
            raise ValueError(f"embedding supports 1 or 2 layers, got {layers}")

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = ops.relu(layer(x))
        return x


def _check_features(features: Tensor) -> None:
    if features is None or features.ndim != 2:
        shape = None if features is None else features.shape
        raise ShapeError(f"expected T×D frame features, got {shape}")


def reference_feature(features: Tensor, mode: str = "temporal_max") -> Tensor:
    """
    Clip reference, 1×D.

    ``temporal_max`` takes the element-wise maximum over frames (the gradient goes to the
    lowest frame index among ties); ``argmax_frame`` picks the frame with the largest mean
    activation.
    """
    _check_features(features)
    if mode == "temporal_max":
        return ops.max(features, axes=0, keepdims=True)
    if mode == "argmax_frame":
        frame = int(np.argmax(features.data.mean(axis=1)))
        return ops.take(features, [frame], axis=0)
    raise ValueError(f"unknown reference mode '{mode}'")


def _safe_norm(x: Tensor) -> Tensor:
    return ops.sqrt(ops.add(ops.sum(ops.mul(x, x), axes=1, keepdims=True),
                            Tensor(np.full((x.shape[0], 1), _NORM_EPS), dtype=x.dtype)))


def aggregation_weights(
    features: Tensor,
    reference: Tensor,
    embed: TinyEmbedding,
    normalize: bool = True,
    diagnostics: AggregationDiagnostics | None = None,
) -> Tensor:
    """
    Per-frame weights ``exp(cos(g(f_t), g(ref)))``, divided by their sum when ``normalize``.

    Frames whose embedding (or the reference embedding) has near-zero norm get cosine 0 and
    are reported in ``diagnostics``.
    """
    _check_features(features)
    if reference.shape != (1, features.shape[1]):
        raise ShapeError(f"reference {reference.shape} does not match features {features.shape}")

    embedded = embed(features)
    embedded_ref = embed(reference)
    dots = ops.matmul(embedded, ops.transpose(embedded_ref))

    frame_norms = _safe_norm(embedded)
    ref_norm = _safe_norm(embedded_ref)
    denominator = ops.scale(frame_norms, ref_norm)

    degenerate = (frame_norms.data < NORM_FLOOR) | (ref_norm.data.reshape(()) < NORM_FLOOR)
    if degenerate.any():
        frames = [int(i) for i in np.flatnonzero(degenerate[:, 0])]
        logger.debug("Zero-norm embedding in aggregation", frames=frames)
        if diagnostics is not None:
            diagnostics.degenerate_frames.extend(frames)
        mask = Tensor(degenerate.astype(features.dtype), dtype=features.dtype)
        keep = Tensor((~degenerate).astype(features.dtype), dtype=features.dtype)
        cosine = ops.mul(ops.div(dots, ops.add(denominator, mask)), keep)
    else:
        cosine = ops.div(dots, denominator)

    raw = ops.exp(cosine)
    if normalize:
        total = ops.sum(raw)
        raw = ops.scale(raw, ops.div(Tensor(1.0, dtype=total.dtype), total))
    return ops.reshape(raw, (features.shape[0],))


def _sum_tolerance(dtype: np.dtype) -> float:
    return max(1e-9, 16 * float(np.finfo(dtype).eps))


def weighted_addition(features: Tensor, weights: Tensor) -> Tensor:
    """
    Convex combination ``sum_t w_t f_t`` of T×D features, returned as a D-vector.

    Raises:
        ShapeError: Weight count differs from the frame count
        ValueError: Weights do not sum to one within tolerance
    """
    _check_features(features)
    if weights.shape != (features.shape[0],):
        raise ShapeError(f"weights {weights.shape} do not match {features.shape[0]} frames")
    total = float(weights.data.sum())
    if abs(total - 1.0) > _sum_tolerance(weights.dtype):
        raise ValueError(f"aggregation weights must sum to 1, got {total!r}")
    return ops.WeightedAddition.apply(features, weights)


def weighted_sum(features: Tensor, weights: Tensor) -> Tensor:
    """Unnormalized ``sum_t w_t f_t``."""
    _check_features(features)
    if weights.shape != (features.shape[0],):
        raise ShapeError(f"weights {weights.shape} do not match {features.shape[0]} frames")
    return ops.WeightedSum.apply(features, weights)


def average_pool(features: Tensor) -> Tensor:
    """Mean over frames via :func:`weighted_addition` with uniform weights."""
    _check_features(features)
    count = features.shape[0]
    uniform = Tensor(np.full(count, 1.0 / count), dtype=features.dtype)
    return weighted_addition(features, uniform)


class TemporalAttentionScorer(Module):
    """Scalar score per frame (FC D→1); softmax over frames gives the weights."""

    def __init__(self, dim: int, rng: np.random.Generator):
        super().__init__()
        self.fc = self.add_module("fc", Linear(dim, 1, rng))

    def weights(self, features: Tensor) -> Tensor:
        scores = self.fc(features)
        return ops.reshape(ops.softmax(scores, axis=0), (features.shape[0],))


def temporal_attention_pool(features: Tensor, scorer: TemporalAttentionScorer) -> Tensor:
    _check_features(features)
    return weighted_addition(features, scorer.weights(features))


def fuse_and_project(phi_c: Tensor, f_c: Tensor, head: Linear) -> Tensor:
    """Concatenate the two 1×D stream descriptors and project 2D→D."""
    if phi_c.shape != f_c.shape:
        raise ShapeError(f"stream descriptors differ: {phi_c.shape} vs {f_c.shape}")
    return head(ops.concat([phi_c, f_c], axis=1))


class Aggregator(Module):
    """Per-stream temporal aggregation configured by method name."""

    def __init__(
        self,
        method: str,
        dim: int,
        rng: np.random.Generator,
        embed_layers: int = 1,
        raw_weights: bool = False,
        reference_mode: str = "temporal_max",
    ):
        super().__init__()
        if method not in AGGREGATIONS:
            raise ValueError(f"unknown aggregation '{method}'")
        if reference_mode not in REFERENCE_MODES:
            raise ValueError(f"unknown reference mode '{reference_mode}'")
        self.method = method
        self.raw_weights = raw_weights
        self.reference_mode = reference_mode
        self.embed = (
            self.add_module("embed", TinyEmbedding(dim, rng, embed_layers))
            if method == "weighted"
            else None
        )
        self.scorer = (
            self.add_module("scorer", TemporalAttentionScorer(dim, rng))
            if method == "tattn"
            else None
        )
        self.diagnostics = AggregationDiagnostics()

    def frame_weights(self, features: Tensor) -> Tensor:
        if self.method == "weighted":
            reference = reference_feature(features, self.reference_mode)
            return aggregation_weights(
                features, reference, self.embed, not self.raw_weights, self.diagnostics
            )
        if self.method == "tattn":
            return self.scorer.weights(features)
        count = features.shape[0]
        return Tensor(np.full(count, 1.0 / count), dtype=features.dtype)

    def __call__(self, features: Tensor) -> Tensor:
        """T×D frame features → 1×D clip descriptor."""
        if self.method == "avg":
            pooled = average_pool(features)
        elif self.method == "weighted" and self.raw_weights:
            pooled = weighted_sum(features, self.frame_weights(features))
        else:
            pooled = weighted_addition(features, self.frame_weights(features))
        return ops.reshape(pooled, (1, features.shape[1]))
