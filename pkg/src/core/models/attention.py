"""
Flow-guided spatial attention.

Mutual attention: each stream's inject-stage features are projected to one channel by a
1×1 convolution with ReLU; the element-wise product of the two projections, squashed by a
sigmoid, is a single map that gates both streams. The product is non-negative, so every map
entry lies in [0.5, 1); 0.5 is the neutral gate a pixel gets when either projection is off.

Gated attention (single stream): a shallow CNN over the flow, pooled over channels and
squashed by a sigmoid, gates the appearance features only.
"""

import numpy as np

from src.common.errors import ShapeError
from src.core.tensor import ops
from src.core.tensor.nn import Conv2d, Module
from src.core.tensor.tensor import Tensor

# T×1×I×J, entries in (0, 1)
AttentionMap = Tensor

NEUTRAL_GATE = 0.5
PROJECTION_BIAS = 1.0


class ProjectionHead(Module):
    """
    1×1 convolution C→1 followed by ReLU.

    The bias starts at ``PROJECTION_BIAS``, so the ReLU is open at initialization.
    """

    def __init__(self, channels: int, rng: np.random.Generator, bias: float = PROJECTION_BIAS):
        super().__init__()
        self.conv = self.add_module("conv", Conv2d(channels, 1, 1, rng))
        self.conv.b.data[:] = bias

    def __call__(self, features: Tensor) -> Tensor:
        return ops.relu(self.conv(features))


def mutual_attention_map(
    phi_l: Tensor, f_l: Tensor, zeta_app: ProjectionHead, zeta_flow: ProjectionHead
) -> AttentionMap:
    """``sigmoid(zeta_app(phi_l) ⊙ zeta_flow(f_l))``, independently per frame."""
    if phi_l.shape != f_l.shape:
        raise ShapeError(f"stream features differ in shape: {phi_l.shape} vs {f_l.shape}")
    return ops.sigmoid(ops.mul(zeta_app(phi_l), zeta_flow(f_l)))


def apply_mutual_attention(
    phi_l: Tensor, f_l: Tensor, attention: AttentionMap
) -> tuple[Tensor, Tensor]:
    """Gate both streams with the same map (broadcast over channels)."""
    expected = (phi_l.shape[0], 1) + tuple(phi_l.shape[2:])
    if attention.shape != expected:
        raise ShapeError(f"attention map {attention.shape} does not match features {phi_l.shape}")
    return ops.mul(phi_l, attention), ops.mul(f_l, attention)


class ShallowFlowCNN(Module):
    """Three stride-2 3×3 conv + ReLU stages over the 2-channel flow input."""

    def __init__(self, rng: np.random.Generator, channels: list[int] | None = None):
        super().__init__()
        self.layers: list[Conv2d] = []
        previous = 2
        for index, out_channels in enumerate(channels or [8, 16, 32], start=1):
            conv = Conv2d(previous, out_channels, 3, rng, stride=2, padding=1)
            self.layers.append(self.add_module(f"conv{index}", conv))
            previous = out_channels

    def __call__(self, flow: Tensor, size: tuple[int, int]) -> Tensor:
        if flow.ndim != 4 or flow.shape[1] != 2:
            raise ShapeError(f"flow CNN expects T×2×H×W input, got {flow.shape}")
        x = flow
        for conv in self.layers:
            x = ops.relu(conv(x))
        return ops.resize_nearest(x, size)


def shallow_flow_cnn(cnn: ShallowFlowCNN, flow: Tensor, size: tuple[int, int]) -> Tensor:
    """Flow features resized (nearest neighbour) to the appearance inject-stage extent."""
    return cnn(flow, size)


def flow_gate(flow_features: Tensor) -> AttentionMap:
    """``sigmoid(mean over channels)`` of the flow features, T×1×I×J."""
    return ops.sigmoid(ops.mean(flow_features, axes=1, keepdims=True))


def gated_attention(
    psi_l: Tensor, flow_features: Tensor, return_map: bool = False
) -> Tensor | tuple[Tensor, AttentionMap]:
    """Gate appearance features with the channel-pooled flow features (and the gate itself)."""
    if psi_l.shape[0] != flow_features.shape[0] or psi_l.shape[2:] != flow_features.shape[2:]:
        raise ShapeError(
            f"flow features {flow_features.shape} not aligned with image features {psi_l.shape}"
        )
    gate = flow_gate(flow_features)
    gated = ops.mul(psi_l, gate)
    return (gated, gate) if return_map else gated
