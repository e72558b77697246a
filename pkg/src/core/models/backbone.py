"""
Two-stream convolutional backbone.

Each stream is a stack of stages (3×3 convolution with stride 2 and padding 1, optional
squeeze-excitation, ReLU) followed by global average pooling and a fully connected
projection to the descriptor dimension. The appearance stream reads 3-channel frames, the
flow stream 2-channel flow; both share the architecture but not the parameters.
"""

import numpy as np
from pydantic import BaseModel, Field, model_validator

from src.common.errors import ShapeError
from src.core.tensor import ops
from src.core.tensor.nn import Conv2d, Linear, Module
from src.core.tensor.tensor import Tensor

# Feature map at the inject stage, T×C×I×J
StageFeatures = Tensor


class BackboneConfig(BaseModel):
    in_channels: int = Field(3, ge=1)
    stage_channels: list[int] = Field(default_factory=lambda: [16, 32, 64, 128, 128])
    inject_stage: int = 4
    descriptor_dim: int = Field(128, ge=4)
    se: bool = False
    se_reduction: int = Field(4, ge=1)

    @model_validator(mode="after")
    def _check(self) -> "BackboneConfig":
        if not self.stage_channels:
            raise ValueError("stage_channels must not be empty")
        if not 1 <= self.inject_stage < len(self.stage_channels):
            raise ValueError(
                f"inject_stage must be in 1..{len(self.stage_channels) - 1}, got {self.inject_stage}"
            )
        if self.se and any(c % self.se_reduction for c in self.stage_channels):
            raise ValueError(
                f"squeeze-excitation needs channels divisible by {self.se_reduction}: "
                f"{self.stage_channels}"
            )
        return self

    @property
    def num_stages(self) -> int:
        return len(self.stage_channels)

    @property
    def inject_channels(self) -> int:
        return self.stage_channels[self.inject_stage - 1]

    def stage_extent(self, height: int, width: int, stage: int | None = None) -> tuple[int, int]:
        """Spatial extent after ``stage`` stride-2 stages (default: the inject stage)."""
        for _ in range(self.inject_stage if stage is None else stage):
            height, width = (height - 1) // 2 + 1, (width - 1) // 2 + 1
        return height, width


class SqueezeExcitation(Module):
    """Channel gates: global pool → FC C→C/r → ReLU → FC C/r→C → sigmoid → scale."""

    def __init__(self, channels: int, reduction: int, rng: np.random.Generator):
        super().__init__()
        if channels % reduction:
            raise ShapeError(f"channels {channels} not divisible by reduction {reduction}")
        self.squeeze = self.add_module("fc1", Linear(channels, channels // reduction, rng))
        self.excite = self.add_module("fc2", Linear(channels // reduction, channels, rng))

    def gates(self, features: Tensor) -> Tensor:
        pooled = ops.mean(features, axes=(2, 3))
        return ops.sigmoid(self.excite(ops.relu(self.squeeze(pooled))))

    def __call__(self, features: Tensor) -> Tensor:
        return ops.scale_channels(features, self.gates(features))


def squeeze_excitation(features: Tensor, block: SqueezeExcitation) -> Tensor:
    """Apply per-(frame, channel) gates in (0, 1) to T×C×I×J features."""
    if features.ndim != 4:
        raise ShapeError(f"squeeze_excitation expects T×C×I×J features, got {features.shape}")
    return block(features)


class Stage(Module):
    def __init__(
        self, in_channels: int, out_channels: int, rng: np.random.Generator, se_reduction: int = 0
    ):
        super().__init__()
        self.conv = self.add_module(
            "conv", Conv2d(in_channels, out_channels, 3, rng, stride=2, padding=1)
        )
        self.se = (
            self.add_module("se", SqueezeExcitation(out_channels, se_reduction, rng))
            if se_reduction
            else None
        )

    def __call__(self, x: Tensor) -> Tensor:
        y = self.conv(x)
        if self.se is not None:
            y = self.se(y)
        return ops.relu(y)


class Stream(Module):
    """One backbone stream (H_app or H_flow)."""

    def __init__(self, config: BackboneConfig, rng: np.random.Generator):
        super().__init__()
        self.config = config
        self.stages: list[Stage] = []
        channels = config.in_channels
        for index, out_channels in enumerate(config.stage_channels, start=1):
            stage = Stage(channels, out_channels, rng, config.se_reduction if config.se else 0)
            self.stages.append(self.add_module(f"stage{index}", stage))
            channels = out_channels
        self.head = self.add_module("fc", Linear(channels, config.descriptor_dim, rng))

    def forward_to_stage(self, x: Tensor) -> StageFeatures:
        if x.ndim != 4 or x.shape[1] != self.config.in_channels:
            raise ShapeError(
                f"stream expects T×{self.config.in_channels}×H×W input, got {x.shape}"
            )
        for stage in self.stages[: self.config.inject_stage]:
            x = stage(x)
        return x

    def forward_from_stage(self, attended: StageFeatures) -> Tensor:
        if attended.ndim != 4 or attended.shape[1] != self.config.inject_channels:
            raise ShapeError(
                f"expected T×{self.config.inject_channels}×I×J stage features, got {attended.shape}"
            )
        x = attended
        for stage in self.stages[self.config.inject_stage :]:
            x = stage(x)
        return self.head(ops.mean(x, axes=(2, 3)))

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward_from_stage(self.forward_to_stage(x))


def forward_to_stage(stream: Stream, clip: Tensor) -> StageFeatures:
    """Stages 1..inject_stage of ``stream`` applied to a T×Cin×H×W clip."""
    return stream.forward_to_stage(clip)


def forward_from_stage(stream: Stream, attended: StageFeatures) -> Tensor:
    """Remaining stages, global average pooling and projection to T×D frame features."""
    return stream.forward_from_stage(attended)
