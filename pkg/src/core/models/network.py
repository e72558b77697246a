"""
Full re-identification network.

``mutual``: appearance and flow streams, a shared mutual attention map at the inject
stage, per-stream temporal aggregation and a fused projection.
``gated``: appearance stream gated by a shallow flow CNN at the inject stage.
``none``: one appearance stream, or both streams fused without attention.
"""

from dataclasses import dataclass

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.common.config import RunConfig
from src.common.errors import ConfigError, ShapeError
from src.common.utils import make_rng
from src.core.models.aggregation import AGGREGATIONS, REFERENCE_MODES, Aggregator, fuse_and_project
from src.core.models.attention import (
    ProjectionHead,
    ShallowFlowCNN,
    apply_mutual_attention,
    gated_attention,
    mutual_attention_map,
    shallow_flow_cnn,
)
from src.core.models.backbone import BackboneConfig, Stream
from src.core.tensor import ops
from src.core.tensor.nn import Linear, Module
from src.core.tensor.tensor import Tensor

logger = structlog.get_logger(__name__)

MODES = ("mutual", "gated", "none")
INIT_STREAM = 1


class ModelConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    backbone: BackboneConfig = Field(default_factory=BackboneConfig)
    mode: str = "mutual"
    agg: str = "weighted"
    streams: int = Field(1, ge=1, le=2)
    embed_layers: int = Field(1, ge=1, le=2)
    raw_weights: bool = False
    reference_mode: str = "temporal_max"
    flow_cnn_channels: list[int] = Field(default_factory=lambda: [8, 16, 32])
    num_identities: int = Field(2, ge=1)

    @field_validator("mode")
    @classmethod
    def _check_mode(cls, value: str) -> str:
        if value not in MODES:
            raise ValueError(f"unknown mode '{value}'")
        return value

    @field_validator("agg")
    @classmethod
    def _check_agg(cls, value: str) -> str:
        if value not in AGGREGATIONS:
            raise ValueError(f"unknown aggregation '{value}'")
        return value

    @field_validator("reference_mode")
    @classmethod
    def _check_reference(cls, value: str) -> str:
        if value not in REFERENCE_MODES:
            raise ValueError(f"unknown reference mode '{value}'")
        return value

    @model_validator(mode="after")
    def _check_streams(self) -> "ModelConfig":
        if self.mode == "mutual" and self.streams == 1:
            self.streams = 2
        if self.mode == "gated":
            self.streams = 1
        return self

    @property
    def two_stream(self) -> bool:
        return self.mode == "mutual" or (self.mode == "none" and self.streams == 2)

    @classmethod
    def from_run_config(cls, config: RunConfig, num_identities: int) -> "ModelConfig":
        backbone = BackboneConfig(
            in_channels=3,
            stage_channels=config.stage_channels,
            inject_stage=config.inject_stage,
            descriptor_dim=config.descriptor_dim,
            se=config.se,
            se_reduction=config.se_reduction,
        )
        return cls(
            backbone=backbone,
            mode=config.mode,
            agg=config.agg,
            streams=config.streams,
            embed_layers=config.embed_layers,
            raw_weights=config.raw_weights,
            reference_mode=config.reference_mode,
            flow_cnn_channels=config.flow_cnn_channels,
            num_identities=num_identities,
        )


@dataclass
class ModelOutput:
    """Descriptors B×D, logits B×N and, for attention modes, the (B·T)×1×I×J maps."""

    descriptors: Tensor
    logits: Tensor
    attention: np.ndarray | None = None


class ReidNetwork(Module):
    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        super().__init__()
        self.config = config
        dim = config.backbone.descriptor_dim
        aggregator_options = dict(
            embed_layers=config.embed_layers,
            raw_weights=config.raw_weights,
            reference_mode=config.reference_mode,
        )

        self.app = self.add_module("app", Stream(config.backbone, rng))
        self.agg_app = self.add_module("agg_app", Aggregator(config.agg, dim, rng, **aggregator_options))

        self.flow = self.agg_flow = self.fuse = None
        if config.two_stream:
            flow_backbone = config.backbone.model_copy(update={"in_channels": 2})
            self.flow = self.add_module("flow", Stream(flow_backbone, rng))
            self.agg_flow = self.add_module(
                "agg_flow", Aggregator(config.agg, dim, rng, **aggregator_options)
            )
            self.fuse = self.add_module("fuse", Linear(2 * dim, dim, rng))

        self.zeta_app = self.zeta_flow = None
        if config.mode == "mutual":
            channels = config.backbone.inject_channels
            self.zeta_app = self.add_module("zeta_app", ProjectionHead(channels, rng))
            self.zeta_flow = self.add_module("zeta_flow", ProjectionHead(channels, rng))

        self.flow_cnn = None
        if config.mode == "gated":
            self.flow_cnn = self.add_module("flow_cnn", ShallowFlowCNN(rng, config.flow_cnn_channels))

        self.classifier = self.add_module("classifier", Linear(dim, config.num_identities, rng))
        self.assign_names()

    def frame_features(self, frames: Tensor, flows: Tensor) -> tuple[Tensor, Tensor | None, np.ndarray | None]:
        """Per-frame appearance (and flow) features for N frames, plus attention maps."""
        mode = self.config.mode
        phi_l = self.app.forward_to_stage(frames)
        if mode == "mutual":
            f_l = self.flow.forward_to_stage(flows)
            attention = mutual_attention_map(phi_l, f_l, self.zeta_app, self.zeta_flow)
            psi_app, psi_flow = apply_mutual_attention(phi_l, f_l, attention)
            return (
                self.app.forward_from_stage(psi_app),
                self.flow.forward_from_stage(psi_flow),
                attention.data,
            )
        if mode == "gated":
            flow_features = shallow_flow_cnn(self.flow_cnn, flows, tuple(phi_l.shape[2:]))
            gated, gate = gated_attention(phi_l, flow_features, return_map=True)
            return self.app.forward_from_stage(gated), None, gate.data
        flow_out = self.flow(flows) if self.flow is not None else None
        return self.app.forward_from_stage(phi_l), flow_out, None

    def aggregate(self, app_features: Tensor, flow_features: Tensor | None, batch: int, seq_len: int) -> Tensor:
        """Collapse (B·T)×D frame features to B×D clip descriptors."""
        descriptors = []
        for b in range(batch):
            rows = list(range(b * seq_len, (b + 1) * seq_len))
            phi_c = self.agg_app(ops.take(app_features, rows, axis=0))
            if self.fuse is not None:
                f_c = self.agg_flow(ops.take(flow_features, rows, axis=0))
                phi_c = fuse_and_project(phi_c, f_c, self.fuse)
            descriptors.append(phi_c)
        return descriptors[0] if batch == 1 else ops.concat(descriptors, axis=0)

    def __call__(self, frames: np.ndarray, flows: np.ndarray) -> ModelOutput:
        """
        Run a batch of clips.

        Args:
            frames: B×T×3×H×W normalized frames
            flows: B×T×2×H×W scaled flow

        Returns:
            ModelOutput: B×D descriptors, B×N logits and attention maps when present
        """
        if frames.ndim != 5 or flows.ndim != 5 or frames.shape[:2] != flows.shape[:2]:
            raise ShapeError(f"expected B×T×C×H×W frames and flows, got {frames.shape} and {flows.shape}")
        batch, seq_len = frames.shape[:2]
        frame_tensor = Tensor(frames.reshape((batch * seq_len,) + frames.shape[2:]))
        flow_tensor = Tensor(flows.reshape((batch * seq_len,) + flows.shape[2:]))
        app_features, flow_features, attention = self.frame_features(frame_tensor, flow_tensor)
        descriptors = self.aggregate(app_features, flow_features, batch, seq_len)
        return ModelOutput(descriptors, self.classifier(descriptors), attention)


def build_model(config: RunConfig, num_identities: int) -> ReidNetwork:
    """Network for ``config`` with parameters initialized from ``config.seed``."""
    model_config = ModelConfig.from_run_config(config, num_identities)
    model = ReidNetwork(model_config, make_rng(config.seed, INIT_STREAM))
    logger.info(
        "Model built",
        mode=config.mode,
        agg=config.agg,
        inject_stage=config.inject_stage,
        parameters=model.num_parameters(),
    )
    return model


def forward_model(frames: np.ndarray, flows: np.ndarray, model: ReidNetwork, mode: str) -> ModelOutput:
    """Run ``model`` on a batch, checking that it was built for ``mode``."""
    if mode not in MODES:
        raise ConfigError(f"unknown mode '{mode}'")
    if mode != model.config.mode:
        raise ConfigError(f"model was built for mode '{model.config.mode}', not '{mode}'")
    return model(frames, flows)
