"""Backbone streams, attention, temporal aggregation and the composed network."""

from .aggregation import (
    Aggregator,
    ClipDescriptor,
    TemporalAttentionScorer,
    TinyEmbedding,
    aggregation_weights,
    average_pool,
    fuse_and_project,
    reference_feature,
    temporal_attention_pool,
    weighted_addition,
    weighted_sum,
)
from .attention import (
    ProjectionHead,
    ShallowFlowCNN,
    apply_mutual_attention,
    gated_attention,
    mutual_attention_map,
    shallow_flow_cnn,
)
from .backbone import BackboneConfig, SqueezeExcitation, Stream, forward_from_stage, forward_to_stage, squeeze_excitation
from .network import ModelConfig, ModelOutput, ReidNetwork, build_model, forward_model

__all__ = [
    "Aggregator",
    "BackboneConfig",
    "ClipDescriptor",
    "ModelConfig",
    "ModelOutput",
    "ProjectionHead",
    "ReidNetwork",
    "ShallowFlowCNN",
    "SqueezeExcitation",
    "Stream",
    "TemporalAttentionScorer",
    "TinyEmbedding",
    "aggregation_weights",
    "apply_mutual_attention",
    "average_pool",
    "build_model",
    "forward_from_stage",
    "forward_model",
    "forward_to_stage",
    "fuse_and_project",
    "gated_attention",
    "mutual_attention_map",
    "reference_feature",
    "shallow_flow_cnn",
    "squeeze_excitation",
    "temporal_attention_pool",
    "weighted_addition",
    "weighted_sum",
]
