"""Synthetic benchmark generation, manifests and clip loading."""

from .flows import compute_flows
from .generator import GeneratorConfig, SpriteIdentity, generate, render_clip
from .loader import ClipLoader, FlowClip, FrameClip, load_clip, sample_indices
from .manifest import ClipRecord, DatasetManifest, read_manifest, write_manifest

__all__ = [
    "ClipLoader",
    "ClipRecord",
    "DatasetManifest",
    "FlowClip",
    "FrameClip",
    "GeneratorConfig",
    "SpriteIdentity",
    "compute_flows",
    "generate",
    "load_clip",
    "read_manifest",
    "render_clip",
    "sample_indices",
    "write_manifest",
]
