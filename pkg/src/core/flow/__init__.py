"""Dense optical flow estimation and ``.flo`` file I/O."""

from .flo_io import decode_flo, encode_flo, read_flo, write_flo
from .horn_schunck import (
    FlowField,
    FlowParams,
    clip_flow,
    endpoint_error,
    estimate_flow,
    flow_to_input,
    to_luma,
)

__all__ = [
    "FlowField",
    "FlowParams",
    "clip_flow",
    "decode_flo",
    "encode_flo",
    "endpoint_error",
    "estimate_flow",
    "flow_to_input",
    "read_flo",
    "to_luma",
    "write_flo",
]
