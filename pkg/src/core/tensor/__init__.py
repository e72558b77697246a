"""Minimal dense-tensor algebra with reverse-mode automatic differentiation."""

from .nn import Conv2d, Linear, Module, Parameter
from .optim import Adam
from .tensor import Function, Tensor, default_dtype, get_default_dtype, set_default_dtype

__all__ = [
    "Adam",
    "Conv2d",
    "Function",
    "Linear",
    "Module",
    "Parameter",
    "Tensor",
    "default_dtype",
    "get_default_dtype",
    "set_default_dtype",
]
