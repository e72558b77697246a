"""
Dense tensors with reverse-mode automatic differentiation.

A Tensor wraps a numpy array. Operations are Function subclasses: ``apply`` runs the
forward pass on raw arrays and records the Function on the output so ``backward`` can walk
the graph in reverse topological order.
"""

from contextlib import contextmanager
from typing import Iterator

import numpy as np

from src.common.config import settings
from src.common.errors import ShapeError

_default_dtype = np.dtype(settings.precision)


def get_default_dtype() -> np.dtype:
    """Return the dtype new tensors and parameters are created with."""
    return _default_dtype


def set_default_dtype(dtype: str | np.dtype) -> None:
    """Set the dtype for new tensors (float32 for training, float64 for gradient checks)."""
    global _default_dtype
    dtype = np.dtype(dtype)
    if dtype not in (np.float32, np.float64):
        raise ValueError(f"unsupported dtype {dtype}; use float32 or float64")
    _default_dtype = dtype


@contextmanager
def default_dtype(dtype: str | np.dtype) -> Iterator[None]:
    """Temporarily switch the default dtype."""
    previous = _default_dtype
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(previous)


class Tensor:
    """
    Real-valued array with an optional gradient buffer.

    Attributes:
        data: numpy array holding the values
        requires_grad: whether ``backward`` should produce a gradient for this tensor
        grad: same-shape buffer, accumulated by ``backward`` (None until first use)
    """

    __slots__ = ("data", "requires_grad", "grad", "_ctx", "__weakref__")

    def __init__(self, data, requires_grad: bool = False, dtype=None, _ctx=None):
        array = np.asarray(data, dtype=dtype if dtype is not None else _default_dtype)
        if any(extent <= 0 for extent in array.shape):
            raise ShapeError(f"tensor extents must be positive, got shape {array.shape}")
        self.data = array
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._ctx = _ctx

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, grad: np.ndarray) -> None:
        """Add ``grad`` into the gradient buffer, allocating it on first use."""
        if grad.shape != self.data.shape:
            raise ShapeError(f"gradient shape {grad.shape} does not match tensor {self.shape}")
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def backward(self) -> None:
        """
        Populate ``grad`` of every tracked leaf reachable from this scalar.

        Raises:
            ShapeError: If called on a tensor with more than one element
        """
        if self.data.size != 1:
            raise ShapeError(f"backward requires a scalar loss, got shape {self.shape}")

        order = _topological_order(self)
        pending: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            grad = pending.pop(id(node), None)
            if grad is None:
                continue
            if node._ctx is None:
                if node.requires_grad:
                    node.accumulate_grad(grad)
                continue
            for parent, parent_grad in zip(node._ctx.parents, node._ctx.backward(grad)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in pending:
                    pending[key] = pending[key] + parent_grad
                else:
                    pending[key] = parent_grad

    # Operator sugar; implementations live in ops
    def __add__(self, other: "Tensor") -> "Tensor":
        from src.core.tensor import ops

        return ops.add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        from src.core.tensor import ops

        return ops.sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        from src.core.tensor import ops

        return ops.mul(self, other)

    def __truediv__(self, other: "Tensor") -> "Tensor":
        from src.core.tensor import ops

        return ops.div(self, other)

    def __neg__(self) -> "Tensor":
        from src.core.tensor import ops

        return ops.neg(self)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        from src.core.tensor import ops

        return ops.matmul(self, other)


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        if node._ctx is not None:
            for parent in node._ctx.parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
    return order


class Function:
    """
    A differentiable operation.

    Subclasses implement ``forward`` on numpy arrays (saving whatever the backward pass needs
    on ``self``) and ``backward``, which maps the output gradient to one gradient per parent
    (or None for parents that need none).
    """

    def __init__(self, *parents: Tensor):
        self.parents = parents

    @classmethod
    def apply(cls, *inputs: Tensor, **options) -> Tensor:
        fn = cls(*inputs)
        out = fn.forward(*[t.data for t in inputs], **options)
        tracked = any(t.requires_grad for t in inputs)
        return Tensor(out, requires_grad=tracked, dtype=out.dtype, _ctx=fn if tracked else None)

    def forward(self, *arrays: np.ndarray, **options) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray | None, ...]:
        raise NotImplementedError


def as_tensor(value, dtype=None) -> Tensor:
    """Wrap arrays and scalars as constant tensors; tensors pass through."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value, dtype=dtype)
