"""
Differentiable primitives.

Broadcasting is limited to one case: an operand may have extent 1 on axis 1 where the other
has extent C (a T×1×H×W attention map against T×C×H×W features, or a T×1 column against a
T×D matrix). Every other shape disagreement raises ShapeError.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from src.common.errors import ShapeError
from src.core.tensor.tensor import Function, Tensor, as_tensor

# ===== Element-wise =====


def _broadcast_axis(a: tuple[int, ...], b: tuple[int, ...]) -> str | None:
    """Return None for equal shapes, 'a' or 'b' for the operand broadcast along axis 1."""
    if a == b:
        return None
    if len(a) == len(b) and len(a) >= 2:
        rest_a = a[:1] + a[2:]
        rest_b = b[:1] + b[2:]
        if rest_a == rest_b:
            if b[1] == 1:
                return "b"
            if a[1] == 1:
                return "a"
    raise ShapeError(f"shapes {a} and {b} are not equal nor broadcastable along axis 1")


def _unbroadcast(grad: np.ndarray, side: str | None, which: str) -> np.ndarray:
    if side == which:
        return grad.sum(axis=1, keepdims=True)
    return grad


class Add(Function):
    def forward(self, a, b):
        self.side = _broadcast_axis(a.shape, b.shape)
        return a + b

    def backward(self, grad):
        return _unbroadcast(grad, self.side, "a"), _unbroadcast(grad, self.side, "b")


class Sub(Function):
    def forward(self, a, b):
        self.side = _broadcast_axis(a.shape, b.shape)
        return a - b

    def backward(self, grad):
        return _unbroadcast(grad, self.side, "a"), -_unbroadcast(grad, self.side, "b")


class Mul(Function):
    def forward(self, a, b):
        self.side = _broadcast_axis(a.shape, b.shape)
        self.a, self.b = a, b
        return a * b

    def backward(self, grad):
        return (
            _unbroadcast(grad * self.b, self.side, "a"),
            _unbroadcast(grad * self.a, self.side, "b"),
        )


class Div(Function):
    def forward(self, a, b):
        self.side = _broadcast_axis(a.shape, b.shape)
        self.a, self.b = a, b
        return a / b

    def backward(self, grad):
        return (
            _unbroadcast(grad / self.b, self.side, "a"),
            _unbroadcast(-grad * self.a / (self.b * self.b), self.side, "b"),
        )


class Scale(Function):
    """Multiply a tensor by a single-element tensor."""

    def forward(self, x, s):
        if s.size != 1:
            raise ShapeError(f"scale factor must have one element, got shape {s.shape}")
        self.x, self.s = x, s
        return x * s.reshape(())

    def backward(self, grad):
        return grad * self.s.reshape(()), np.sum(grad * self.x).reshape(self.s.shape)


class Neg(Function):
    def forward(self, x):
        return -x

    def backward(self, grad):
        return (-grad,)


class Exp(Function):
    def forward(self, x):
        self.out = np.exp(x)
        return self.out

    def backward(self, grad):
        return (grad * self.out,)


class Log(Function):
    def forward(self, x):
        self.x = x
        return np.log(x)

    def backward(self, grad):
        return (grad / self.x,)


class Sqrt(Function):
    def forward(self, x):
        self.out = np.sqrt(x)
        return self.out

    def backward(self, grad):
        return (grad * 0.5 / self.out,)


class Relu(Function):
    def forward(self, x):
        self.mask = x > 0
        return np.where(self.mask, x, 0).astype(x.dtype)

    def backward(self, grad):
        return (grad * self.mask,)


class Sigmoid(Function):
    def forward(self, x):
        self.out = expit(x)
        return self.out

    def backward(self, grad):
        return (grad * self.out * (1 - self.out),)


def add(a: Tensor, b: Tensor) -> Tensor:
    return Add.apply(as_tensor(a), as_tensor(b))


def sub(a: Tensor, b: Tensor) -> Tensor:
    return Sub.apply(as_tensor(a), as_tensor(b))


def mul(a: Tensor, b: Tensor) -> Tensor:
    return Mul.apply(as_tensor(a), as_tensor(b))


def div(a: Tensor, b: Tensor) -> Tensor:
    return Div.apply(as_tensor(a), as_tensor(b))


def scale(x: Tensor, s: Tensor | float) -> Tensor:
    return Scale.apply(as_tensor(x), as_tensor(s, dtype=as_tensor(x).dtype))


def neg(x: Tensor) -> Tensor:
    return Neg.apply(x)


def exp(x: Tensor) -> Tensor:
    return Exp.apply(x)


def log(x: Tensor) -> Tensor:
    return Log.apply(x)


def sqrt(x: Tensor) -> Tensor:
    return Sqrt.apply(x)


def relu(x: Tensor) -> Tensor:
    return Relu.apply(x)


def sigmoid(x: Tensor) -> Tensor:
    return Sigmoid.apply(x)


_ELEMENTWISE = {"mul": mul, "add": add, "sub": sub, "div": div, "relu": relu,
                "sigmoid": sigmoid, "exp": exp, "log": log, "sqrt": sqrt, "neg": neg}


def elementwise(op: str, *operands: Tensor) -> Tensor:
    """Dispatch an element-wise operation by name (mul, add, relu, sigmoid, exp, ...)."""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ValueError(f"unknown element-wise op '{op}'") from None
    return fn(*operands)


# ===== Reductions =====


def _normalize_axes(axes, ndim: int) -> tuple[int, ...]:
    if axes is None:
        return tuple(range(ndim))
    if isinstance(axes, int):
        axes = (axes,)
    axes = tuple(sorted({a + ndim if a < 0 else a for a in axes}))
    if not axes:
        raise ShapeError("empty reduction axis")
    if any(a < 0 or a >= ndim for a in axes):
        raise ShapeError(f"reduction axes {axes} invalid for rank {ndim}")
    return axes


class Sum(Function):
    def forward(self, x, axes=None, keepdims=False):
        self.shape = x.shape
        self.axes = _normalize_axes(axes, x.ndim)
        self.keep_shape = tuple(1 if i in self.axes else n for i, n in enumerate(x.shape))
        return np.asarray(x.sum(axis=self.axes, keepdims=keepdims))

    def backward(self, grad):
        return (np.broadcast_to(grad.reshape(self.keep_shape), self.shape).copy(),)


class Mean(Function):
    def forward(self, x, axes=None, keepdims=False):
        self.shape = x.shape
        self.axes = _normalize_axes(axes, x.ndim)
        self.keep_shape = tuple(1 if i in self.axes else n for i, n in enumerate(x.shape))
        self.count = int(np.prod([x.shape[a] for a in self.axes]))
        return np.asarray(x.mean(axis=self.axes, keepdims=keepdims))

    def backward(self, grad):
        full = np.broadcast_to(grad.reshape(self.keep_shape), self.shape)
        return ((full / self.count).astype(grad.dtype),)


class Max(Function):
    """Maximum over axes; the gradient goes to the lowest linear index among ties."""

    def forward(self, x, axes=None, keepdims=False):
        axes = _normalize_axes(axes, x.ndim)
        kept = tuple(i for i in range(x.ndim) if i not in axes)
        self.perm = kept + axes
        moved = x.transpose(self.perm)
        self.moved_shape = moved.shape
        self.kept_shape = moved.shape[: len(kept)]
        flat = moved.reshape(self.kept_shape + (-1,))
        self.index = flat.argmax(axis=-1)
        out = np.take_along_axis(flat, self.index[..., None], axis=-1)[..., 0]
        if keepdims:
            out = out.reshape(tuple(1 if i in axes else n for i, n in enumerate(x.shape)))
        return np.asarray(out)

    def backward(self, grad):
        flat = np.zeros(self.kept_shape + (int(np.prod(self.moved_shape[len(self.kept_shape):])),),
                        dtype=grad.dtype)
        np.put_along_axis(flat, self.index[..., None], grad.reshape(self.kept_shape)[..., None], -1)
        moved = flat.reshape(self.moved_shape)
        return (moved.transpose(np.argsort(self.perm)),)

    @property
    def argmax(self) -> np.ndarray:
        """Flat index of the selected element within each reduced block."""
        return self.index


def sum(x: Tensor, axes=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    return Sum.apply(x, axes=axes, keepdims=keepdims)


def mean(x: Tensor, axes=None, keepdims: bool = False) -> Tensor:
    return Mean.apply(x, axes=axes, keepdims=keepdims)


def max(x: Tensor, axes=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    return Max.apply(x, axes=axes, keepdims=keepdims)


_REDUCTIONS = {"sum": sum, "mean": mean, "max": max}


def reduce(op: str, x: Tensor, axes=None, keepdims: bool = False) -> Tensor:
    """Dispatch a reduction by name (mean, max, sum)."""
    try:
        fn = _REDUCTIONS[op]
    except KeyError:
        raise ValueError(f"unknown reduction '{op}'") from None
    return fn(x, axes=axes, keepdims=keepdims)


# ===== Linear algebra and layout =====


class MatMul(Function):
    def forward(self, a, b):
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
        self.a, self.b = a, b
        return a @ b

    def backward(self, grad):
        return grad @ self.b.T, self.a.T @ grad


class FullyConnected(Function):
    def forward(self, x, w, b):
        if w.ndim != 2 or x.shape[-1] != w.shape[1]:
            raise ShapeError(
                f"fully_connected: input has {x.shape[-1]} features, weight expects {w.shape[1]}"
            )
        if b.shape != (w.shape[0],):
            raise ShapeError(f"fully_connected: bias shape {b.shape}, expected ({w.shape[0]},)")
        self.x, self.w = x, w
        return x @ w.T + b

    def backward(self, grad):
        flat_g = grad.reshape(-1, grad.shape[-1])
        flat_x = self.x.reshape(-1, self.x.shape[-1])
        return grad @ self.w, flat_g.T @ flat_x, flat_g.sum(axis=0)


class Reshape(Function):
    def forward(self, x, shape=()):
        self.shape = x.shape
        return x.reshape(shape)

    def backward(self, grad):
        return (grad.reshape(self.shape),)


class Transpose(Function):
    def forward(self, x, perm=None):
        self.perm = tuple(perm) if perm is not None else tuple(reversed(range(x.ndim)))
        return x.transpose(self.perm)

    def backward(self, grad):
        return (grad.transpose(np.argsort(self.perm)),)


class Concat(Function):
    def forward(self, *xs, axis=0):
        self.axis = axis
        self.sizes = [x.shape[axis] for x in xs]
        try:
            return np.concatenate(xs, axis=axis)
        except ValueError as e:
            raise ShapeError(f"concat: {e}") from e

    def backward(self, grad):
        splits = np.cumsum(self.sizes)[:-1]
        return tuple(np.split(grad, splits, axis=self.axis))


class Take(Function):
    def forward(self, x, indices=(), axis=0):
        self.shape = x.shape
        self.indices = np.asarray(indices, dtype=np.int64)
        self.axis = axis
        return np.take(x, self.indices, axis=axis)

    def backward(self, grad):
        out = np.zeros(self.shape, dtype=grad.dtype)
        np.add.at(np.moveaxis(out, self.axis, 0), self.indices, np.moveaxis(grad, self.axis, 0))
        return (out,)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return MatMul.apply(a, b)


def fully_connected(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map per row: ``x @ weight.T + bias`` over the last axis."""
    if bias is None:
        bias = Tensor(np.zeros(weight.shape[0]), dtype=weight.dtype)
    return FullyConnected.apply(x, weight, bias)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    return Reshape.apply(x, shape=tuple(shape))


def transpose(x: Tensor, perm: tuple[int, ...] | None = None) -> Tensor:
    return Transpose.apply(x, perm=perm)


def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    return Concat.apply(*tensors, axis=axis)


def take(x: Tensor, indices, axis: int = 0) -> Tensor:
    return Take.apply(x, indices=indices, axis=axis)


# ===== Convolution and spatial ops =====


class Conv2d(Function):
    """Cross-correlation over T×C×H×W input with an O×C×k×k kernel."""

    def forward(self, x, w, b, stride=1, padding=0):
        if x.ndim != 4 or w.ndim != 4:
            raise ShapeError(f"conv2d expects rank-4 input and weight, got {x.shape}, {w.shape}")
        n, c, h, wd = x.shape
        o, cw, kh, kw = w.shape
        if c != cw:
            raise ShapeError(f"conv2d: input has {c} channels, weight expects {cw}")
        if b.shape != (o,):
            raise ShapeError(f"conv2d: bias shape {b.shape}, expected ({o},)")
        ho = (h + 2 * padding - kh) // stride + 1
        wo = (wd + 2 * padding - kw) // stride + 1
        if ho < 1 or wo < 1:
            raise ShapeError(
                f"conv2d: input {h}x{wd} too small for kernel {kh}x{kw} "
                f"with padding {padding}, stride {stride}"
            )
        xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x
        windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
        windows = windows[:, :, :ho, :wo]
        self.windows, self.w = windows, w
        self.stride, self.padding = stride, padding
        self.in_shape, self.padded_shape = x.shape, xp.shape
        out = np.tensordot(windows, w, axes=([1, 4, 5], [1, 2, 3]))
        return np.ascontiguousarray(out.transpose(0, 3, 1, 2)) + b[None, :, None, None]

    def backward(self, grad):
        s, p = self.stride, self.padding
        _, _, ho, wo = grad.shape
        kh, kw = self.w.shape[2:]
        dw = np.tensordot(grad, self.windows, axes=([0, 2, 3], [0, 2, 3]))
        db = grad.sum(axis=(0, 2, 3))
        cols = np.tensordot(grad, self.w, axes=([1], [0]))
        dxp = np.zeros(self.padded_shape, dtype=grad.dtype)
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i : i + s * (ho - 1) + 1 : s, j : j + s * (wo - 1) + 1 : s] += cols[
                    :, :, :, :, i, j
                ].transpose(0, 3, 1, 2)
        h, wd = self.in_shape[2:]
        return dxp[:, :, p : p + h, p : p + wd], dw, db


def conv2d(
    x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1, padding: int = 0
) -> Tensor:
    """Output spatial size is ``floor((H + 2p - k) / s) + 1``."""
    if bias is None:
        bias = Tensor(np.zeros(weight.shape[0]), dtype=weight.dtype)
    return Conv2d.apply(x, weight, bias, stride=stride, padding=padding)


class ScaleChannels(Function):
    """Multiply T×C×H×W features by per-(frame, channel) gates T×C."""

    def forward(self, x, g):
        if x.ndim != 4 or g.shape != x.shape[:2]:
            raise ShapeError(f"scale_channels: gates {g.shape} do not match features {x.shape}")
        self.x, self.g = x, g
        return x * g[:, :, None, None]

    def backward(self, grad):
        return grad * self.g[:, :, None, None], (grad * self.x).sum(axis=(2, 3))


def scale_channels(x: Tensor, gates: Tensor) -> Tensor:
    return ScaleChannels.apply(x, gates)


class ResizeNearest(Function):
    def forward(self, x, size=(1, 1)):
        if x.ndim != 4:
            raise ShapeError(f"resize_nearest expects rank-4 input, got {x.shape}")
        h, w = x.shape[2:]
        out_h, out_w = size
        self.rows = (np.arange(out_h) * h) // out_h
        self.cols = (np.arange(out_w) * w) // out_w
        self.shape = x.shape
        return x[:, :, self.rows][:, :, :, self.cols]

    def backward(self, grad):
        out = np.zeros(self.shape, dtype=grad.dtype)
        np.add.at(out, (slice(None), slice(None), self.rows[:, None], self.cols[None, :]), grad)
        return (out,)


def resize_nearest(x: Tensor, size: tuple[int, int]) -> Tensor:
    """Nearest-neighbour resize: output pixel (i, j) reads ``(floor(i*H/h), floor(j*W/w))``."""
    if tuple(x.shape[2:]) == tuple(size):
        return x
    return ResizeNearest.apply(x, size=tuple(size))


# ===== Softmax family and temporal sums =====


class LogSoftmax(Function):
    def forward(self, x, axis=-1):
        self.axis = axis
        shifted = x - x.max(axis=axis, keepdims=True)
        self.out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
        return self.out

    def backward(self, grad):
        return (grad - np.exp(self.out) * grad.sum(axis=self.axis, keepdims=True),)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    return LogSoftmax.apply(x, axis=axis)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    return exp(log_softmax(x, axis=axis))


class WeightedAddition(Function):
    """
    Convex combination of rows, accumulated as ``f[0] + sum_t w[t] * (f[t] - f[0])``.

    Precondition: the weights sum to one (``weighted_addition`` checks this). Only then is the
    result ``sum_t w[t] * f[t]``; the gradient is that of the accumulated form, in which
    ``w[0]`` does not appear, so ``dw[0]`` is always 0. Returns ``f[0]`` bit-exactly when every
    row is identical.
    """

    def forward(self, f, w):
        if f.ndim != 2 or w.shape != (f.shape[0],):
            raise ShapeError(f"weighted_addition: weights {w.shape} do not match features {f.shape}")
        self.f, self.w = f, w
        acc = f[0].copy()
        for t in range(1, f.shape[0]):
            acc += w[t] * (f[t] - f[0])
        return acc

    def backward(self, grad):
        f, w = self.f, self.w
        dw = np.zeros_like(w)
        dw[1:] = (f[1:] - f[0]) @ grad
        df = w[:, None] * grad[None, :]
        df[0] = grad * (1 - w[1:].sum())
        return df.astype(grad.dtype), dw.astype(grad.dtype)


class WeightedSum(Function):
    """Plain ``sum_t w[t] * f[t]`` for unnormalized weights."""

    def forward(self, f, w):
        if f.ndim != 2 or w.shape != (f.shape[0],):
            raise ShapeError(f"weighted_sum: weights {w.shape} do not match features {f.shape}")
        self.f, self.w = f, w
        return w @ f

    def backward(self, grad):
        return self.w[:, None] * grad[None, :], self.f @ grad
