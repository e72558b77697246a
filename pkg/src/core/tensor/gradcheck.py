"""Central finite-difference checks for analytic gradients."""

from typing import Callable

import numpy as np

from src.core.tensor.tensor import Tensor


def numerical_gradients(
    fn: Callable[[], Tensor], inputs: list[Tensor], h: float = 1e-5
) -> list[np.ndarray]:
    """Estimate d fn / d input by central differences, perturbing each entry in place."""
    grads = []
    for tensor in inputs:
        tensor.data = np.ascontiguousarray(tensor.data)
        grad = np.zeros_like(tensor.data)
        flat = tensor.data.reshape(-1)
        out = grad.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            plus = fn().item()
            flat[i] = original - h
            minus = fn().item()
            flat[i] = original
            out[i] = (plus - minus) / (2 * h)
        grads.append(grad)
    return grads


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``||a - n|| / max(||a|| + ||n||, 1e-12)``."""
    denom = max(float(np.linalg.norm(analytic) + np.linalg.norm(numeric)), 1e-12)
    return float(np.linalg.norm(analytic - numeric)) / denom


def gradient_check(fn: Callable[[], Tensor], inputs: list[Tensor], h: float = 1e-5) -> float:
    """
    Compare backward-pass gradients with central differences.

    Args:
        fn: Builds a scalar loss from ``inputs`` (called repeatedly)
        inputs: Tensors with ``requires_grad`` set, ideally float64
        h: Finite-difference step

    Returns:
        float: Largest relative error over all inputs
    """
    for tensor in inputs:
        tensor.zero_grad()
    fn().backward()
    analytic = [
        t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in inputs
    ]
    numeric = numerical_gradients(fn, inputs, h)
    return max(relative_error(a, n) for a, n in zip(analytic, numeric))
