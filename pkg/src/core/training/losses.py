"""Identity (softmax cross-entropy) and batch-hard triplet losses."""

import numpy as np

from src.common.errors import ConfigError, ShapeError
from src.core.tensor import ops
from src.core.tensor.tensor import Tensor

_DIST_EPS = 1e-12


def id_loss(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean over the batch of ``-log softmax(logits)[label]``."""
    labels = np.asarray(labels, dtype=np.int64)
    batch, classes = logits.shape
    if labels.shape != (batch,):
        raise ShapeError(f"{labels.shape} labels for {batch} logits rows")
    if labels.min() < 0 or labels.max() >= classes:
        raise ConfigError(f"labels must lie in 0..{classes - 1}")
    one_hot = np.zeros((batch, classes), dtype=logits.dtype)
    one_hot[np.arange(batch), labels] = 1.0
    picked = ops.sum(ops.mul(ops.log_softmax(logits, axis=1), Tensor(one_hot, dtype=logits.dtype)))
    return ops.scale(picked, -1.0 / batch)


def pairwise_distances(x: np.ndarray) -> np.ndarray:
    diff = x[:, None, :] - x[None, :, :]
    return np.sqrt((diff * diff).sum(axis=-1))


def check_pk_labels(labels: np.ndarray) -> None:
    """At least two identities, each with at least two clips."""
    identities, counts = np.unique(labels, return_counts=True)
    if len(identities) < 2:
        raise ConfigError("triplet loss needs at least two identities per batch")
    if counts.min() < 2:
        raise ConfigError("triplet loss needs at least two clips per identity")


def batch_hard_indices(descriptors: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """
    Hardest positive (farthest same-identity clip) and hardest negative (closest other
    identity) for every anchor. Ties resolve to the lowest batch index.
    """
    labels = np.asarray(labels)
    dist = pairwise_distances(descriptors)
    same = labels[:, None] == labels[None, :]
    others = ~np.eye(len(labels), dtype=bool)
    positive = np.where(same & others, dist, -np.inf).argmax(axis=1)
    negative = np.where(~same, dist, np.inf).argmin(axis=1)
    return positive, negative


def _distance(a: Tensor, b: Tensor) -> Tensor:
    diff = ops.sub(a, b)
    sq = ops.sum(ops.mul(diff, diff), axes=1)
    return ops.sqrt(ops.add(sq, Tensor(np.full(sq.shape, _DIST_EPS), dtype=sq.dtype)))


def triplet_loss(descriptors: Tensor, labels: np.ndarray, margin: float) -> Tensor:
    """``mean_a max(0, d(a, p*) - d(a, n*) + margin)`` with batch-hard p*, n*."""
    labels = np.asarray(labels)
    if labels.shape != (descriptors.shape[0],):
        raise ShapeError(f"{labels.shape} labels for {descriptors.shape[0]} descriptors")
    check_pk_labels(labels)
    positive, negative = batch_hard_indices(descriptors.data, labels)
    d_pos = _distance(descriptors, ops.take(descriptors, positive, axis=0))
    d_neg = _distance(descriptors, ops.take(descriptors, negative, axis=0))
    offset = Tensor(np.full(d_pos.shape, margin), dtype=d_pos.dtype)
    return ops.mean(ops.relu(ops.add(ops.sub(d_pos, d_neg), offset)))
