"""Losses, PK batch sampling, augmentation, the training loop and configuration sweeps."""

from .losses import batch_hard_indices, id_loss, triplet_loss
from .sampler import PKSampler
from .trainer import Batch, EpochMetrics, Trainer, TrainConfig, TrainingLog, train_epoch

__all__ = [
    "Batch",
    "EpochMetrics",
    "PKSampler",
    "TrainConfig",
    "Trainer",
    "TrainingLog",
    "batch_hard_indices",
    "id_loss",
    "train_epoch",
    "triplet_loss",
]
