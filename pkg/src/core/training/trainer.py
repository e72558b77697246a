"""
Optimization loop for the combined identity + triplet objective.

Every epoch draws its batches, windows and augmentations from a generator seeded by
``(seed, epoch)``, so two runs with the same seed follow the same trajectory.
"""

import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
import structlog
from pydantic import BaseModel, Field, model_validator

from src.common.config import RunConfig
from src.common.errors import ConfigError, DatasetIOError, NumericalError
from src.common.utils import make_rng
from src.core.data.loader import ClipLoader, FlowClip, FrameClip
from src.core.data.manifest import ClipRecord
from src.core.data.transforms import clip_arrays
from src.core.models.network import ReidNetwork, forward_model
from src.core.tensor import ops
from src.core.tensor.checkpoint import save_checkpoint
from src.core.tensor.optim import Adam
from src.core.training.augment import augment_clip
from src.core.training.losses import id_loss, triplet_loss
from src.core.training.sampler import PKSampler

logger = structlog.get_logger(__name__)

LOG_HEADER = "epoch,id_loss,triplet_loss,lr,seconds"


class TrainConfig(BaseModel):
    seq_len: int = Field(4, ge=1)
    identities_per_batch: int = 8
    clips_per_identity: int = 4
    lr: float = Field(3e-4, ge=0)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    margin: float = Field(0.3, ge=0)
    lambda_id: float = 1.0
    lambda_tri: float = 1.0
    epochs: int = Field(150, ge=0)
    seed: int = 0
    augment: bool = True
    frame_height: int = 64
    frame_width: int = 32
    flow_cap: float = 16.0

    @model_validator(mode="after")
    def _check_pk(self) -> "TrainConfig":
        if self.identities_per_batch < 2:
            raise ValueError("identities_per_batch (P) must be at least 2")
        if self.clips_per_identity < 2:
            raise ValueError("clips_per_identity (K) must be at least 2")
        return self

    @classmethod
    def from_run_config(cls, config: RunConfig) -> "TrainConfig":
        return cls(
            **{name: getattr(config, name) for name in cls.model_fields if hasattr(config, name)}
        )


@dataclass
class Batch:
    """P identities × K clips, with the stacked network inputs."""

    clips: list[tuple[FrameClip, FlowClip, int]]
    frames: np.ndarray
    flows: np.ndarray
    labels: np.ndarray


class EpochMetrics(BaseModel):
    epoch: int
    id_loss: float
    triplet_loss: float
    lr: float
    seconds: float
    batches: int = 0

    def csv_row(self, log_seconds: bool = True) -> str:
        seconds = self.seconds if log_seconds else 0.0
        return f"{self.epoch},{self.id_loss:.8f},{self.triplet_loss:.8f},{self.lr:g},{seconds:.3f}"


class TrainingLog:
    """Append-only CSV of per-epoch metrics."""

    def __init__(self, path: Path | str, log_seconds: bool = True):
        self.path = Path(path)
        self.log_seconds = log_seconds

    def append(self, metrics: EpochMetrics) -> None:
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            new = not self.path.exists() or self.path.stat().st_size == 0
            with self.path.open("a", encoding="utf-8") as handle:
                if new:
                    handle.write(LOG_HEADER + "\n")
                handle.write(metrics.csv_row(self.log_seconds) + "\n")
        except OSError as e:
            raise DatasetIOError(f"cannot append training log: {e}", self.path) from e


def label_space(records: list[ClipRecord]) -> dict[int, int]:
    """Map dataset identities to contiguous class indices."""
    return {identity: index for index, identity in enumerate(sorted({r.identity for r in records}))}


class Trainer:
    def __init__(
        self,
        model: ReidNetwork,
        loader: ClipLoader,
        records: list[ClipRecord],
        config: TrainConfig,
        log: TrainingLog | None = None,
    ):
        self.model = model
        self.loader = loader
        self.config = config
        self.log = log
        self.records = [r for r in records if r.length >= config.seq_len]
        skipped = len(records) - len(self.records)
        if skipped:
            logger.warning("Skipping short tracklets", count=skipped, seq_len=config.seq_len)

        self.labels = label_space(self.records)
        if len(self.labels) > model.config.num_identities:
            raise ConfigError(
                f"{len(self.labels)} training identities but the classifier has "
                f"{model.config.num_identities} outputs"
            )
        self.sampler = PKSampler(self.records, config.identities_per_batch, config.clips_per_identity)
        self.optimizer = Adam(
            model.parameters(), lr=config.lr, betas=(config.beta1, config.beta2), eps=config.eps
        )

    def assemble_batch(self, records: list[ClipRecord], rng: np.random.Generator) -> Batch:
        clips, frames, flows = [], [], []
        for record in records:
            frame_clip, flow_clip = self.loader.load(
                record.clip_id, self.config.seq_len, "random-contiguous", rng
            )
            x, f = clip_arrays(
                frame_clip,
                flow_clip,
                self.config.frame_height,
                self.config.frame_width,
                self.config.flow_cap,
            )
            if self.config.augment:
                x, f = augment_clip(x, f, rng)
            clips.append((frame_clip, flow_clip, self.labels[record.identity]))
            frames.append(x)
            flows.append(f)
        labels = np.array([label for _, _, label in clips], dtype=np.int64)
        return Batch(clips, np.stack(frames), np.stack(flows), labels)

    def train_step(self, batch: Batch) -> tuple[float, float]:
        output = forward_model(batch.frames, batch.flows, self.model, self.model.config.mode)
        loss_id = id_loss(output.logits, batch.labels)
        loss_tri = triplet_loss(output.descriptors, batch.labels, self.config.margin)
        total = ops.add(
            ops.scale(loss_id, self.config.lambda_id), ops.scale(loss_tri, self.config.lambda_tri)
        )
        values = (loss_id.item(), loss_tri.item(), total.item())
        if not all(math.isfinite(v) for v in values):
            raise NumericalError(
                "non-finite loss",
                diagnostics={
                    "id_loss": values[0],
                    "triplet_loss": values[1],
                    "step": self.optimizer.steps,
                    "clips": [clip.clip_id for clip, _, _ in batch.clips],
                },
            )
        self.optimizer.zero_grad()
        total.backward()
        self.optimizer.step()
        return values[0], values[1]

    def train_epoch(self, epoch: int) -> EpochMetrics:
        rng = make_rng(self.config.seed, epoch)
        started = time.perf_counter()
        id_losses, tri_losses = [], []
        for records in self.sampler.batches(rng):
            loss_id, loss_tri = self.train_step(self.assemble_batch(records, rng))
            id_losses.append(loss_id)
            tri_losses.append(loss_tri)
        metrics = EpochMetrics(
            epoch=epoch,
            id_loss=float(np.mean(id_losses)) if id_losses else 0.0,
            triplet_loss=float(np.mean(tri_losses)) if tri_losses else 0.0,
            lr=self.config.lr,
            seconds=time.perf_counter() - started,
            batches=len(id_losses),
        )
        logger.info(
            "Epoch complete",
            epoch=epoch,
            id_loss=round(metrics.id_loss, 6),
            triplet_loss=round(metrics.triplet_loss, 6),
            batches=metrics.batches,
        )
        if self.log is not None:
            self.log.append(metrics)
        return metrics

    def fit(
        self,
        checkpoint_path: Path | str | None = None,
        evaluate_every: int = 0,
        evaluate: Callable[[int], object] | None = None,
    ) -> list[EpochMetrics]:
        history = []
        for epoch in range(1, self.config.epochs + 1):
            history.append(self.train_epoch(epoch))
            if checkpoint_path is not None:
                save_checkpoint(checkpoint_path, self.model.state_dict())
            if evaluate is not None and evaluate_every and epoch % evaluate_every == 0:
                evaluate(epoch)
        return history


def train_epoch(
    loader: ClipLoader, records: list[ClipRecord], model: ReidNetwork, config: TrainConfig, epoch: int = 1
) -> EpochMetrics:
    """One epoch over ``records`` with a fresh optimizer."""
    return Trainer(model, loader, records, config).train_epoch(epoch)
