"""End-to-end run helpers shared by the CLI and the ablation runner."""

from dataclasses import dataclass
from pathlib import Path

import structlog

from src.common.config import RunConfig
from src.core.data.loader import ClipLoader
from src.core.data.manifest import DatasetManifest
from src.core.evaluation.extract import extract_descriptors
from src.core.evaluation.metrics import EvalProtocol, EvalReport, evaluate
from src.core.flow.horn_schunck import FlowParams
from src.core.models.network import ReidNetwork, build_model
from src.core.tensor.tensor import set_default_dtype
from src.core.training.trainer import EpochMetrics, Trainer, TrainConfig, TrainingLog

logger = structlog.get_logger(__name__)

CHECKPOINT_NAME = "model.frid"
LOG_NAME = "train_log.csv"


@dataclass
class TrainingRun:
    model: ReidNetwork
    history: list[EpochMetrics]
    evaluations: list[tuple[int, EvalReport]]


def flow_params(config: RunConfig) -> FlowParams:
    return FlowParams(
        alpha=config.flow_alpha,
        iterations=config.flow_iterations,
        cap=config.flow_cap,
        presmooth=config.flow_presmooth,
    )


def make_loader(config: RunConfig, manifest: DatasetManifest) -> ClipLoader:
    return ClipLoader(manifest, flow_source=config.flow_source, flow_params=flow_params(config))


def evaluate_model(
    model: ReidNetwork,
    config: RunConfig,
    loader: ClipLoader,
    seq_len: int | None = None,
) -> EvalReport:
    """Extract query and gallery descriptors at ``seq_len`` frames and score them."""
    seq_len = seq_len or config.eval_seq_len
    manifest = loader.manifest

    def descriptors(split: str):
        return extract_descriptors(
            model,
            loader,
            manifest.split(split),
            seq_len,
            config.frame_height,
            config.frame_width,
            config.flow_cap,
        ).descriptors

    return evaluate(descriptors("query"), descriptors("gallery"), EvalProtocol(distance=config.distance))


def train_model(
    config: RunConfig,
    manifest: DatasetManifest,
    out_dir: Path | str | None = None,
) -> TrainingRun:
    """
    Build and train a network on the train split; when ``out_dir`` is given, the checkpoint
    and the epoch log are written there.
    """
    set_default_dtype(config.precision)
    loader = make_loader(config, manifest)
    records = manifest.split("train")
    model = build_model(config, num_identities=len({r.identity for r in records}))

    log = checkpoint = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        log = TrainingLog(out_dir / LOG_NAME, log_seconds=config.log_seconds)
        checkpoint = out_dir / CHECKPOINT_NAME

    trainer = Trainer(model, loader, records, TrainConfig.from_run_config(config), log)
    evaluations: list[tuple[int, EvalReport]] = []

    def periodic_eval(epoch: int) -> None:
        report = evaluate_model(model, config, loader)
        evaluations.append((epoch, report))
        logger.info("Periodic evaluation", epoch=epoch, rank1=round(report.rank(1), 4), map=round(report.map, 4))

    history = trainer.fit(checkpoint, config.evaluate_every, periodic_eval)
    return TrainingRun(model, history, evaluations)
