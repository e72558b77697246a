"""
Configuration sweeps: attention inject stage, evaluation sequence length, and the
attention × aggregation grid. Each setting is trained once per seed and the metrics are
averaged over seeds.
"""

from pathlib import Path

import numpy as np
import structlog
from pydantic import BaseModel

from src.common.config import RunConfig, with_overrides
from src.common.errors import ConfigError, DatasetIOError
from src.core.data.manifest import read_manifest
from src.core.training.pipeline import evaluate_model, make_loader, train_model
from src.worker.pool import parallel_map

logger = structlog.get_logger(__name__)

AXES = ("layer", "seqlen", "module")
LAYERS = (2, 3, 4, 5)
SEQ_LENGTHS = (2, 4, 6, 8, 16)
MODULE_GRID = tuple((mode, agg) for mode in ("none", "gated", "mutual") for agg in ("avg", "weighted"))
SEQLEN_METHODS = (("none", "avg"), ("mutual", "weighted"))
REPORTED_RANKS = (1, 5)


class AblationRow(BaseModel):
    axis: str
    setting: str
    metrics: dict[str, float]


def layer_config(config: RunConfig, layer: int) -> RunConfig:
    """Inject at ``layer``; injecting after the last stage appends one more stage."""
    channels = list(config.stage_channels)
    while layer >= len(channels):
        channels.append(channels[-1])
    return with_overrides(config, inject_stage=layer, stage_channels=channels)


def _metrics(report, prefix: str = "") -> dict[str, float]:
    values = {f"{prefix}rank{k}": report.rank(k) for k in REPORTED_RANKS}
    values[f"{prefix}mAP"] = report.map
    return values


def _run_job(job: tuple[RunConfig, str, tuple[int, ...]]) -> list[dict[str, float]]:
    """Train one configuration and evaluate it at each requested sequence length."""
    config, manifest_path, eval_lengths = job
    manifest = read_manifest(manifest_path)
    run = train_model(config, manifest)
    loader = make_loader(config, manifest)
    return [_metrics(evaluate_model(run.model, config, loader, length)) for length in eval_lengths]


def plan(axis: str, config: RunConfig) -> list[tuple[str, RunConfig, tuple[int, ...]]]:
    """(setting label, configuration, evaluation lengths) for every cell of an axis."""
    if axis == "layer":
        return [(f"layer{layer}", layer_config(config, layer), (config.eval_seq_len,)) for layer in LAYERS]
    if axis == "seqlen":
        return [
            (f"{mode}+{agg}", with_overrides(config, mode=mode, agg=agg), SEQ_LENGTHS)
            for mode, agg in SEQLEN_METHODS
        ]
    if axis == "module":
        return [
            (f"{mode}+{agg}", with_overrides(config, mode=mode, agg=agg), (config.eval_seq_len,))
            for mode, agg in MODULE_GRID
        ]
    raise ConfigError(f"unknown ablation axis '{axis}'; expected one of {', '.join(AXES)}")


def run_ablation(
    axis: str, config: RunConfig, manifest_path: Path | str, workers: int | None = None
) -> list[AblationRow]:
    cells = plan(axis, config)
    jobs = [
        (with_overrides(cell_config, seed=seed), str(manifest_path), lengths)
        for _, cell_config, lengths in cells
        for seed in config.seeds
    ]
    results = parallel_map(_run_job, jobs, workers=workers, label=f"ablate-{axis}")

    per_cell: list[list[list[dict[str, float]]]] = []
    for index in range(len(cells)):
        per_cell.append(results[index * len(config.seeds) : (index + 1) * len(config.seeds)])

    def averaged(runs: list[dict[str, float]]) -> dict[str, float]:
        return {key: float(np.mean([run[key] for run in runs])) for key in runs[0]}

    rows = []
    if axis == "seqlen":
        for position, length in enumerate(SEQ_LENGTHS):
            metrics: dict[str, float] = {}
            for (label, _, _), seed_runs in zip(cells, per_cell):
                cell = averaged([runs[position] for runs in seed_runs])
                metrics.update({f"{label}_{key}": value for key, value in cell.items()})
            rows.append(AblationRow(axis=axis, setting=f"len{length}", metrics=metrics))
    else:
        for (label, _, _), seed_runs in zip(cells, per_cell):
            rows.append(AblationRow(axis=axis, setting=label, metrics=averaged([runs[0] for runs in seed_runs])))

    for row in rows:
        logger.info("Ablation row", axis=axis, setting=row.setting, **{k: round(v, 4) for k, v in row.metrics.items()})
    return rows


def ablation_csv(rows: list[AblationRow]) -> str:
    columns: list[str] = []
    for row in rows:
        columns.extend(key for key in row.metrics if key not in columns)
    lines = [",".join(["axis", "setting"] + columns)]
    for row in rows:
        values = [f"{row.metrics[key]:.6f}" if key in row.metrics else "" for key in columns]
        lines.append(",".join([row.axis, row.setting] + values))
    return "\n".join(lines) + "\n"


def write_ablation_csv(path: Path | str, rows: list[AblationRow]) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(ablation_csv(rows), encoding="utf-8")
    except OSError as e:
        raise DatasetIOError(f"cannot write ablation table: {e}", path) from e
    return path
