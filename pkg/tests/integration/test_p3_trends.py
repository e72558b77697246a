"""
Priority 3: learning trends and ablation sweeps.

The tiny synthetic set checks that training learns and that every sweep produces its rows.
Ranking trends across attention modes and the localization of the learned maps need the
default benchmark, several seeds and the full epoch budget; those tests are marked ``slow``
and run only with ``--run-slow``.
"""

from pathlib import Path

import numpy as np
import pytest

from src.core.training.ablation import (
    LAYERS,
    MODULE_GRID,
    SEQ_LENGTHS,
    ablation_csv,
    plan,
    run_ablation,
)
from src.common.config import RunConfig
from src.core.evaluation.extract import extract_descriptors
from src.core.evaluation.metrics import localization_ratio
from src.core.models.attention import NEUTRAL_GATE
from src.core.training.pipeline import make_loader, train_model


@pytest.mark.p3
def test_identity_loss_decreases(tiny_run_config, tiny_dataset):
    """Test that the identity loss of the two training identities falls over ten epochs."""
    config = tiny_run_config.model_copy(update={"epochs": 10, "lr": 1e-2, "mode": "none", "agg": "avg"})
    history = train_model(config, tiny_dataset).history
    losses = [m.id_loss for m in history]
    assert all(np.isfinite(losses))
    assert np.mean(losses[-3:]) < np.mean(losses[:3]), f"id losses {losses}"


@pytest.mark.p3
def test_periodic_evaluation(tiny_run_config, tiny_dataset):
    """Test that evaluate_every scores the query split against the gallery during training."""
    config = tiny_run_config.model_copy(update={"epochs": 2, "evaluate_every": 1})
    run = train_model(config, tiny_dataset)
    assert [epoch for epoch, _ in run.evaluations] == [1, 2]
    assert all(0.0 <= report.map <= 1.0 for _, report in run.evaluations)


@pytest.mark.p3
def test_layer_plan_appends_a_stage_for_the_last_position(tiny_run_config):
    """Test that each layer cell injects where named, growing the backbone when needed."""
    cells = plan("layer", tiny_run_config)
    assert [config.inject_stage for _, config, _ in cells] == list(LAYERS)
    assert all(config.inject_stage < len(config.stage_channels) for _, config, _ in cells)


@pytest.mark.p3
@pytest.mark.parametrize(
    "axis, rows",
    [("layer", len(LAYERS)), ("seqlen", len(SEQ_LENGTHS)), ("module", len(MODULE_GRID))],
)
def test_ablation_sweep_rows(axis, rows, tiny_run_config, tiny_dataset):
    """Test that every sweep yields one averaged row per setting with bounded metrics."""
    config = tiny_run_config.model_copy(update={"seeds": [0, 1]})
    manifest_path = Path(tiny_dataset.root) / "manifest.txt"
    result = run_ablation(axis, config, manifest_path, workers=1)
    assert len(result) == rows
    assert all(0.0 <= value <= 1.0 for row in result for value in row.metrics.values())
    header = ablation_csv(result).splitlines()[0].split(",")
    assert header[:2] == ["axis", "setting"]
    if axis == "seqlen":
        assert "mutual+weighted_rank1" in header and "none+avg_mAP" in header
    else:
        assert header[2:] == ["rank1", "rank5", "mAP"]


# ===== Full-budget trends on the default benchmark =====

SEEDS = [0, 1, 2]


def benchmark_config(benchmark, **changes) -> RunConfig:
    return RunConfig(data_dir=benchmark.root, seeds=SEEDS, log_seconds=False, **changes)


def ranked_above(higher: float, lower: float) -> bool:
    """At least one rank-1 point ahead, or both past 98%."""
    return higher - lower >= 0.01 or (higher > 0.98 and lower > 0.98)


@pytest.mark.p3
@pytest.mark.slow
def test_module_ordering_over_seeds(default_benchmark):
    """Test mutual+weighted ≥ gated+avg ≥ none+avg on rank-1 averaged over three seeds."""
    manifest_path = Path(default_benchmark.root) / "manifest.txt"
    rows = run_ablation("module", benchmark_config(default_benchmark), manifest_path)
    rank1 = {row.setting: row.metrics["rank1"] for row in rows}
    assert ranked_above(rank1["mutual+weighted"], rank1["gated+avg"]), rank1
    assert ranked_above(rank1["gated+avg"], rank1["none+avg"]), rank1


@pytest.mark.p3
@pytest.mark.slow
def test_longer_clips_help_attention_but_not_averaging(default_benchmark):
    """Test that mutual+weighted holds up from 4 to 16 frames while none+avg does not gain."""
    manifest_path = Path(default_benchmark.root) / "manifest.txt"
    rows = {row.setting: row.metrics for row in run_ablation("seqlen", benchmark_config(default_benchmark), manifest_path)}
    short, long = rows["len4"], rows["len16"]
    assert long["mutual+weighted_rank1"] >= short["mutual+weighted_rank1"] - 0.005, rows
    assert long["none+avg_rank1"] <= short["none+avg_rank1"] + 0.005, rows


@pytest.mark.p3
@pytest.mark.slow
def test_mutual_attention_localizes_the_person(default_benchmark):
    """Test that trained maps vary and weigh the sprite at least twice the background above 0.5."""
    config = benchmark_config(default_benchmark)
    run = train_model(config, default_benchmark)
    extraction = extract_descriptors(
        run.model,
        make_loader(config, default_benchmark),
        default_benchmark.split("query"),
        config.eval_seq_len,
        config.frame_height,
        config.frame_width,
        config.flow_cap,
        keep_attention=True,
    )
    assert len(extraction.attention) >= 50
    maps = np.concatenate(extraction.attention)
    masks = np.concatenate(extraction.masks)
    assert maps.std() > 1e-3
    assert localization_ratio(maps, masks, neutral=NEUTRAL_GATE) >= 2.0
