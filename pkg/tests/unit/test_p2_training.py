"""Priority 2: sampler, optimization loop, training log and run determinism."""

import numpy as np
import pytest

from src.common.errors import ConfigError, NumericalError
from src.core.data.manifest import ClipRecord
from src.core.models.network import build_model
from src.core.training.augment import augment_clip, hflip, random_crop
from src.core.training.pipeline import CHECKPOINT_NAME, LOG_NAME, make_loader, train_model
from src.core.training.sampler import PKSampler
from src.core.training.trainer import (
    LOG_HEADER,
    EpochMetrics,
    Trainer,
    TrainConfig,
    TrainingLog,
    label_space,
)
from src.core.tensor.checkpoint import load_checkpoint


def fake_records(identities, clips_each):
    return [
        ClipRecord(clip_id=f"id{i:04d}_c{c % 2}_s{c:02d}", identity=i, camera=c % 2, frames=["x.ppm"] * 8)
        for i in identities
        for c in range(clips_each)
    ]


def tiny_trainer(config, manifest, **changes):
    loader = make_loader(config, manifest)
    records = manifest.split("train")
    model = build_model(config, num_identities=len({r.identity for r in records}))
    train_config = TrainConfig.from_run_config(config).model_copy(update=changes)
    return Trainer(model, loader, records, train_config)


# ===== Sampler =====


@pytest.mark.p2
def test_pk_batches_have_p_identities_of_k_clips(rng):
    """Test that every batch holds exactly P distinct identities with K clips each."""
    sampler = PKSampler(fake_records(range(7), 3), identities_per_batch=3, clips_per_identity=4)
    batches = sampler.batches(rng)
    assert len(batches) == len(sampler) == 2
    for batch in batches:
        identities = [r.identity for r in batch]
        assert len(set(identities)) == 3
        assert all(identities.count(i) == 4 for i in set(identities))


@pytest.mark.p2
def test_pk_sampler_is_seeded():
    """Test that equal generators give equal batches."""
    sampler = PKSampler(fake_records(range(6), 4), 2, 2)
    first = sampler.batches(np.random.default_rng(5))
    second = sampler.batches(np.random.default_rng(5))
    assert [[r.clip_id for r in b] for b in first] == [[r.clip_id for r in b] for b in second]


@pytest.mark.p2
def test_pk_sampler_rejects_bad_settings():
    """Test ConfigError for P < 2, K < 2 and a single-identity split."""
    with pytest.raises(ConfigError):
        PKSampler(fake_records(range(4), 2), 1, 2)
    with pytest.raises(ConfigError):
        PKSampler(fake_records(range(4), 2), 2, 1)
    with pytest.raises(ConfigError):
        PKSampler(fake_records([0], 4), 2, 2)


@pytest.mark.p2
def test_train_config_requires_pk_of_two():
    """Test that the training config enforces P ≥ 2 and K ≥ 2."""
    with pytest.raises(ValueError):
        TrainConfig(identities_per_batch=1)
    with pytest.raises(ValueError):
        TrainConfig(clips_per_identity=1)


@pytest.mark.p2
def test_label_space_is_contiguous():
    """Test that sparse identities map to 0..N-1 in sorted order."""
    assert label_space(fake_records([7, 3, 12], 2)) == {3: 0, 7: 1, 12: 2}


# ===== Augmentation =====


@pytest.mark.p2
def test_flip_negates_horizontal_flow(rng):
    """Test that mirroring frames also mirrors and negates the u component."""
    frames = rng.normal(size=(2, 3, 8, 4))
    flows = rng.normal(size=(2, 2, 8, 4))
    flipped_frames, flipped_flows = hflip(frames, flows)
    np.testing.assert_array_equal(flipped_frames, frames[..., ::-1])
    np.testing.assert_array_equal(flipped_flows[:, 0], -flows[:, 0, :, ::-1])
    np.testing.assert_array_equal(flipped_flows[:, 1], flows[:, 1, :, ::-1])


@pytest.mark.p2
def test_crop_keeps_extent_and_is_shared(rng):
    """Test that cropping preserves shapes and shifts every frame by the same offset."""
    frames = np.repeat(rng.normal(size=(1, 3, 16, 8)), 3, axis=0)
    flows = np.zeros((3, 2, 16, 8))
    cropped, cropped_flow = random_crop(frames, flows, rng)
    assert cropped.shape == frames.shape and cropped_flow.shape == flows.shape
    np.testing.assert_array_equal(cropped[0], cropped[2])
    out, out_flow = augment_clip(frames, flows, rng)
    assert out.shape == frames.shape and out_flow.shape == flows.shape


# ===== Trainer =====


@pytest.mark.p2
def test_zero_learning_rate_leaves_parameters_unchanged(tiny_run_config, tiny_dataset, float64):
    """Test that an epoch at lr = 0 computes losses but keeps every parameter."""
    trainer = tiny_trainer(tiny_run_config, tiny_dataset, lr=0.0)
    before = {name: value.copy() for name, value in trainer.model.state_dict().items()}
    metrics = trainer.train_epoch(1)
    assert metrics.batches == 1
    assert metrics.id_loss > 0
    for name, value in trainer.model.state_dict().items():
        np.testing.assert_array_equal(value, before[name], err_msg=name)


@pytest.mark.p2
def test_training_step_changes_parameters(tiny_run_config, tiny_dataset, float64):
    """Test that a nonzero learning rate updates the classifier."""
    trainer = tiny_trainer(tiny_run_config, tiny_dataset)
    before = trainer.model.classifier.w.data.copy()
    trainer.train_epoch(1)
    assert not np.array_equal(trainer.model.classifier.w.data, before)


@pytest.mark.p2
def test_non_finite_loss_raises_numerical_error(tiny_run_config, tiny_dataset, float64):
    """Test that a NaN classifier weight aborts the step with diagnostics."""
    trainer = tiny_trainer(tiny_run_config, tiny_dataset)
    trainer.model.classifier.w.data[0, 0] = np.nan
    with pytest.raises(NumericalError) as info:
        trainer.train_epoch(1)
    assert "clips" in info.value.diagnostics


@pytest.mark.p2
def test_classifier_too_small_for_label_space(tiny_run_config, tiny_dataset, float64):
    """Test ConfigError when training identities exceed the classifier outputs."""
    model = build_model(tiny_run_config, num_identities=1)
    loader = make_loader(tiny_run_config, tiny_dataset)
    with pytest.raises(ConfigError):
        Trainer(model, loader, tiny_dataset.split("train"), TrainConfig.from_run_config(tiny_run_config))


@pytest.mark.p2
def test_training_runs_are_reproducible(tiny_run_config, tiny_dataset, tmp_path):
    """Test that equal seeds give identical checkpoints and logs."""
    config = tiny_run_config.model_copy(update={"epochs": 2})
    train_model(config, tiny_dataset, tmp_path / "a")
    train_model(config, tiny_dataset, tmp_path / "b")
    assert (tmp_path / "a" / CHECKPOINT_NAME).read_bytes() == (tmp_path / "b" / CHECKPOINT_NAME).read_bytes()
    assert (tmp_path / "a" / LOG_NAME).read_text() == (tmp_path / "b" / LOG_NAME).read_text()

    other = train_model(config.model_copy(update={"seed": 1}), tiny_dataset)
    state = load_checkpoint(tmp_path / "a" / CHECKPOINT_NAME)
    assert not np.array_equal(state["classifier.w"], other.model.classifier.w.data)


@pytest.mark.p2
def test_streams_update_independently(tiny_run_config, tiny_dataset, float64):
    """Test that one epoch moves appearance and flow stream weights by different amounts."""
    trainer = tiny_trainer(tiny_run_config, tiny_dataset, lr=1e-2)
    params = dict(trainer.model.named_parameters())
    app, flow = params["app.stage2.conv.w"], params["flow.stage2.conv.w"]
    app_before, flow_before = app.data.copy(), flow.data.copy()
    trainer.train_epoch(1)
    app_delta = app.data - app_before
    flow_delta = flow.data - flow_before
    assert np.abs(app_delta).sum() > 0 and np.abs(flow_delta).sum() > 0
    assert not np.allclose(app_delta, flow_delta)
    assert app is not flow


@pytest.mark.p2
def test_identity_loss_falls_on_repeated_steps(tiny_run_config, tiny_dataset, float64):
    """Test that the cross-entropy decreases at every step on a fixed two-identity batch."""
    trainer = tiny_trainer(tiny_run_config, tiny_dataset, lr=1e-3, lambda_tri=0.0)
    records = [r for r in trainer.records if r.identity == 0][:2] + [r for r in trainer.records if r.identity == 1][:2]
    batch = trainer.assemble_batch(records, np.random.default_rng(0))
    losses = [trainer.train_step(batch)[0] for _ in range(5)]
    assert all(b < a for a, b in zip(losses, losses[1:])), losses


# ===== Training log =====


@pytest.mark.p2
def test_training_log_is_append_only_csv(tmp_path):
    """Test the header, one row per epoch and zeroed seconds when timing is off."""
    log = TrainingLog(tmp_path / "log.csv", log_seconds=False)
    log.append(EpochMetrics(epoch=1, id_loss=0.5, triplet_loss=0.25, lr=3e-4, seconds=12.5))
    log.append(EpochMetrics(epoch=2, id_loss=0.4, triplet_loss=0.2, lr=3e-4, seconds=11.0))
    lines = (tmp_path / "log.csv").read_text().splitlines()
    assert lines[0] == LOG_HEADER
    assert lines[1] == "1,0.50000000,0.25000000,0.0003,0.000"
    assert len(lines) == 3
    assert lines[2].startswith("2,")
