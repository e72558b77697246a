"""Shared pytest fixtures."""

import numpy as np
import pytest

from src.common.config import RunConfig
from src.core.data.generator import GeneratorConfig, generate
from src.core.tensor.tensor import default_dtype, get_default_dtype, set_default_dtype


@pytest.fixture(autouse=True)
def restore_default_dtype():
    """Runs that switch precision must not leak it into other tests."""
    previous = get_default_dtype()
    yield
    set_default_dtype(previous)


@pytest.fixture
def float64():
    """Create tensors in 64-bit precision for the duration of a test."""
    with default_dtype("float64"):
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    """Four identities (two train, two test), two clips per camera, 8 frames of 32×16."""
    out = tmp_path_factory.mktemp("tiny_dataset")
    config = GeneratorConfig(
        seed=3, num_identities=4, clips_per_identity=2, frames_per_clip=8, height=32, width=16
    )
    return generate(config, out, workers=1)


@pytest.fixture
def tiny_run_config(tiny_dataset, tmp_path):
    """Small, fast network settings matched to ``tiny_dataset``."""
    return RunConfig(
        seed=0,
        workers=1,
        precision="float64",
        data_dir=tiny_dataset.root,
        out_dir=str(tmp_path / "run"),
        frame_height=32,
        frame_width=16,
        flow_source="ground_truth",
        stage_channels=[4, 8, 8],
        inject_stage=2,
        descriptor_dim=8,
        seq_len=2,
        eval_seq_len=4,
        identities_per_batch=2,
        clips_per_identity=2,
        epochs=1,
        augment=False,
        log_seconds=False,
    )


def pytest_addoption(parser):
    parser.addoption(
        "--run-slow",
        action="store_true",
        default=False,
        help="run full-budget training tests on the default benchmark",
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope="session")
def default_benchmark(tmp_path_factory):
    """The default synthetic benchmark: 32 identities, 4 clips per camera, 16 frames of 64×32."""
    out = tmp_path_factory.mktemp("default_benchmark")
    return generate(GeneratorConfig(seed=0), out)
