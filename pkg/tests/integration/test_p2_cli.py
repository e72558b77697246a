"""
Priority 2: end-to-end runs of the ``frid`` command line.

Every subcommand is driven in-process through ``main(argv)`` against small synthetic
datasets rendered into pytest temporary directories.
"""

from pathlib import Path

import numpy as np
import pytest

from src.cli import commands
from src.cli.main import main
from src.core.evaluation.fvec import read_fvec, write_fvec
from src.core.evaluation.metrics import DescriptorSet

SMALL_DATA = ["--ids", "2", "--clips", "1", "--frames", "4", "--height", "32", "--width", "16"]


def tree_bytes(root: Path) -> dict[str, bytes]:
    return {
        str(path.relative_to(root)): path.read_bytes()
        for path in sorted(root.rglob("*"))
        if path.is_file() and not path.name.endswith("_config.txt")
    }


@pytest.fixture
def small_dataset(tmp_path):
    out = tmp_path / "data"
    assert main(["gen-data", "--seed", "7", "--workers", "1", "--out", str(out)] + SMALL_DATA) == 0
    return out


@pytest.mark.p2
def test_gen_data_is_byte_deterministic(tmp_path, small_dataset):
    """Test that the same seed renders byte-identical datasets."""
    again = tmp_path / "again"
    assert main(["gen-data", "--seed", "7", "--workers", "2", "--out", str(again)] + SMALL_DATA) == 0
    assert tree_bytes(small_dataset) == tree_bytes(again)
    assert (small_dataset / "gen_data_config.txt").exists()


@pytest.mark.p2
def test_gen_data_rejects_zero_identities(tmp_path, capsys):
    """Test exit code 2 for --ids 0."""
    assert main(["gen-data", "--ids", "0", "--out", str(tmp_path / "none")]) == 2
    assert "error" in capsys.readouterr().err


@pytest.mark.p2
def test_flow_requires_a_manifest(tmp_path):
    """Test exit code 2 when the manifest is missing."""
    assert main(["flow", "--manifest", str(tmp_path / "missing")]) == 2
    assert main(["flow", "--manifest", str(tmp_path)]) == 2


@pytest.mark.p2
def test_flow_is_idempotent(small_dataset):
    """Test that rerunning flow estimation writes identical files and manifest."""
    args = ["flow", "--manifest", str(small_dataset), "--workers", "1", "--iters", "20"]
    assert main(args) == 0
    first = tree_bytes(small_dataset / "flow")
    manifest = (small_dataset / "manifest.txt").read_bytes()
    assert len(first) == 2 * 2 * 4
    assert main(args) == 0
    assert tree_bytes(small_dataset / "flow") == first
    assert (small_dataset / "manifest.txt").read_bytes() == manifest
    assert (small_dataset / "flow_config.txt").exists()


@pytest.mark.p2
def test_train_extract_eval_pipeline(tiny_run_config, tiny_dataset, tmp_path, capsys):
    """Test a full train → extract → eval run and its output files."""
    config_path = tiny_run_config.write(tmp_path, "tiny.txt")
    run_dir = tmp_path / "run"
    assert main(["train", "--config", str(config_path), "--out", str(run_dir), "--epochs", "2"]) == 0
    assert (run_dir / "model.frid").exists()
    assert (run_dir / "resolved_config.txt").exists()
    log = (run_dir / "train_log.csv").read_text().splitlines()
    assert log[0] == "epoch,id_loss,triplet_loss,lr,seconds"
    assert len(log) == 3

    features = {}
    for split in ("query", "gallery"):
        out = tmp_path / f"{split}.fvec"
        argv = [
            "extract", "--checkpoint", str(run_dir / "model.frid"), "--manifest", tiny_dataset.root,
            "--split", split, "--out", str(out),
        ]
        if split == "query":
            argv += ["--dump-attention", str(tmp_path / "attention")]
        assert main(argv) == 0
        features[split] = read_fvec(out)
    assert len(features["query"]) == 4 and features["query"].dim == 8
    assert set(features["query"].cameras) == {0} and set(features["gallery"].cameras) == {1}
    assert len(list((tmp_path / "attention").glob("*.pgm"))) == 4 * tiny_run_config.eval_seq_len
    assert "localization ratio" in capsys.readouterr().out

    report = tmp_path / "report.csv"
    argv = ["eval", "--query", str(tmp_path / "query.fvec"), "--gallery", str(tmp_path / "gallery.fvec"),
            "--ranks", "1,5", "--out", str(report)]
    assert main(argv) == 0
    lines = report.read_text().splitlines()
    assert [line.rsplit(",", 1)[0] for line in lines] == ["rank,1", "rank,5", "mAP"]
    assert all(0.0 <= float(line.rsplit(",", 1)[1]) <= 1.0 for line in lines)
    # the gallery holds both test identities, so rank 5 covers every candidate
    assert float(lines[1].rsplit(",", 1)[1]) == 1.0
    assert "mAP" in capsys.readouterr().out


@pytest.mark.p2
def test_eval_rejects_empty_query(tmp_path):
    """Test exit code 2 for a query file without descriptors."""
    empty = DescriptorSet(vectors=np.zeros((0, 4)), identities=np.zeros(0), cameras=np.zeros(0))
    full = DescriptorSet(vectors=np.ones((2, 4)), identities=np.array([0, 1]), cameras=np.array([1, 1]))
    write_fvec(tmp_path / "q.fvec", empty)
    write_fvec(tmp_path / "g.fvec", full)
    assert main(["eval", "--query", str(tmp_path / "q.fvec"), "--gallery", str(tmp_path / "g.fvec")]) == 2


@pytest.mark.p2
def test_eval_rejects_corrupt_file(tmp_path):
    """Test exit code 4 for a file with the wrong magic bytes."""
    (tmp_path / "q.fvec").write_bytes(b"NOPE\x01\x04\x00\x00\x00")
    assert main(["eval", "--query", str(tmp_path / "q.fvec"), "--gallery", str(tmp_path / "q.fvec")]) == 4


@pytest.mark.p2
def test_train_rejects_invalid_inject_stage(tiny_dataset, tmp_path):
    """Test exit code 2 for --inject-stage 9 before any training starts."""
    argv = ["train", "--data", tiny_dataset.root, "--out", str(tmp_path / "run"), "--inject-stage", "9"]
    assert main(argv) == 2
    assert not (tmp_path / "run" / "model.frid").exists()


@pytest.mark.p2
def test_eval_rejects_zero_byte_files(tmp_path, capsys):
    """Test exit code 2, not a format error, when a descriptor file is empty on disk."""
    full = DescriptorSet(vectors=np.ones((2, 4)), identities=np.array([0, 1]), cameras=np.array([1, 1]))
    write_fvec(tmp_path / "g.fvec", full)
    (tmp_path / "q.fvec").write_bytes(b"")
    assert main(["eval", "--query", str(tmp_path / "q.fvec"), "--gallery", str(tmp_path / "g.fvec")]) == 2
    assert "empty" in capsys.readouterr().err
    assert main(["eval", "--query", str(tmp_path / "g.fvec"), "--gallery", str(tmp_path / "q.fvec")]) == 2


@pytest.mark.p2
@pytest.mark.parametrize("raised", [ValueError("bad value"), KeyError("clip 'x' not in manifest")])
def test_stray_lookup_and_value_errors_exit_with_usage_code(raised, monkeypatch, capsys):
    """Test that plain ValueError and KeyError from a subcommand map to exit code 2."""

    def failing(args):
        raise raised

    monkeypatch.setattr(commands, "evaluate", failing)
    assert main(["eval", "--query", "q.fvec", "--gallery", "g.fvec"]) == 2
    assert "error" in capsys.readouterr().err


@pytest.mark.p2
def test_bad_ranks_exit_with_usage_code(tmp_path):
    """Test exit code 2 for a non-numeric --ranks entry."""
    full = DescriptorSet(vectors=np.ones((2, 4)), identities=np.array([0, 1]), cameras=np.array([1, 1]))
    write_fvec(tmp_path / "g.fvec", full)
    argv = ["eval", "--query", str(tmp_path / "g.fvec"), "--gallery", str(tmp_path / "g.fvec"), "--ranks", "1,x"]
    assert main(argv) == 2


@pytest.mark.p2
def test_ablate_rejects_bad_seed_list(small_dataset, tmp_path):
    """Test exit code 2 for a --seeds entry that is not an integer."""
    argv = ["ablate", "--axis", "module", "--data", str(small_dataset), "--out", str(tmp_path / "sweep"), "--seeds", "0,one"]
    assert main(argv) == 2
