"""Priority 1: distances, CMC/mAP, FVEC files and report rendering."""

import numpy as np
import pytest

from src.common.errors import FormatError, ShapeError
from src.core.evaluation.fvec import decode_fvec, encode_fvec, read_fvec, write_fvec
from src.core.evaluation.metrics import (
    DescriptorSet,
    EvalProtocol,
    average_precision,
    distance_matrix,
    evaluate,
    localization_ratio,
)
from src.core.evaluation.report import format_table, report_csv


def descriptor_set(vectors, identities, cameras):
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim == 1:
        vectors = vectors[:, None]
    return DescriptorSet(
        vectors=vectors,
        identities=np.asarray(identities),
        cameras=np.asarray(cameras),
        clip_ids=[f"c{i:03d}" for i in range(len(vectors))],
    )


# ===== Distances =====


@pytest.mark.p1
def test_distance_examples():
    """Test identical vectors give 0 and orthogonal unit vectors give √2."""
    e = np.eye(2)
    dist = distance_matrix(e, e)
    assert dist[0, 0] == 0.0
    assert dist[0, 1] == pytest.approx(np.sqrt(2), abs=1e-15)
    cos = distance_matrix(e, e, "cosine")
    assert cos[0, 0] == pytest.approx(0.0, abs=1e-15)
    assert cos[0, 1] == pytest.approx(1.0, abs=1e-15)


@pytest.mark.p1
def test_distance_matrix_matches_loop_oracle(rng):
    """Test Euclidean distances against a per-pair loop."""
    q, g = rng.normal(size=(4, 6)), rng.normal(size=(5, 6))
    dist = distance_matrix(q, g)
    for i in range(4):
        for j in range(5):
            assert dist[i, j] == pytest.approx(np.sqrt(sum((q[i] - g[j]) ** 2)), abs=1e-12)


@pytest.mark.p2
def test_distance_dimension_mismatch():
    """Test ShapeError when query and gallery dimensions differ."""
    with pytest.raises(ShapeError):
        distance_matrix(np.zeros((2, 3)), np.zeros((2, 4)))


# ===== CMC / mAP =====


@pytest.mark.p1
def test_correct_match_at_rank_one():
    """Test CMC@1 = 1 and AP = 1 when the correct match ranks first."""
    report = evaluate(descriptor_set([0.0], [0], [0]), descriptor_set([0.1, 5.0], [0, 1], [1, 1]))
    assert report.cmc == [1.0, 1.0]
    assert report.map == 1.0


@pytest.mark.p1
def test_correct_match_at_rank_two():
    """Test CMC@1 = 0, CMC@2 = 1 and AP = 0.5 for a second-ranked match."""
    report = evaluate(descriptor_set([0.0], [0], [0]), descriptor_set([1.0, 0.5], [0, 1], [1, 1]))
    assert report.cmc == [0.0, 1.0]
    assert report.map == pytest.approx(0.5)


@pytest.mark.p1
def test_two_matches_at_ranks_one_and_three():
    """Test AP = (1/1 + 2/3) / 2 ≈ 0.8333."""
    report = evaluate(
        descriptor_set([0.0], [0], [0]), descriptor_set([1.0, 2.0, 3.0], [0, 1, 0], [1, 1, 2])
    )
    assert report.map == pytest.approx((1 + 2 / 3) / 2, abs=1e-12)
    assert report.map == pytest.approx(0.8333, abs=1e-4)


@pytest.mark.p1
def test_same_camera_matches_are_excluded():
    """Test that a same-identity same-camera entry neither helps nor hurts the ranking."""
    queries = descriptor_set([0.0], [0], [0])
    gallery = descriptor_set([0.0, 1.0, 2.0], [0, 1, 0], [0, 1, 1])
    report = evaluate(queries, gallery)
    assert report.cmc[0] == 0.0
    assert report.cmc[1] == 1.0
    assert report.map == pytest.approx(0.5)
    assert len(report.cmc) == 3

    relaxed = evaluate(queries, gallery, EvalProtocol(exclude_same_camera=False))
    assert relaxed.cmc[0] == 1.0


@pytest.mark.p1
def test_queries_without_valid_match_are_excluded():
    """Test that queries whose only matches share their camera are counted and skipped."""
    queries = descriptor_set([0.0, 0.0], [0, 1], [0, 0])
    gallery = descriptor_set([0.0, 1.0], [0, 1], [0, 1])
    report = evaluate(queries, gallery)
    assert report.excluded_queries == 1
    assert report.num_queries == 2
    assert report.cmc[0] == 0.0 and report.cmc[1] == 1.0
    assert report.map == pytest.approx(0.5)


def brute_force(queries, gallery):
    cmc = np.zeros(len(gallery))
    aps, valid = [], 0
    for i in range(len(queries)):
        ranked = sorted(
            (np.linalg.norm(queries.vectors[i] - gallery.vectors[j]), j)
            for j in range(len(gallery))
            if not (gallery.identities[j] == queries.identities[i] and gallery.cameras[j] == queries.cameras[i])
        )
        hits = [rank for rank, (_, j) in enumerate(ranked, start=1) if gallery.identities[j] == queries.identities[i]]
        if not hits:
            continue
        valid += 1
        cmc[hits[0] - 1 :] += 1
        aps.append(np.mean([n / rank for n, rank in enumerate(hits, start=1)]))
    if not valid:
        return cmc, 0.0
    return cmc / valid, np.mean(aps)


@pytest.mark.p1
@pytest.mark.parametrize("seed", range(200))
def test_evaluate_matches_brute_force(seed):
    """Test CMC and mAP against a sort-and-scan oracle on random data."""
    rng = np.random.default_rng(seed)
    queries = descriptor_set(rng.normal(size=(6, 3)), rng.integers(0, 4, 6), rng.integers(0, 2, 6))
    gallery = descriptor_set(rng.normal(size=(12, 3)), np.arange(12) % 4, rng.integers(0, 2, 12))
    report = evaluate(queries, gallery)
    cmc, mean_ap = brute_force(queries, gallery)
    np.testing.assert_allclose(report.cmc, cmc, atol=1e-12)
    assert report.map == pytest.approx(mean_ap, abs=1e-12)


@pytest.mark.p1
def test_metrics_are_monotone_and_permutation_invariant(rng):
    """Test that CMC is non-decreasing in [0, 1] and gallery order does not matter."""
    queries = descriptor_set(rng.normal(size=(5, 4)), np.arange(5) % 3, np.zeros(5, dtype=int))
    gallery = descriptor_set(rng.normal(size=(9, 4)), np.arange(9) % 3, np.ones(9, dtype=int))
    report = evaluate(queries, gallery)
    assert all(0.0 <= v <= 1.0 for v in report.cmc)
    assert all(a <= b for a, b in zip(report.cmc, report.cmc[1:]))
    assert 0.0 <= report.map <= 1.0

    order = rng.permutation(9)
    shuffled = descriptor_set(gallery.vectors[order], gallery.identities[order], gallery.cameras[order])
    permuted = evaluate(queries, shuffled)
    np.testing.assert_allclose(permuted.cmc, report.cmc, atol=1e-12)
    assert permuted.map == pytest.approx(report.map, abs=1e-12)


@pytest.mark.p2
def test_ties_break_by_gallery_index():
    """Test that equidistant gallery entries rank in index order."""
    queries = descriptor_set([0.0], [0], [0])
    wrong_first = evaluate(queries, descriptor_set([1.0, 1.0], [1, 0], [1, 1]))
    right_first = evaluate(queries, descriptor_set([1.0, 1.0], [0, 1], [1, 1]))
    assert wrong_first.cmc[0] == 0.0
    assert right_first.cmc[0] == 1.0


@pytest.mark.p2
def test_average_precision_definition():
    """Test AP as the mean of precision at each hit."""
    assert average_precision(np.array([True, False, True])) == pytest.approx(0.8333333, abs=1e-6)
    assert average_precision(np.array([False, True])) == 0.5


@pytest.mark.p2
def test_rank_past_gallery_size_repeats_last():
    """Test EvalReport.rank for k beyond the CMC length."""
    report = evaluate(descriptor_set([0.0], [0], [0]), descriptor_set([1.0, 0.5], [0, 1], [1, 1]))
    assert report.rank(20) == 1.0


# ===== Localization =====


@pytest.mark.p1
def test_localization_ratio_on_block_masks():
    """Test attention 0.9 inside and 0.3 outside a mask gives ratio 3."""
    masks = np.zeros((2, 8, 4), dtype=bool)
    masks[:, :4, :2] = True
    attention = np.full((2, 1, 4, 2), 0.3)
    attention[:, 0, :2, :1] = 0.9
    assert localization_ratio(attention, masks) == pytest.approx(3.0)


@pytest.mark.p1
def test_localization_ratio_above_neutral_gate():
    """Test that 0.9 inside and 0.6 outside score 4 on their excess over 0.5."""
    masks = np.zeros((1, 8, 4), dtype=bool)
    masks[:, :4, :2] = True
    attention = np.full((1, 1, 4, 2), 0.6)
    attention[:, 0, :2, :1] = 0.9
    assert localization_ratio(attention, masks, neutral=0.5) == pytest.approx(4.0)
    assert localization_ratio(attention, masks) == pytest.approx(1.5)


@pytest.mark.p2
def test_localization_ratio_degenerate_masks():
    """Test NaN for empty masks and ShapeError for misaligned inputs."""
    assert np.isnan(localization_ratio(np.full((1, 1, 2, 2), 0.5), np.zeros((1, 4, 4), dtype=bool)))
    with pytest.raises(ShapeError):
        localization_ratio(np.ones((2, 1, 2, 2)), np.ones((1, 4, 4), dtype=bool))


# ===== Files and reports =====


@pytest.mark.p1
def test_fvec_file_round_trip(tmp_path, rng):
    """Test that descriptors survive write/read at float32 precision with labels intact."""
    original = descriptor_set(rng.normal(size=(3, 5)), [4, 4, 7], [0, 1, 0])
    write_fvec(tmp_path / "query.fvec", original)
    loaded = read_fvec(tmp_path / "query.fvec")
    np.testing.assert_array_equal(loaded.vectors, original.vectors.astype(np.float32))
    np.testing.assert_array_equal(loaded.identities, [4, 4, 7])
    np.testing.assert_array_equal(loaded.cameras, [0, 1, 0])
    assert loaded.clip_ids == original.clip_ids


@pytest.mark.p2
def test_fvec_format_errors(rng):
    """Test FormatError for bad magic, version and truncation."""
    payload = encode_fvec(descriptor_set(rng.normal(size=(2, 3)), [0, 1], [0, 1]))
    with pytest.raises(FormatError):
        decode_fvec(b"XXXX" + payload[4:])
    with pytest.raises(FormatError):
        decode_fvec(payload[:4] + bytes([9]) + payload[5:])
    with pytest.raises(FormatError):
        decode_fvec(payload[:-3])


@pytest.mark.p2
def test_report_csv_and_table():
    """Test the rank and mAP rows and the plain-text table."""
    report = evaluate(descriptor_set([0.0], [0], [0]), descriptor_set([1.0, 0.5], [0, 1], [1, 1]))
    assert report_csv(report, [5, 1]) == "rank,1,0.000000\nrank,5,1.000000\nmAP,0.500000\n"
    table = format_table(report, [1])
    assert "rank-1" in table and "50.00%" in table
