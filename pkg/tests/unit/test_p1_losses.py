"""Priority 1: identity and batch-hard triplet losses."""

import itertools

import numpy as np
import pytest

from src.common.errors import ConfigError
from src.core.training.losses import batch_hard_indices, id_loss, pairwise_distances, triplet_loss
from src.core.tensor.gradcheck import gradient_check
from src.core.tensor.tensor import Tensor


@pytest.mark.p1
def test_uniform_logits_give_log_of_class_count(float64):
    """Test uniform logits over 10 classes give ln 10."""
    loss = id_loss(Tensor(np.zeros((3, 10))), np.array([0, 4, 9]))
    assert loss.item() == pytest.approx(np.log(10), abs=1e-12)
    assert loss.item() == pytest.approx(2.302585, abs=1e-6)


@pytest.mark.p1
def test_confident_logits_approach_zero(float64):
    """Test that a dominant correct logit drives the loss towards 0."""
    logits = np.zeros((2, 4))
    logits[0, 1] = logits[1, 3] = 50.0
    assert 0.0 <= id_loss(Tensor(logits), np.array([1, 3])).item() < 1e-15


@pytest.mark.p1
def test_id_loss_matches_loop_oracle(float64, rng):
    """Test id_loss against a per-row log-sum-exp computation."""
    logits = rng.normal(size=(5, 6))
    labels = rng.integers(0, 6, size=5)
    expected = np.mean([np.log(np.exp(row).sum()) - row[y] for row, y in zip(logits, labels)])
    assert id_loss(Tensor(logits), labels).item() == pytest.approx(expected, abs=1e-12)


@pytest.mark.p1
def test_id_loss_gradient(float64, rng):
    """Test id_loss gradients against central differences."""
    logits = Tensor(rng.normal(size=(4, 5)), requires_grad=True)
    labels = np.array([0, 2, 2, 4])
    assert gradient_check(lambda: id_loss(logits, labels), [logits]) < 1e-6


@pytest.mark.p2
def test_id_loss_rejects_out_of_range_labels():
    """Test ConfigError for labels outside the classifier."""
    with pytest.raises(ConfigError):
        id_loss(Tensor(np.zeros((2, 3))), np.array([0, 3]))


@pytest.mark.p1
def test_triplet_loss_closed_form_cases(float64):
    """Test zero loss when d(a,p)=0, d(a,n)=m+1 and loss m when d(a,p)=d(a,n)."""
    margin = 0.3
    separated = np.array([[0.0], [0.0], [margin + 1], [margin + 1]])
    labels = np.array([0, 0, 1, 1])
    assert triplet_loss(Tensor(separated), labels, margin).item() == pytest.approx(0.0, abs=1e-6)

    # rows of a unit square: positive and nearest negative both at distance 1
    tied = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    assert triplet_loss(Tensor(tied), labels, margin).item() == pytest.approx(margin, abs=1e-6)


def brute_force_hard(descriptors, labels):
    positives, negatives = [], []
    n = len(labels)
    for a in range(n):
        best_p = best_n = None
        for j in range(n):
            d = np.linalg.norm(descriptors[a] - descriptors[j])
            if j != a and labels[j] == labels[a] and (best_p is None or d > best_p[0]):
                best_p = (d, j)
            if labels[j] != labels[a] and (best_n is None or d < best_n[0]):
                best_n = (d, j)
        positives.append(best_p[1])
        negatives.append(best_n[1])
    return np.array(positives), np.array(negatives)


@pytest.mark.p1
@pytest.mark.parametrize("seed", range(5))
def test_batch_hard_selection_matches_exhaustive_scan(seed):
    """Test hardest positive and negative selection against a scan over all triplets."""
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(3), 3)
    descriptors = rng.normal(size=(9, 4))
    positive, negative = batch_hard_indices(descriptors, labels)
    expected_p, expected_n = brute_force_hard(descriptors, labels)
    np.testing.assert_array_equal(positive, expected_p)
    np.testing.assert_array_equal(negative, expected_n)

    # the selected triplet is the worst violation among all valid (p, n) for each anchor
    dist = pairwise_distances(descriptors)
    for a in range(9):
        worst = max(
            dist[a, p] - dist[a, n]
            for p, n in itertools.product(range(9), range(9))
            if p != a and labels[p] == labels[a] and labels[n] != labels[a]
        )
        assert dist[a, positive[a]] - dist[a, negative[a]] == pytest.approx(worst, abs=1e-12)


@pytest.mark.p1
def test_triplet_loss_gradient(float64, rng):
    """Test triplet gradients against central differences away from ties."""
    descriptors = Tensor(rng.normal(size=(6, 3)), requires_grad=True)
    labels = np.array([0, 0, 1, 1, 2, 2])
    error = gradient_check(lambda: triplet_loss(descriptors, labels, 2.0), [descriptors])
    assert error < 1e-5, f"relative error {error}"


@pytest.mark.p1
def test_losses_are_non_negative(rng):
    """Test both losses stay ≥ 0 on random inputs."""
    labels = np.repeat(np.arange(4), 2)
    for _ in range(10):
        x = Tensor(rng.normal(size=(8, 5)))
        assert id_loss(x, labels).item() >= 0
        assert triplet_loss(x, labels, 0.3).item() >= 0


@pytest.mark.p2
def test_triplet_rejects_single_identity_or_singleton():
    """Test ConfigError without two identities of at least two clips."""
    with pytest.raises(ConfigError):
        triplet_loss(Tensor(np.zeros((4, 2))), np.zeros(4, dtype=int), 0.3)
    with pytest.raises(ConfigError):
        triplet_loss(Tensor(np.zeros((3, 2))), np.array([0, 0, 1]), 0.3)
