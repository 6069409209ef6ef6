import numpy as np
import pytest

from marketrank import build_dataset, validate_dataset


def make_dataset(scores, groups, users=None, items=None, candidates=None, k=None):
    """Assemble a validated dataset from a score matrix and group labels.

    ``groups`` maps item position to a group label string; ``scores`` is a
    (users x items) array-like.
    """
    scores = np.asarray(scores, dtype=np.float64)
    n_users, n_items = scores.shape
    users = users or [f"u{i}" for i in range(n_users)]
    items = items or [f"i{j}" for j in range(n_items)]
    group_by_item = {items[j]: groups[j] for j in range(n_items)}
    ds = build_dataset(users, items, scores, group_by_item, candidates)
    if k is not None:
        ds = validate_dataset(ds, k)
    return ds


def random_tiny_market(seed, n_users=(5, 7), n_items=(6, 9), n_groups=3,
                       k=1, lo=1.5, hi=3.0):
    """Small random market instance used by oracle comparisons."""
    rng = np.random.default_rng(seed)
    users = int(rng.integers(*n_users))
    items = int(rng.integers(*n_items))
    scores = rng.uniform(lo, hi, size=(users, items))
    labels = [f"g{j % n_groups}" for j in range(items)]
    return make_dataset(scores, labels, k=k), k


@pytest.fixture
def two_group_dataset():
    """2 users x 4 items across 2 groups, valid at k=2."""
    return make_dataset(
        [[0.9, 0.5, 0.3, 0.1], [0.2, 0.8, 0.6, 0.4]],
        ["a", "a", "b", "b"],
        k=2,
    )
