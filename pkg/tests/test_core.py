import numpy as np
import pytest

from marketrank import (
    TaxationParams,
    build_dataset,
    merge_infrequent_groups,
    validate_dataset,
)
from marketrank.errors import (
    CandidateTooSmallError,
    NegativeScoreError,
    ParameterError,
    UnmappedItemError,
)

from conftest import make_dataset


class TestTaxationParams:
    def test_accepts_box_interior(self):
        p = TaxationParams(alpha=2.0, beta=-1.5, a_e=0.3, a_s=0.7, k=5)
        assert p.alpha == 2.0 and p.k == 5

    def test_rejects_beta_near_zero(self):
        with pytest.raises(ParameterError):
            TaxationParams(alpha=1.0, beta=0.0)
        with pytest.raises(ParameterError):
            TaxationParams(alpha=1.0, beta=1e-9)

    def test_rejects_outside_box(self):
        with pytest.raises(ParameterError):
            TaxationParams(alpha=4.0, beta=1.0)
        with pytest.raises(ParameterError):
            TaxationParams(alpha=1.0, beta=-3.5)

    def test_custom_box(self):
        p = TaxationParams(alpha=5.0, beta=1.0, box=(-10.0, 10.0))
        assert p.alpha == 5.0

    def test_rejects_bad_weights_and_k(self):
        with pytest.raises(ParameterError):
            TaxationParams(alpha=1.0, beta=1.0, a_e=0.0)
        with pytest.raises(ParameterError):
            TaxationParams(alpha=1.0, beta=1.0, a_s=-1.0)
        with pytest.raises(ParameterError):
            TaxationParams(alpha=1.0, beta=1.0, k=0)


class TestValidateDataset:
    def test_accepts_valid_unchanged(self, two_group_dataset):
        checked = validate_dataset(two_group_dataset, 2)
        assert checked == two_group_dataset

    def test_idempotent(self, two_group_dataset):
        once = validate_dataset(two_group_dataset, 2)
        twice = validate_dataset(once, 2)
        assert once == twice

    def test_negative_score(self):
        ds = make_dataset([[0.5, -0.1]], ["a", "b"])
        with pytest.raises(NegativeScoreError):
            validate_dataset(ds, 1)

    def test_non_finite_score(self):
        ds = make_dataset([[0.5, np.nan]], ["a", "b"])
        with pytest.raises(NegativeScoreError):
            validate_dataset(ds, 1)

    def test_unmapped_item(self):
        with pytest.raises(UnmappedItemError):
            build_dataset(["u0"], ["i0", "i1"], np.ones((1, 2)), {"i0": "a"})

    def test_candidate_too_small(self):
        ds = make_dataset(
            [[0.9, 0.5, 0.3]],
            ["a", "a", "b"],
            candidates={"u0": ["i0"]},
        )
        with pytest.raises(CandidateTooSmallError):
            validate_dataset(ds, 2)

    def test_catalog_smaller_than_k(self):
        ds = make_dataset([[0.9, 0.5]], ["a", "b"])
        with pytest.raises(CandidateTooSmallError):
            validate_dataset(ds, 3)

    def test_drops_empty_groups_densely(self):
        ds = make_dataset([[0.9, 0.5]], ["a", "b"])
        trimmed = ds.__class__(
            users=ds.users,
            items=ds.items,
            scores=ds.scores,
            group_of=np.array([0, 2]),
            group_names=("a", "unused", "b"),
        )
        checked = validate_dataset(trimmed, 1)
        assert checked.group_names == ("a", "b")
        assert checked.group_of.tolist() == [0, 1]


def dataset_with_group_sizes(sizes):
    n_items = sum(sizes)
    labels = []
    for g, size in enumerate(sizes):
        labels.extend([f"g{g}"] * size)
    scores = np.linspace(0.1, 1.0, n_items)[None, :].repeat(2, axis=0)
    return make_dataset(scores, labels)


class TestMergeInfrequentGroups:
    def test_merges_small_groups(self):
        ds = dataset_with_group_sizes([12, 3, 4, 20])
        merged = merge_infrequent_groups(ds, threshold=10)
        assert merged.group_sizes().tolist() == [12, 20, 7]
        assert merged.group_names[-1] == "infrequent"

    def test_noop_when_all_large(self):
        ds = dataset_with_group_sizes([12, 20])
        merged = merge_infrequent_groups(ds, threshold=10)
        assert merged == ds

    def test_total_merge(self):
        ds = dataset_with_group_sizes([3, 4, 2])
        merged = merge_infrequent_groups(ds, threshold=10)
        assert merged.n_groups == 1
        assert merged.group_sizes().tolist() == [9]

    def test_threshold_one_is_noop(self):
        ds = dataset_with_group_sizes([1, 2, 3])
        assert merge_infrequent_groups(ds, threshold=1) == ds

    def test_preserves_items_and_scores(self):
        ds = dataset_with_group_sizes([2, 9, 15])
        merged = merge_infrequent_groups(ds, threshold=10)
        assert merged.items == ds.items
        assert np.array_equal(merged.scores, ds.scores)

    @pytest.mark.parametrize("threshold", [2, 5, 10])
    def test_survivors_meet_threshold(self, threshold):
        rng = np.random.default_rng(threshold)
        for _ in range(20):
            sizes = rng.integers(1, 15, size=rng.integers(2, 6)).tolist()
            ds = dataset_with_group_sizes(sizes)
            merged = merge_infrequent_groups(ds, threshold=threshold)
            out_sizes = merged.group_sizes()
            survivors = (
                out_sizes[:-1]
                if merged.group_names[-1] == "infrequent"
                else out_sizes
            )
            assert all(s >= threshold for s in survivors)
            assert out_sizes.sum() == sum(sizes)

    def test_rejects_bad_threshold(self):
        ds = dataset_with_group_sizes([2, 3])
        with pytest.raises(ParameterError):
            merge_infrequent_groups(ds, threshold=0)
