"""Shared domain types: datasets, taxation parameters, utility state, ranked lists.

External user/item/group identifiers are arbitrary strings; internally items
and groups are dense integer indices so that every tie-break ("ascending item
index") is deterministic. The string-to-index mappings travel with the dataset
and are persisted by the CLI output writers.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import (
    CandidateTooSmallError,
    NegativeScoreError,
    ParameterError,
    UnmappedItemError,
)

DEFAULT_PARAM_BOX = (-3.0, 3.0)
MIN_ABS_BETA = 1e-6
INFREQUENT_GROUP = "infrequent"


@dataclass(frozen=True)
class TaxationParams:
    """Taxation and demand-weight configuration for one re-ranking run.

    ``alpha`` is the global taxation rate, ``beta`` the local rate. ``a_e``
    and ``a_s`` weight the entropy and skewness statistics in the demand
    gradient. ``k`` is the ranking size. ``beta`` must stay away from zero
    (use the proportional preset, beta=1e-3, for the log-utility limit).
    """

    alpha: float
    beta: float
    a_e: float = 1.0
    a_s: float = 1.0
    k: int = 10
    box: tuple[float, float] = DEFAULT_PARAM_BOX

    def __post_init__(self):
        lo, hi = self.box
        if not (lo <= self.alpha <= hi):
            raise ParameterError(
                f"alpha {self.alpha} outside validity box [{lo}, {hi}]", alpha=self.alpha
            )
        if not (lo <= self.beta <= hi):
            raise ParameterError(
                f"beta {self.beta} outside validity box [{lo}, {hi}]", beta=self.beta
            )
        if abs(self.beta) < MIN_ABS_BETA:
            raise ParameterError(
                f"|beta| must be >= {MIN_ABS_BETA}; beta=0 is a removable singularity "
                "(use the proportional preset instead)",
                beta=self.beta,
            )
        if self.a_e <= 0 or self.a_s <= 0:
            raise ParameterError(
                "demand weights a_e and a_s must be positive", a_e=self.a_e, a_s=self.a_s
            )
        if self.k < 1:
            raise ParameterError("ranking size k must be a positive integer", k=self.k)


@dataclass(frozen=True, eq=False)
class ScoreDataset:
    """Per-user relevance scores plus the item-to-group catalog.

    ``scores`` is a dense (n_users, n_items) float matrix. ``group_of`` maps
    each item index to a dense group index; ``group_names`` maps group index
    back to the external identifier. ``candidates`` is an optional per-user
    array of item indices (ascending); ``None`` means the full catalog.
    """

    users: tuple[str, ...]
    items: tuple[str, ...]
    scores: np.ndarray
    group_of: np.ndarray
    group_names: tuple[str, ...]
    candidates: Optional[tuple[np.ndarray, ...]] = None

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_items(self) -> int:
        return len(self.items)

    @property
    def n_groups(self) -> int:
        return len(self.group_names)

    def candidate_indices(self, user_index: int) -> np.ndarray:
        if self.candidates is None:
            return np.arange(self.n_items)
        return self.candidates[user_index]

    def group_sizes(self) -> np.ndarray:
        return np.bincount(self.group_of, minlength=self.n_groups)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ScoreDataset):
            return NotImplemented
        if (self.users, self.items, self.group_names) != (
            other.users,
            other.items,
            other.group_names,
        ):
            return False
        if not np.array_equal(self.scores, other.scores):
            return False
        if not np.array_equal(self.group_of, other.group_of):
            return False
        if (self.candidates is None) != (other.candidates is None):
            return False
        if self.candidates is not None:
            if len(self.candidates) != len(other.candidates):
                return False
            return all(
                np.array_equal(a, b) for a, b in zip(self.candidates, other.candidates)
            )
        return True


def build_dataset(
    users: Sequence[str],
    items: Sequence[str],
    scores: np.ndarray,
    group_by_item: dict[str, str],
    candidates: Optional[dict[str, Sequence[str]]] = None,
) -> ScoreDataset:
    """Assemble a dataset from external identifiers.

    Groups are mapped to dense indices in sorted order of their external
    names (a stable basis for reproducible runs). Raises UnmappedItemError
    if any item is missing from the group map.
    """
    users = tuple(str(u) for u in users)
    items = tuple(str(i) for i in items)
    missing = [i for i in items if i not in group_by_item]
    if missing:
        raise UnmappedItemError(
            f"{len(missing)} item(s) missing from the group map, first: {missing[0]!r}",
            item=missing[0],
        )
    group_names = tuple(sorted({group_by_item[i] for i in items}))
    group_index = {g: j for j, g in enumerate(group_names)}
    group_of = np.array([group_index[group_by_item[i]] for i in items], dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (len(users), len(items)):
        raise ParameterError(
            f"score matrix shape {scores.shape} does not match "
            f"({len(users)}, {len(items)})"
        )
    cand_arrays = None
    if candidates is not None:
        item_index = {name: j for j, name in enumerate(items)}
        cand_arrays = []
        for u in users:
            names = candidates.get(u)
            if names is None:
                cand_arrays.append(np.arange(len(items)))
                continue
            unknown = [n for n in names if n not in item_index]
            if unknown:
                raise UnmappedItemError(
                    f"candidate item {unknown[0]!r} for user {u!r} is not in the catalog",
                    item=unknown[0],
                    user=u,
                )
            cand_arrays.append(np.array(sorted(item_index[n] for n in names), dtype=np.int64))
        cand_arrays = tuple(cand_arrays)
    return ScoreDataset(
        users=users,
        items=items,
        scores=scores,
        group_of=group_of,
        group_names=group_names,
        candidates=cand_arrays,
    )


def validate_dataset(ds: ScoreDataset, k: int) -> ScoreDataset:
    """Check all dataset invariants for ranking size ``k``.

    Returns the dataset with group indices re-densified to 0..n_groups-1
    (dropping empty groups). Validating an already-valid dataset returns an
    equal dataset.
    """
    if k < 1:
        raise ParameterError("ranking size k must be a positive integer", k=k)
    scores = ds.scores
    if not np.all(np.isfinite(scores)):
        bad = np.argwhere(~np.isfinite(scores))[0]
        raise NegativeScoreError(
            f"non-finite score for user {ds.users[bad[0]]!r}, item {ds.items[bad[1]]!r}",
            user=ds.users[bad[0]],
            item=ds.items[bad[1]],
        )
    if np.any(scores < 0):
        bad = np.argwhere(scores < 0)[0]
        raise NegativeScoreError(
            f"negative score {scores[bad[0], bad[1]]} for user {ds.users[bad[0]]!r}, "
            f"item {ds.items[bad[1]]!r}",
            user=ds.users[bad[0]],
            item=ds.items[bad[1]],
        )
    if len(ds.group_of) != ds.n_items:
        raise UnmappedItemError(
            f"group map covers {len(ds.group_of)} of {ds.n_items} items"
        )
    if np.any(ds.group_of < 0) or np.any(ds.group_of >= ds.n_groups):
        raise UnmappedItemError("group index out of range")
    if ds.candidates is not None:
        for u, cand in enumerate(ds.candidates):
            if len(cand) < k:
                raise CandidateTooSmallError(
                    f"user {ds.users[u]!r} has {len(cand)} candidates, need >= {k}",
                    user=ds.users[u],
                    size=len(cand),
                    k=k,
                )
            if len(np.unique(cand)) != len(cand):
                raise CandidateTooSmallError(
                    f"duplicate candidate items for user {ds.users[u]!r}", user=ds.users[u]
                )
    elif ds.n_items < k:
        raise CandidateTooSmallError(
            f"catalog has {ds.n_items} items, need >= {k}", size=ds.n_items, k=k
        )

    used = np.unique(ds.group_of)
    if len(used) == ds.n_groups:
        return ds
    # Drop empty groups, keeping the relative order of the survivors.
    remap = np.full(ds.n_groups, -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return replace(
        ds,
        group_of=remap[ds.group_of],
        group_names=tuple(ds.group_names[j] for j in used),
    )


def merge_infrequent_groups(ds: ScoreDataset, threshold: int = 10) -> ScoreDataset:
    """Merge every group with fewer than ``threshold`` items into one group.

    Surviving groups keep their relative order; the merged group is appended
    last under the name "infrequent". Item membership and scores are
    unchanged. A threshold of 1 is a no-op.
    """
    if threshold < 1:
        raise ParameterError("merge threshold must be >= 1", threshold=threshold)
    sizes = ds.group_sizes()
    small = np.flatnonzero(sizes < threshold)
    if len(small) == 0:
        return ds
    keep = np.flatnonzero(sizes >= threshold)
    merged_index = len(keep)
    remap = np.empty(ds.n_groups, dtype=np.int64)
    remap[keep] = np.arange(len(keep))
    remap[small] = merged_index
    merged_name = INFREQUENT_GROUP
    existing = {ds.group_names[j] for j in keep}
    while merged_name in existing:
        merged_name += "_"
    return replace(
        ds,
        group_of=remap[ds.group_of],
        group_names=tuple(ds.group_names[j] for j in keep) + (merged_name,),
    )


@dataclass
class UtilityState:
    """Running group-utility vector, one entry per group, each >= 1."""

    v: np.ndarray

    @classmethod
    def fresh(cls, n_groups: int) -> "UtilityState":
        return cls(np.ones(n_groups, dtype=np.float64))

    def accumulate(self, group_indices: np.ndarray, scores: np.ndarray) -> None:
        np.add.at(self.v, group_indices, scores)

    def exposure(self) -> np.ndarray:
        """Accumulated exposure with the all-ones initialization removed."""
        return self.v - 1.0

    def copy(self) -> "UtilityState":
        return UtilityState(self.v.copy())


@dataclass(frozen=True)
class RankedList:
    """One emitted top-K list: items in adjusted-score order.

    ``item_indices`` are internal indices; ``items`` the external ids.
    ``raw_scores`` are the base relevance values, ``adjusted_scores`` the
    values actually used for selection.
    """

    user: str
    user_index: int
    items: tuple[str, ...]
    item_indices: np.ndarray = field(repr=False)
    raw_scores: np.ndarray = field(repr=False)
    adjusted_scores: np.ndarray = field(repr=False)
