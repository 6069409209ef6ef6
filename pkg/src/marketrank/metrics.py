"""Evaluation metrics: NDCG plus the three group-fairness statistics.

NDCG compares re-ranked lists against the raw top-K ordering using base-2
log discounts at 1-based ranks. The fairness metrics (elastic fairness,
Gini, worst-off share) act on the accumulated group-utility vector with the
all-ones initialization removed, so group count never inflates exposure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import RankedList, TaxationParams, UtilityState
from .errors import AllZeroError, DegenerateTError, ParameterError, ZeroIdealGainError

DEFAULT_EF_ELASTICITY = 2.0
DEFAULT_MMF_FRACTION = 0.2
EXPOSURE_FLOOR = 1e-12


@dataclass(frozen=True)
class MetricBundle:
    """Accuracy and fairness summary of one completed session."""

    ndcg: float
    ef: float
    gini: float
    mmf: float
    k: int

    def as_dict(self) -> dict:
        return {
            "ndcg": self.ndcg,
            "ef": self.ef,
            "gini": self.gini,
            "mmf": self.mmf,
            "k": self.k,
        }


def _list_gain(ranked: RankedList) -> float:
    ranks = np.arange(1, len(ranked.raw_scores) + 1, dtype=np.float64)
    return float(np.sum(ranked.raw_scores / np.log2(ranks + 1.0)))


def ndcg_at_k(
    original: Sequence[RankedList], reranked: Sequence[RankedList]
) -> float:
    """Mean over users of discounted gain of the re-ranked list relative to
    the raw top-K list; equals 1.0 when every list is unchanged.
    """
    if len(original) != len(reranked) or len(original) == 0:
        raise ParameterError(
            "need matching nonempty original and reranked lists",
            original=len(original),
            reranked=len(reranked),
        )
    total = 0.0
    for orig, fair in zip(original, reranked):
        ideal = _list_gain(orig)
        if ideal <= 0.0:
            raise ZeroIdealGainError(
                f"user {orig.user!r} has zero gain in the original list", user=orig.user
            )
        total += _list_gain(fair) / ideal
    return total / len(original)


def gini_index(v) -> float:
    """Mean absolute pairwise difference over twice the mean; 0 at equality."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or len(v) == 0:
        raise ParameterError("utility vector must be a nonempty 1-d array")
    if np.any(v < 0):
        raise ParameterError("utilities must be nonnegative")
    total = float(v.sum())
    if total == 0.0:
        raise AllZeroError("cannot compute Gini of an all-zero vector")
    n = len(v)
    # Sorted-prefix form of sum_{i,j} |v_i - v_j|, O(n log n).
    vs = np.sort(v)
    ranks = np.arange(1, n + 1, dtype=np.float64)
    pairwise = 2.0 * float(np.sum((2.0 * ranks - n - 1.0) * vs))
    return pairwise / (2.0 * n * total)


def mmf_at_k(v, fraction: float = DEFAULT_MMF_FRACTION) -> float:
    """Utility share of the bottom ceil(fraction * n_groups) groups."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or len(v) == 0:
        raise ParameterError("utility vector must be a nonempty 1-d array")
    if np.any(v < 0):
        raise ParameterError("utilities must be nonnegative")
    if not (0.0 < fraction <= 1.0):
        raise ParameterError("fraction must be in (0, 1]", fraction=fraction)
    total = float(v.sum())
    if total == 0.0:
        raise AllZeroError("cannot compute MMF of an all-zero vector")
    worst = math.ceil(fraction * len(v))
    return float(np.sort(v)[:worst].sum()) / total


def ef_at_k(v, t: float = DEFAULT_EF_ELASTICITY) -> float:
    """Elastic fairness sign(1-t) * (sum_i vbar_i^(1-t))^(1/t) of the
    normalized utilities vbar = v / sum(v). Higher (less negative for t > 1)
    means a more even distribution; scale-invariant by construction.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or len(v) == 0:
        raise ParameterError("utility vector must be a nonempty 1-d array")
    if t == 0.0 or t == 1.0:
        raise DegenerateTError("elasticity t must avoid 0 and 1", t=t)
    if np.any(v <= 0):
        raise ParameterError("elastic fairness needs strictly positive utilities")
    vbar = v / v.sum()
    inner = float(np.sum(np.power(vbar, 1.0 - t)))
    return math.copysign(1.0, 1.0 - t) * inner ** (1.0 / t)


def evaluate(
    original: Sequence[RankedList],
    reranked: Sequence[RankedList],
    final_state: UtilityState,
    params: TaxationParams,
    ef_t: float = DEFAULT_EF_ELASTICITY,
    mmf_fraction: float = DEFAULT_MMF_FRACTION,
) -> MetricBundle:
    """Bundle all four metrics for one completed session.

    Fairness metrics see the accumulated exposure (state minus the all-ones
    initialization); groups that received nothing are floored at 1e-12 so
    elastic fairness stays finite and ranks such configs as maximally unfair.
    """
    exposure = final_state.exposure()
    if np.any(exposure < 0):
        raise ParameterError("utility state below its initialization")
    floored = np.maximum(exposure, EXPOSURE_FLOOR)
    return MetricBundle(
        ndcg=ndcg_at_k(original, reranked),
        ef=ef_at_k(floored, t=ef_t),
        gini=gini_index(exposure),
        mmf=mmf_at_k(exposure, fraction=mmf_fraction),
        k=params.k,
    )
