"""Online re-ranking sessions, baseline policies, and the brute-force oracle.

A session walks users in arrival order, scores each user's candidates under
the active policy, emits a top-K list, and folds the selected raw scores into
the group-utility state. Sessions are strictly sequential (the state is a
data dependence across users); distinct sessions never share state.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from itertools import combinations
from typing import Optional

import numpy as np

from .core import (
    RankedList,
    ScoreDataset,
    TaxationParams,
    UtilityState,
    validate_dataset,
)
from .errors import (
    InstanceTooLargeError,
    ParameterError,
    SessionExhaustedError,
)
from .fairness import total_cost
from .gradient import demand_gradient, supply_gradient

ORACLE_ENUMERATION_LIMIT = 2_000_000

POLICY_NAMES = ("manifold_rank", "top_k", "min_regularizer")


@dataclass(frozen=True)
class Policy:
    """Selection policy: manifold_rank, top_k, or min_regularizer(lam)."""

    name: str
    lam: float = 0.1

    _PATTERN = re.compile(r"^\s*([a-z_]+)\s*(?:\(\s*([-+0-9.eE]+)\s*\))?\s*$")

    def __post_init__(self):
        if self.name not in POLICY_NAMES:
            raise ParameterError(
                f"unknown policy {self.name!r}; expected one of {POLICY_NAMES}"
            )

    @classmethod
    def parse(cls, text: str) -> "Policy":
        m = cls._PATTERN.match(text)
        if not m:
            raise ParameterError(f"cannot parse policy {text!r}")
        name = m.group(1)
        if m.group(2) is not None:
            return cls(name=name, lam=float(m.group(2)))
        return cls(name=name)

    def __str__(self) -> str:
        if self.name == "min_regularizer":
            return f"min_regularizer({self.lam:g})"
        return self.name


def select_top_k(values: np.ndarray, item_indices: np.ndarray, k: int) -> np.ndarray:
    """Positions of the k largest values, ties to the lowest item index.

    The returned positions are in emission order (best first).
    """
    order = np.lexsort((item_indices, -values))
    return order[:k]


class RerankSession:
    """One pass of the online re-ranking loop over a dataset.

    Group utilities start at 1 for every group and accumulate the raw scores
    of emitted items. Replaying a session with equal inputs and seed
    reproduces identical lists.
    """

    def __init__(
        self,
        dataset: ScoreDataset,
        params: TaxationParams,
        policy: Policy | str = "manifold_rank",
        seed: int = 0,
        shuffle_arrivals: bool = False,
        clamp_zeta: bool = False,
        zeta_override: Optional[float] = None,
    ):
        self.dataset = validate_dataset(dataset, params.k)
        self.params = params
        self.policy = Policy.parse(policy) if isinstance(policy, str) else policy
        self.state = UtilityState.fresh(dataset.n_groups)
        self.cursor = 0
        self.seed = seed
        self.clamp_zeta = clamp_zeta
        self.zeta_override = zeta_override
        if shuffle_arrivals:
            rng = np.random.default_rng(seed)
            self.arrival_order = rng.permutation(dataset.n_users)
        else:
            self.arrival_order = np.arange(dataset.n_users)

    @property
    def exhausted(self) -> bool:
        return self.cursor >= self.dataset.n_users

    def _adjusted_scores(self, scores: np.ndarray, groups: np.ndarray) -> np.ndarray:
        name = self.policy.name
        if name == "top_k":
            return scores
        if name == "min_regularizer":
            v = self.state.v
            gap = (v - v.min()) / v.sum()
            return scores - self.policy.lam * gap[groups]
        eta = supply_gradient(self.state.v, self.params)
        if self.zeta_override is not None:
            zeta = self.zeta_override
        else:
            zeta = demand_gradient(scores, self.params, clamp=self.clamp_zeta)
        return scores - eta[groups] * zeta

    def step(self) -> RankedList:
        """Emit the ranked list for the next arriving user and update state."""
        if self.exhausted:
            raise SessionExhaustedError(
                "all users have been served", served=self.cursor
            )
        ds = self.dataset
        u = int(self.arrival_order[self.cursor])
        cand = ds.candidate_indices(u)
        raw = ds.scores[u, cand]
        groups = ds.group_of[cand]
        adjusted = self._adjusted_scores(raw, groups)
        picked = select_top_k(adjusted, cand, self.params.k)
        sel_items = cand[picked]
        sel_raw = raw[picked]
        self.state.accumulate(ds.group_of[sel_items], sel_raw)
        self.cursor += 1
        return RankedList(
            user=ds.users[u],
            user_index=u,
            items=tuple(ds.items[i] for i in sel_items),
            item_indices=sel_items,
            raw_scores=sel_raw,
            adjusted_scores=adjusted[picked],
        )

    def run(self) -> list[RankedList]:
        """Step until exhaustion; returns all lists in arrival order."""
        out = []
        while not self.exhausted:
            out.append(self.step())
        return out


def run_session(session: RerankSession) -> list[RankedList]:
    return session.run()


def ideal_lists(dataset: ScoreDataset, k: int) -> list[RankedList]:
    """Per-user top-K by raw score; the accuracy baseline for NDCG."""
    params = TaxationParams(alpha=1.0, beta=1.0, k=k)
    return RerankSession(dataset, params, policy="top_k").run()


def allocation_objective(
    dataset: ScoreDataset, allocation: list[np.ndarray], params: TaxationParams
) -> float:
    """Welfare of an allocation: total selected score minus the total cost.

    Group utilities include the same all-ones initialization the online
    engine uses, so engine and oracle objectives are directly comparable.
    """
    v = np.ones(dataset.n_groups, dtype=np.float64)
    welfare = 0.0
    for u, items in enumerate(allocation):
        items = np.asarray(items, dtype=np.int64)
        s = dataset.scores[u, items]
        welfare += float(s.sum())
        np.add.at(v, dataset.group_of[items], s)
    return welfare - total_cost(v, params)


def oracle_enumeration_count(dataset: ScoreDataset, k: int) -> int:
    count = 1
    for u in range(dataset.n_users):
        count *= math.comb(len(dataset.candidate_indices(u)), k)
        if count > 10 * ORACLE_ENUMERATION_LIMIT:
            break
    return count


def welfare_oracle(
    dataset: ScoreDataset,
    params: TaxationParams,
    limit: int = ORACLE_ENUMERATION_LIMIT,
) -> tuple[list[np.ndarray], float]:
    """Exhaustive search for the allocation maximizing the welfare objective.

    Enumerates every per-user K-subset of candidates. Welfare ties are broken
    toward the larger total raw utility, then toward the earlier allocation
    in lexicographic candidate order. Raises InstanceTooLargeError when the
    enumeration count exceeds ``limit``.
    """
    k = params.k
    count = oracle_enumeration_count(dataset, k)
    if count > limit:
        raise InstanceTooLargeError(
            f"{count} candidate allocations exceed the enumeration limit {limit}",
            count=count,
            limit=limit,
        )
    n_groups = dataset.n_groups
    per_user: list[list[np.ndarray]] = []
    per_user_sums: list[np.ndarray] = []
    per_user_gvecs: list[np.ndarray] = []
    for u in range(dataset.n_users):
        cand = dataset.candidate_indices(u)
        items_list, sums, gvecs = [], [], []
        for combo in combinations(cand.tolist(), k):
            items = np.array(combo, dtype=np.int64)
            s = dataset.scores[u, items]
            gvec = np.zeros(n_groups, dtype=np.float64)
            np.add.at(gvec, dataset.group_of[items], s)
            items_list.append(items)
            sums.append(float(s.sum()))
            gvecs.append(gvec)
        per_user.append(items_list)
        per_user_sums.append(np.array(sums))
        per_user_gvecs.append(np.stack(gvecs))

    sign = float(np.sign(params.alpha * params.beta))
    alpha, beta = params.alpha, params.beta

    def batch_cost(v_rows: np.ndarray) -> np.ndarray:
        if sign == 0.0:
            return np.zeros(len(v_rows))
        with np.errstate(over="ignore"):
            costs = sign * np.power(np.power(v_rows, beta).sum(axis=1), alpha)
        if np.all(np.isfinite(costs)):
            return costs
        return np.array([total_cost(row, params) for row in v_rows])

    best_alloc: Optional[list[np.ndarray]] = None
    best_welfare = -math.inf
    best_utility = -math.inf
    chosen = [0] * dataset.n_users
    last = dataset.n_users - 1
    # Welfare values that differ only by accumulated rounding are treated as
    # ties and broken toward the larger raw utility.
    tie_tol = 1e-9

    def consider(welfare: float, utility: float) -> None:
        nonlocal best_alloc, best_welfare, best_utility
        slack = tie_tol * (1.0 + abs(best_welfare)) if best_alloc else 0.0
        if welfare > best_welfare + slack or (
            welfare > best_welfare - slack and utility > best_utility
        ):
            best_welfare = max(best_welfare, welfare)
            best_utility = utility
            best_alloc = [per_user[i][chosen[i]] for i in range(len(chosen))]

    def recurse(u: int, utility: float, v: np.ndarray) -> None:
        if u == last:
            # Evaluate every option of the final user in one batch.
            welfare = (
                utility + per_user_sums[u] - batch_cost(v + per_user_gvecs[u])
            )
            wmax = float(welfare.max())
            slack = tie_tol * (1.0 + abs(wmax))
            ties = np.flatnonzero(welfare >= wmax - slack)
            idx = int(ties[np.argmax(per_user_sums[u][ties])])
            chosen[u] = idx
            consider(float(welfare[idx]), utility + float(per_user_sums[u][idx]))
            return
        for idx in range(len(per_user[u])):
            chosen[u] = idx
            recurse(u + 1, utility + per_user_sums[u][idx], v + per_user_gvecs[u][idx])

    recurse(0, 0.0, np.ones(n_groups, dtype=np.float64))
    assert best_alloc is not None
    return best_alloc, best_welfare


def demand_response(dataset: ScoreDataset, prices, k: int) -> np.ndarray:
    """Aggregate per-group selection counts when each user pays the posted
    per-group price: every user takes the K items maximizing score - price.
    """
    prices = np.asarray(prices, dtype=np.float64)
    if len(prices) != dataset.n_groups or not np.all(np.isfinite(prices)):
        raise ParameterError(
            "price vector must be finite with one entry per group",
            n_groups=dataset.n_groups,
        )
    counts = np.zeros(dataset.n_groups, dtype=np.int64)
    for u in range(dataset.n_users):
        cand = dataset.candidate_indices(u)
        adjusted = dataset.scores[u, cand] - prices[dataset.group_of[cand]]
        picked = select_top_k(adjusted, cand, k)
        np.add.at(counts, dataset.group_of[cand[picked]], 1)
    return counts
