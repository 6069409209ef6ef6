import math
from itertools import combinations, product

import numpy as np
import pytest

from marketrank import (
    Policy,
    RerankSession,
    TaxationParams,
    allocation_objective,
    demand_response,
    ideal_lists,
    welfare_oracle,
)
from marketrank.checks import (
    check_determinism,
    check_law_of_demand,
    check_supply_monotonicity,
    check_utility_conservation,
    check_zero_gradient_equivalence,
)
from marketrank.errors import (
    InstanceTooLargeError,
    ParameterError,
    SessionExhaustedError,
)

from conftest import make_dataset, random_tiny_market


def simulate_engine(scores_by_user, group_of_item, k, alpha, beta, a_e, a_s):
    """Independent step-by-step replay of the online loop in plain Python.

    Returns the per-user selected item positions in emission order.
    """
    n_groups = len(set(group_of_item.values()))
    v = {g: 1.0 for g in range(n_groups)}

    def entropy(s):
        eps = 1e-12
        total = sum(x + eps for x in s)
        return -sum((x + eps) / total * math.log((x + eps) / total) for x in s)

    def skewness(s):
        n = len(s)
        mu = sum(s) / n
        m2 = sum((x - mu) ** 2 for x in s) / n
        if m2 < 1e-12:
            return 0.0
        return (sum((x - mu) ** 3 for x in s) / n) / m2**1.5

    emitted = []
    for s in scores_by_user:
        big_g = sum(v[g] ** beta for g in v)
        eta = {}
        for g in v:
            direction = (alpha - 1) * beta * v[g] ** beta + (beta - 1) * big_g
            c = (direction > 0) - (direction < 0)
            sign = ((alpha * beta) > 0) - ((alpha * beta) < 0)
            r = sign * v[g] ** beta * big_g ** (alpha - 1)
            gamma = beta * (1 / v[g] + (alpha - 1) * v[g] ** (beta - 1) / big_g)
            eta[g] = c * r * gamma
        zeta = a_e * entropy(s) - a_s * skewness(s)
        adjusted = [
            (s[i] - eta[group_of_item[i]] * zeta, i) for i in range(len(s))
        ]
        ranked = sorted(adjusted, key=lambda t: (-t[0], t[1]))[:k]
        picks = [i for _, i in ranked]
        for i in picks:
            v[group_of_item[i]] += s[i]
        emitted.append(picks)
    return emitted


class TestStep:
    def test_zero_gradient_reduces_to_top_k(self):
        ds = make_dataset([[0.9, 0.5, 0.1]], ["g0", "g1", "g1"], k=2)
        params = TaxationParams(1.0, 1.0, k=2)
        fair = RerankSession(ds, params, policy="manifold_rank").step()
        assert fair.items == ("i0", "i1")

    def test_top_k_policy(self):
        ds = make_dataset([[0.9, 0.5, 0.1]], ["g0", "g1", "g1"], k=2)
        params = TaxationParams(1.0, 1.0, k=2)
        plain = RerankSession(ds, params, policy="top_k").step()
        assert plain.items == ("i0", "i1")

    def test_two_user_shift_matches_hand_simulation(self):
        scores = [[0.3, 0.25, 0.01, 0.0], [3.0, 2.9, 2.75, 0.1]]
        groups = ["g0", "g0", "g1", "g1"]
        ds = make_dataset(scores, groups, k=2)
        params = TaxationParams(2.0, 1.0, a_e=1.0, a_s=1.0, k=2)
        session = RerankSession(ds, params, policy="manifold_rank")
        lists = session.run()

        expected = simulate_engine(
            scores, {0: 0, 1: 0, 2: 1, 3: 1}, k=2,
            alpha=2.0, beta=1.0, a_e=1.0, a_s=1.0,
        )
        got = [list(r.item_indices) for r in lists]
        assert got == expected

        # User 2's pressured list moves one slot into the unserved group.
        plain = RerankSession(ds, params, policy="top_k").run()
        g1_fair = sum(1 for i in lists[1].item_indices if groups[i] == "g1")
        g1_plain = sum(1 for i in plain[1].item_indices if groups[i] == "g1")
        assert g1_fair == g1_plain + 1

    def test_adjusted_scores_sorted_desc(self):
        ds, k = random_tiny_market(5, n_users=(2, 4), k=2)
        session = RerankSession(ds, TaxationParams(2.0, 0.5, k=k))
        ranked = session.step()
        diffs = np.diff(ranked.adjusted_scores)
        assert np.all(diffs <= 0)

    def test_exhaustion_raises(self):
        ds = make_dataset([[0.9, 0.5]], ["a", "b"], k=1)
        session = RerankSession(ds, TaxationParams(1.0, 1.0, k=1))
        session.run()
        with pytest.raises(SessionExhaustedError):
            session.step()

    def test_min_regularizer_penalizes_leading_group(self):
        # Group a has utility lead; equal raw scores tip toward group b.
        ds = make_dataset(
            [[1.0, 1.0], [0.5, 0.5]], ["a", "b"], k=1
        )
        params = TaxationParams(1.0, 1.0, k=1)
        session = RerankSession(ds, params, policy="min_regularizer(1)")
        first = session.step()
        assert first.items == ("i0",)  # tie on raw scores, index tie-break
        second = session.step()
        assert second.items == ("i1",)  # penalty now favors group b


class TestRunSession:
    def test_empty_market(self):
        ds = make_dataset(np.zeros((0, 3)), ["a", "b", "b"])
        session = RerankSession(ds, TaxationParams(1.0, 1.0, k=2))
        assert session.run() == []

    def test_zero_gradient_equivalence_property(self):
        result = check_zero_gradient_equivalence()
        assert result.passed, result.detail

    def test_three_user_session_matches_simulation(self):
        rng = np.random.default_rng(8)
        scores = rng.uniform(0.1, 2.0, size=(3, 6))
        groups = ["g0", "g0", "g1", "g1", "g2", "g2"]
        ds = make_dataset(scores, groups, k=2)
        params = TaxationParams(1.5, -1.0, a_e=0.5, a_s=0.3, k=2)
        lists = RerankSession(ds, params).run()
        expected = simulate_engine(
            scores.tolist(), {j: j // 2 for j in range(6)}, k=2,
            alpha=1.5, beta=-1.0, a_e=0.5, a_s=0.3,
        )
        assert [list(r.item_indices) for r in lists] == expected

    def test_utility_conservation_property(self):
        result = check_utility_conservation()
        assert result.passed, result.detail

    def test_determinism_property(self):
        result = check_determinism()
        assert result.passed, result.detail

    def test_policy_parse_rejects_unknown(self):
        with pytest.raises(ParameterError):
            Policy.parse("mirror_descent")


def brute_force_welfare(ds, params):
    """Second enumeration route: reversed-order product over combinations."""
    per_user = []
    for u in range(ds.n_users):
        cand = ds.candidate_indices(u).tolist()
        per_user.append(list(combinations(cand, params.k))[::-1])
    sign = (params.alpha * params.beta > 0) - (params.alpha * params.beta < 0)
    best = -math.inf
    for allocation in product(*per_user):
        v = [1.0] * ds.n_groups
        welfare = 0.0
        for u, items in enumerate(allocation):
            for i in items:
                s = float(ds.scores[u, i])
                welfare += s
                v[int(ds.group_of[i])] += s
        welfare -= sign * sum(x**params.beta for x in v) ** params.alpha
        best = max(best, welfare)
    return best


class TestWelfareOracle:
    def test_single_user_linear_cost(self):
        ds = make_dataset([[0.3, 0.9, 0.5]], ["a", "b", "b"], k=1)
        params = TaxationParams(1.0, 1.0, k=1)
        alloc, welfare = welfare_oracle(ds, params)
        # Linear cost is allocation-independent; ties break to max score.
        assert alloc[0].tolist() == [1]
        assert welfare == pytest.approx(0.9 - (2 + 0.9), rel=1e-9)

    def test_matches_reversed_enumeration(self):
        for seed in range(5):
            ds, k = random_tiny_market(
                seed, n_users=(2, 4), n_items=(5, 7), k=2, lo=0.2, hi=2.0
            )
            params = TaxationParams(2.0, 1.0, k=k)
            alloc, welfare = welfare_oracle(ds, params)
            assert welfare == pytest.approx(brute_force_welfare(ds, params), rel=1e-9)
            assert allocation_objective(ds, alloc, params) == pytest.approx(
                welfare, rel=1e-9
            )

    def test_instance_too_large(self):
        ds = make_dataset(
            np.linspace(0.1, 1.0, 25)[None, :],
            [f"g{j % 2}" for j in range(25)],
            k=12,
        )
        with pytest.raises(InstanceTooLargeError) as err:
            welfare_oracle(ds, TaxationParams(1.0, 1.0, k=12))
        assert err.value.context["count"] == math.comb(25, 12)

    def test_oracle_dominates_every_policy(self):
        policies = ["top_k", "manifold_rank", "min_regularizer(0.5)"]
        for seed in range(50):
            ds, k = random_tiny_market(
                seed, n_users=(2, 4), n_items=(5, 8), k=2, lo=0.5, hi=2.5
            )
            params = TaxationParams(0.5, 2.0, k=k)
            _, best = welfare_oracle(ds, params)
            for policy in policies:
                lists = RerankSession(ds, params, policy=policy).run()
                achieved = allocation_objective(
                    ds, [r.item_indices for r in lists], params
                )
                assert best >= achieved - 1e-9


class TestDemandResponse:
    def test_zero_prices_match_top_k_counts(self):
        ds, k = random_tiny_market(3, n_users=(3, 5), k=2)
        counts = demand_response(ds, np.zeros(ds.n_groups), k)
        expected = np.zeros(ds.n_groups, dtype=int)
        for ranked in ideal_lists(ds, k):
            for i in ranked.item_indices:
                expected[ds.group_of[i]] += 1
        assert counts.tolist() == expected.tolist()

    def test_priced_out_group(self):
        ds = make_dataset(
            [[0.9, 0.8, 0.7, 0.6], [0.5, 0.6, 0.7, 0.8]],
            ["a", "a", "b", "b"],
            k=2,
        )
        counts = demand_response(ds, [1e9, 0.0], 2)
        assert counts[0] == 0
        assert counts[1] == 4

    def test_law_of_demand_property(self):
        result = check_law_of_demand()
        assert result.passed, result.detail

    def test_supply_monotonicity_property(self):
        result = check_supply_monotonicity()
        assert result.passed, result.detail

    def test_rejects_bad_prices(self):
        ds, k = random_tiny_market(4, n_users=(2, 3), k=1)
        with pytest.raises(ParameterError):
            demand_response(ds, [0.0], k)  # wrong length
        with pytest.raises(ParameterError):
            demand_response(ds, [np.inf] * ds.n_groups, k)
