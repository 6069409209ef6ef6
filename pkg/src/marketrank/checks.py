"""Executable property suites for the market laws and engine invariants.

Each check draws seeded random instances, probes a stated property, and
returns a result with the worst observed violation. The `verify` CLI
command runs all of them; the test suite asserts on them individually.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import TaxationParams
from .errors import MarketRankError
from .experiments import SynthSpec, synth_dataset
from .fairness import (
    convexity_direction,
    group_power_sum,
    marginal_tax,
    taxation_cost,
    total_cost,
)
from .gradient import supply_gradient
from .rerank import RerankSession, demand_response

FD_RELATIVE_TOL = 1e-4


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _draw_params(rng: np.random.Generator) -> tuple[float, float]:
    alpha = float(rng.uniform(-3.0, 3.0))
    beta = float(rng.uniform(-3.0, 3.0))
    while abs(beta) < 1e-6:
        beta = float(rng.uniform(-3.0, 3.0))
    return alpha, beta


def _draw_utilities(rng: np.random.Generator) -> np.ndarray:
    n = int(rng.integers(2, 9))
    return rng.uniform(1.0, 10.0, size=n)


def check_marginal_tax_nonnegative(seed: int = 11, draws: int = 1000) -> CheckResult:
    """Marginal tax stays >= 0 over random parameter and utility draws."""
    rng = np.random.default_rng(seed)
    worst = np.inf
    for _ in range(draws):
        alpha, beta = _draw_params(rng)
        v = _draw_utilities(rng)
        params = TaxationParams(alpha=alpha, beta=beta)
        g = int(rng.integers(0, len(v)))
        worst = min(worst, marginal_tax(v, g, params))
    return CheckResult(
        name="marginal_tax_nonnegative",
        passed=worst >= -1e-12,
        detail=f"min marginal tax over {draws} draws: {worst:.3e}",
    )


def check_marginal_tax_matches_fd(seed: int = 12, draws: int = 1000) -> CheckResult:
    """Marginal tax agrees with a central difference of the total cost."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(draws):
        alpha, beta = _draw_params(rng)
        v = _draw_utilities(rng)
        params = TaxationParams(alpha=alpha, beta=beta)
        g = int(rng.integers(0, len(v)))
        analytic = marginal_tax(v, g, params)
        h = 1e-6 * v[g]
        hi, lo = v.copy(), v.copy()
        hi[g] += h
        lo[g] -= h
        fd = (total_cost(hi, params) - total_cost(lo, params)) / (2.0 * h)
        scale = max(abs(analytic), abs(fd))
        noise_floor = 1e-7 * (1.0 + abs(total_cost(v, params)))
        if scale > noise_floor:
            worst = max(worst, abs(analytic - fd) / scale)
    return CheckResult(
        name="marginal_tax_matches_finite_difference",
        passed=worst <= FD_RELATIVE_TOL,
        detail=f"max relative FD deviation over {draws} draws: {worst:.3e}",
    )


def check_supply_gradient_matches_fd(seed: int = 13, draws: int = 500) -> CheckResult:
    """Supply gradient equals the direction times the finite-difference
    derivative of the per-group cost, with the power sum treated as
    dependent on the probed utility.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(draws):
        alpha, beta = _draw_params(rng)
        v = _draw_utilities(rng)
        params = TaxationParams(alpha=alpha, beta=beta)
        g = int(rng.integers(0, len(v)))
        eta = supply_gradient(v, params)[g]
        c = convexity_direction(v, g, params)
        h = 1e-6 * v[g]

        def cost_at(t: float) -> float:
            w = v.copy()
            w[g] = t
            return taxation_cost(t, group_power_sum(w, beta), params)

        fd = (cost_at(v[g] + h) - cost_at(v[g] - h)) / (2.0 * h)
        target = c * fd
        scale = max(abs(eta), abs(target))
        # The derivative factors can cancel; compare against the term scale
        # so finite-difference noise near a zero crossing is not mistaken
        # for a gradient error.
        gsum = group_power_sum(v, beta)
        term_scale = abs(taxation_cost(v[g], gsum, params)) * abs(beta) * (
            1.0 / v[g] + abs(alpha - 1.0) * v[g] ** (beta - 1.0) / gsum
        )
        noise_floor = 1e-7 * (1.0 + term_scale)
        if scale > noise_floor:
            worst = max(worst, abs(eta - target) / scale)
    return CheckResult(
        name="supply_gradient_matches_finite_difference",
        passed=worst <= FD_RELATIVE_TOL,
        detail=f"max relative FD deviation over {draws} draws: {worst:.3e}",
    )


def check_total_cost_additivity(seed: int = 14, draws: int = 500) -> CheckResult:
    """Total cost equals the sum of per-group taxation costs."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(draws):
        alpha, beta = _draw_params(rng)
        v = _draw_utilities(rng)
        params = TaxationParams(alpha=alpha, beta=beta)
        gsum = group_power_sum(v, beta)
        total = total_cost(v, params)
        parts = sum(taxation_cost(x, gsum, params) for x in v)
        worst = max(worst, abs(total - parts) / max(abs(total), 1e-300))
    return CheckResult(
        name="total_cost_additivity",
        passed=worst <= 1e-10,
        detail=f"max relative additivity gap over {draws} draws: {worst:.3e}",
    )


def check_convexification(seed: int = 15, draws: int = 500) -> CheckResult:
    """Direction times the second difference of the total cost is >= 0.

    Second differences of very large totals carry rounding noise of order
    eps * |total| / h^2; the bound is widened accordingly so only genuine
    curvature sign errors count as violations.
    """
    rng = np.random.default_rng(seed)
    eps = float(np.finfo(np.float64).eps)
    violations = 0
    worst = np.inf
    for _ in range(draws):
        alpha, beta = _draw_params(rng)
        v = _draw_utilities(rng)
        params = TaxationParams(alpha=alpha, beta=beta)
        g = int(rng.integers(0, len(v)))
        c = convexity_direction(v, g, params)
        h = 1e-4 * v[g]
        hi, lo = v.copy(), v.copy()
        hi[g] += h
        lo[g] -= h
        t_hi, t_mid, t_lo = (
            total_cost(hi, params),
            total_cost(v, params),
            total_cost(lo, params),
        )
        second = (t_hi - 2.0 * t_mid + t_lo) / (h * h)
        noise = 64.0 * eps * max(abs(t_hi), abs(t_mid), abs(t_lo)) / (h * h)
        bound = max(1e-8, noise)
        worst = min(worst, c * second + bound)
        if c * second < -bound:
            violations += 1
    return CheckResult(
        name="convexification",
        passed=violations == 0,
        detail=f"{violations} sign violations over {draws} draws "
        f"(worst margin {worst:.3e})",
    )


def _random_tiny_instance(rng: np.random.Generator, max_users: int = 10,
                          max_items: int = 12) -> tuple:
    spec = SynthSpec(
        n_users=int(rng.integers(1, max_users + 1)) if max_users > 1 else 1,
        n_items=int(rng.integers(6, max_items + 1)),
        n_groups=int(rng.integers(2, 4)),
        k=int(rng.integers(1, 3)),
        score_distribution="uniform",
        group_layout="balanced",
        seed=int(rng.integers(0, 2**31)),
    )
    return synth_dataset(spec), spec.k


def check_law_of_demand(seed: int = 16, instances: int = 100) -> CheckResult:
    """Aggregate group demand never increases as that group's price rises."""
    rng = np.random.default_rng(seed)
    violations = 0
    for _ in range(instances):
        ds, k = _random_tiny_instance(rng)
        base_prices = rng.uniform(0.0, 0.5, size=ds.n_groups)
        g = int(rng.integers(0, ds.n_groups))
        previous = None
        for price in np.linspace(0.0, 1.0, 11):
            prices = base_prices.copy()
            prices[g] = price
            count = int(demand_response(ds, prices, k)[g])
            if previous is not None and count > previous:
                violations += 1
                break
            previous = count
    return CheckResult(
        name="law_of_demand",
        passed=violations == 0,
        detail=f"{violations} violations over {instances} instances x 11 prices",
    )


def check_supply_monotonicity(seed: int = 17, instances: int = 50) -> CheckResult:
    """For a fixed user, growing the group penalty never adds items of that
    group to the list (behavioral law of supply under the engine's pricing).
    """
    rng = np.random.default_rng(seed)
    violations = 0
    for _ in range(instances):
        ds, k = _random_tiny_instance(rng, max_users=1, max_items=12)
        u = 0
        cand = ds.candidate_indices(u)
        scores = ds.scores[u, cand]
        groups = ds.group_of[cand]
        g = int(rng.integers(0, ds.n_groups))
        previous = None
        for penalty in np.linspace(0.0, 1.5, 11):
            adjusted = scores - penalty * (groups == g)
            order = np.lexsort((cand, -adjusted))[:k]
            count = int(np.sum(groups[order] == g))
            if previous is not None and count > previous:
                violations += 1
                break
            previous = count
    return CheckResult(
        name="supply_monotonicity",
        passed=violations == 0,
        detail=f"{violations} violations over {instances} penalty sweeps",
    )


def check_zero_gradient_equivalence(seed: int = 18, instances: int = 20) -> CheckResult:
    """alpha=1, beta=1 zeroes the gradient, reproducing plain top-K exactly."""
    rng = np.random.default_rng(seed)
    mismatches = 0
    for _ in range(instances):
        ds, k = _random_tiny_instance(rng)
        params = TaxationParams(alpha=1.0, beta=1.0, k=k)
        fair = RerankSession(ds, params, policy="manifold_rank").run()
        plain = RerankSession(ds, params, policy="top_k").run()
        for a, b in zip(fair, plain):
            if a.items != b.items:
                mismatches += 1
                break
    return CheckResult(
        name="zero_gradient_equivalence",
        passed=mismatches == 0,
        detail=f"{mismatches} mismatching sessions over {instances} instances",
    )


def check_utility_conservation(seed: int = 19, instances: int = 20) -> CheckResult:
    """Final state equals the initialization plus the emitted in-group scores.

    The replay accumulates in the same list-then-slot order the engine uses,
    so equality is required bit for bit.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(instances):
        ds, k = _random_tiny_instance(rng)
        alpha, beta = _draw_params(rng)
        params = TaxationParams(alpha=alpha, beta=beta, k=k)
        session = RerankSession(ds, params, policy="manifold_rank")
        lists = session.run()
        expected = np.ones(ds.n_groups)
        for ranked in lists:
            for item, score in zip(ranked.item_indices, ranked.raw_scores):
                expected[ds.group_of[item]] += score
        worst = max(worst, float(np.max(np.abs(session.state.v - expected))))
    return CheckResult(
        name="utility_conservation",
        passed=worst == 0.0,
        detail=f"max absolute conservation gap: {worst:.3e}",
    )


def check_determinism(seed: int = 20, instances: int = 5) -> CheckResult:
    """Equal seeds and inputs reproduce identical sessions bit for bit."""
    rng = np.random.default_rng(seed)
    mismatches = 0
    for _ in range(instances):
        ds, k = _random_tiny_instance(rng)
        alpha, beta = _draw_params(rng)
        params = TaxationParams(alpha=alpha, beta=beta, k=k)
        runs = []
        for _ in range(2):
            session = RerankSession(
                ds, params, policy="manifold_rank", seed=7, shuffle_arrivals=True
            )
            runs.append(session.run())
        for a, b in zip(*runs):
            same = a.items == b.items and np.array_equal(
                a.adjusted_scores, b.adjusted_scores
            )
            if not same:
                mismatches += 1
                break
    return CheckResult(
        name="determinism",
        passed=mismatches == 0,
        detail=f"{mismatches} replay mismatches over {instances} instances",
    )


ALL_CHECKS = (
    check_marginal_tax_nonnegative,
    check_marginal_tax_matches_fd,
    check_supply_gradient_matches_fd,
    check_total_cost_additivity,
    check_convexification,
    check_law_of_demand,
    check_supply_monotonicity,
    check_zero_gradient_equivalence,
    check_utility_conservation,
    check_determinism,
)


def run_all_checks() -> list[CheckResult]:
    results = []
    for check in ALL_CHECKS:
        try:
            results.append(check())
        except MarketRankError as exc:
            results.append(
                CheckResult(name=check.__name__, passed=False, detail=str(exc))
            )
    return results
