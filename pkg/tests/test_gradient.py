import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from marketrank import (
    TaxationParams,
    demand_gradient,
    score_entropy,
    score_skewness,
    supply_gradient,
)
from marketrank.checks import check_supply_gradient_matches_fd
from marketrank.errors import AllZeroScoresError, ParameterError
from marketrank.gradient import score_kurtosis

score_vectors = st.lists(
    st.floats(min_value=0.0, max_value=100.0, allow_nan=False),
    min_size=2,
    max_size=12,
).filter(lambda s: sum(s) > 0)


def plain_entropy(values):
    """Independent oracle: direct -sum p ln p with epsilon normalization."""
    eps = 1e-12
    total = sum(x + eps for x in values)
    return -sum((x + eps) / total * math.log((x + eps) / total) for x in values)


def plain_skewness(values):
    """Independent oracle: direct population moment computation."""
    n = len(values)
    mu = sum(values) / n
    m2 = sum((x - mu) ** 2 for x in values) / n
    if m2 < 1e-12:
        return 0.0
    m3 = sum((x - mu) ** 3 for x in values) / n
    return m3 / m2**1.5


class TestSupplyGradient:
    def test_hand_value(self):
        eta = supply_gradient([1.0, 1.0], TaxationParams(2.0, 1.0))
        assert eta == pytest.approx([3.0, 3.0], rel=1e-12)

    def test_zero_at_linear_rates(self):
        eta = supply_gradient([4.0, 9.0, 2.5], TaxationParams(1.0, 1.0))
        assert np.all(eta == 0.0)

    def test_symmetric_utilities_give_equal_entries(self):
        rng = np.random.default_rng(21)
        for _ in range(20):
            alpha = float(rng.uniform(-3, 3))
            beta = float(rng.uniform(0.1, 3)) * (1 if rng.random() < 0.5 else -1)
            c = float(rng.uniform(1, 10))
            eta = supply_gradient([c] * 4, TaxationParams(alpha, beta))
            assert np.allclose(eta, eta[0], rtol=1e-12, atol=0)

    def test_rejects_invalid_state(self):
        with pytest.raises(ParameterError):
            supply_gradient([0.5, 2.0], TaxationParams(2.0, 1.0))

    def test_matches_finite_difference_property(self):
        result = check_supply_gradient_matches_fd()
        assert result.passed, result.detail


class TestScoreEntropy:
    def test_uniform_is_maximal(self):
        assert score_entropy([0.25] * 4) == pytest.approx(math.log(4), rel=1e-12)

    def test_point_mass_is_near_zero(self):
        assert score_entropy([1.0, 0.0, 0.0, 0.0]) == pytest.approx(0.0, abs=1e-10)

    def test_oracle_value(self):
        s = [0.5, 0.3, 0.2]
        assert score_entropy(s) == pytest.approx(plain_entropy(s), rel=1e-12)
        assert score_entropy(s) == pytest.approx(1.029653014064991, rel=1e-12)

    def test_all_zero_fallback_is_uniform(self):
        assert score_entropy([0.0, 0.0, 0.0]) == pytest.approx(math.log(3), rel=1e-9)

    def test_all_zero_strict_raises(self):
        with pytest.raises(AllZeroScoresError):
            score_entropy([0.0, 0.0], allow_all_zero=False)

    @given(score_vectors)
    @settings(max_examples=60, deadline=None)
    def test_permutation_invariant(self, s):
        shuffled = list(reversed(s))
        assert score_entropy(shuffled) == pytest.approx(score_entropy(s), rel=1e-9)

    @given(score_vectors)
    @settings(max_examples=60, deadline=None)
    def test_constant_maximizes(self, s):
        n = len(s)
        assert score_entropy(s) <= score_entropy([1.0] * n) + 1e-9


class TestScoreSkewness:
    def test_symmetric_is_zero(self):
        assert score_skewness([1.0, 2.0, 3.0]) == 0.0

    def test_constant_guard(self):
        assert score_skewness([5.0, 5.0, 5.0]) == 0.0

    def test_right_tail_oracle_value(self):
        s = [0.0, 0.0, 0.0, 10.0]
        value = score_skewness(s)
        assert value == pytest.approx(plain_skewness(s), rel=1e-12)
        assert value == pytest.approx(1.1547005383792515, rel=1e-12)
        assert value > 0

    @given(
        st.lists(st.floats(-50, 50), min_size=3, max_size=10),
        st.floats(-20, 20),
        st.floats(0.1, 10),
    )
    @settings(max_examples=60, deadline=None)
    def test_translation_and_scale_invariance(self, s, shift, scale):
        base = score_skewness(s)
        moved = score_skewness([x + shift for x in s])
        scaled = score_skewness([x * scale for x in s])
        assert moved == pytest.approx(base, rel=1e-6, abs=1e-7)
        assert scaled == pytest.approx(base, rel=1e-6, abs=1e-7)

    def test_sign_flips_under_negation(self):
        s = [0.0, 0.0, 1.0, 9.0]
        assert score_skewness([-x for x in s]) == pytest.approx(
            -score_skewness(s), rel=1e-12
        )


class TestDemandGradient:
    def test_uniform_scores(self):
        p = TaxationParams(1.0, 1.0, a_e=1.0, a_s=1.0)
        zeta = demand_gradient([0.25] * 4, p)
        assert zeta == pytest.approx(math.log(4), rel=1e-12)

    def test_constant_scores(self):
        p = TaxationParams(1.0, 1.0, a_e=1.0, a_s=1.0)
        assert demand_gradient([7.0] * 5, p) == pytest.approx(math.log(5), rel=1e-12)

    def test_composed_oracle(self):
        s = [0.0, 0.0, 0.0, 10.0]
        p = TaxationParams(1.0, 1.0, a_e=0.1, a_s=1.0)
        expected = 0.1 * plain_entropy(s) - plain_skewness(s)
        assert demand_gradient(s, p) == pytest.approx(expected, rel=1e-12)

    def test_monotone_in_weights(self):
        s = [0.1, 0.2, 0.3, 8.0]  # positive entropy and skew
        assert plain_skewness(s) > 0
        lo = demand_gradient(s, TaxationParams(1.0, 1.0, a_e=0.2, a_s=0.5))
        hi = demand_gradient(s, TaxationParams(1.0, 1.0, a_e=0.9, a_s=0.5))
        assert hi > lo
        more_skew_weight = demand_gradient(s, TaxationParams(1.0, 1.0, a_e=0.2, a_s=0.9))
        assert more_skew_weight < lo

    def test_clamp(self):
        s = [0.0, 0.0, 0.0, 10.0]  # skew dominates: negative multiplier
        p = TaxationParams(1.0, 1.0, a_e=0.1, a_s=1.0)
        assert demand_gradient(s, p) < 0
        assert demand_gradient(s, p, clamp=True) == 0.0


def test_kurtosis_reference_values():
    # independent: excess kurtosis of a two-point even split is -2
    assert score_kurtosis([0.0, 1.0, 0.0, 1.0]) == pytest.approx(-2.0, rel=1e-12)
    assert score_kurtosis([3.0, 3.0]) == 0.0
