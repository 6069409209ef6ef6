"""Supply-side and demand-side gradients of the online re-ranking loop.

The supply gradient prices each group by the convexity-corrected derivative
of its taxation cost. The demand gradient is a per-user scalar built from the
entropy and skewness of that user's candidate scores: diverse preferences
(high entropy) tolerate taxation, concentrated preferences (high skewness)
do not.
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

from .core import TaxationParams
from .errors import AllZeroScoresError, NonFiniteGradientError, ParameterError

ENTROPY_EPS = 1e-12
VARIANCE_FLOOR = 1e-12


def supply_gradient(v, params: TaxationParams) -> np.ndarray:
    """Per-group penalty eta_g = c_g * r(v_g) * gamma_g.

    c_g is the convexity direction, r the per-group taxation cost, and
    gamma_g = beta * (1/v_g + (alpha-1) * v_g^(beta-1) / G) the curvature
    factor with G = sum_j v_j^beta. Evaluated in the log domain groupwise.
    """
    v = np.asarray(v, dtype=np.float64)
    if np.any(v < 1.0) or not np.all(np.isfinite(v)):
        raise ParameterError("all group utilities must be finite and >= 1")
    a, b = params.alpha, params.beta
    log_v = np.log(v)
    log_g = float(logsumexp(b * log_v))

    # Direction: sign((alpha-1)*beta*v_g^beta + (beta-1)*G), stabilized by
    # factoring out the dominant log magnitude per group.
    coeff1, coeff2 = (a - 1.0) * b, b - 1.0
    if coeff1 == 0.0 and coeff2 == 0.0:
        return np.zeros_like(v)
    log_vb = b * log_v
    if coeff1 == 0.0:
        direction = np.full_like(v, np.sign(coeff2))
    elif coeff2 == 0.0:
        direction = np.full_like(v, np.sign(coeff1))
    else:
        m = np.maximum(log_vb, log_g)
        direction = np.sign(coeff1 * np.exp(log_vb - m) + coeff2 * np.exp(log_g - m))

    sign_cost = np.sign(a * b)
    if sign_cost == 0.0:
        return np.zeros_like(v)
    log_r = b * log_v + (a - 1.0) * log_g
    # gamma is bounded for v >= 1 (v^(beta-1)/G <= 1/v), safe in linear space.
    gamma = b * (1.0 / v + (a - 1.0) * np.exp((b - 1.0) * log_v - log_g))
    with np.errstate(over="ignore"):
        eta = direction * sign_cost * np.exp(log_r) * gamma
    if not np.all(np.isfinite(eta)):
        raise NonFiniteGradientError(
            "supply gradient overflowed", alpha=a, beta=b, max_utility=float(v.max())
        )
    return eta


def score_entropy(s, allow_all_zero: bool = True) -> float:
    """Shannon entropy (nats) of scores normalized with an additive epsilon.

    p_i = (s_i + eps) / sum_j (s_j + eps); all-zero input therefore yields
    the uniform entropy ln(n) unless ``allow_all_zero`` is False.
    """
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 1 or len(s) == 0:
        raise ParameterError("score vector must be a nonempty 1-d array")
    if np.any(s < 0) or not np.all(np.isfinite(s)):
        raise ParameterError("scores must be finite and nonnegative")
    total = float(s.sum())
    if total == 0.0 and not allow_all_zero:
        raise AllZeroScoresError("all scores are zero and the uniform fallback is off")
    p = (s + ENTROPY_EPS) / (total + len(s) * ENTROPY_EPS)
    return float(-np.sum(p * np.log(p)))


def score_skewness(s) -> float:
    """Standardized third moment m3 / m2^1.5 with population moments.

    Returns 0 for (near-)constant inputs (m2 below 1e-12).
    """
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 1 or len(s) == 0:
        raise ParameterError("score vector must be a nonempty 1-d array")
    d = s - s.mean()
    m2 = float(np.mean(d * d))
    if m2 < VARIANCE_FLOOR:
        return 0.0
    m3 = float(np.mean(d * d * d))
    return m3 / m2 ** 1.5


def score_kurtosis(s) -> float:
    """Excess kurtosis m4 / m2^2 - 3; 0 for (near-)constant inputs."""
    s = np.asarray(s, dtype=np.float64)
    d = s - s.mean()
    m2 = float(np.mean(d * d))
    if m2 < VARIANCE_FLOOR:
        return 0.0
    m4 = float(np.mean(d ** 4))
    return m4 / (m2 * m2) - 3.0


def demand_gradient(s, params: TaxationParams, clamp: bool = False) -> float:
    """Per-user multiplier zeta = a_e * Entropy(s) - a_s * Skew(s).

    A negative zeta flips the supply penalty into a bonus; pass
    ``clamp=True`` to floor it at zero instead.
    """
    zeta = params.a_e * score_entropy(s) - params.a_s * score_skewness(s)
    if clamp and zeta < 0.0:
        return 0.0
    return zeta
