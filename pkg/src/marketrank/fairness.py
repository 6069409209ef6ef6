"""Taxation cost functions and the fairness-metric presets they generalize.

The per-group cost is sign(alpha*beta) * v_g^beta * G^(alpha-1) with
G = sum_j v_j^beta; the total market cost is sign(alpha*beta) * G^alpha.
Powers are evaluated naively first and retried in the log domain when an
intermediate overflows (utilities are always >= 1, so logs are safe);
results that are genuinely unrepresentable raise NonFiniteResultError.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .core import MIN_ABS_BETA, TaxationParams
from .errors import NonFiniteResultError, ParameterError, UnsupportedPresetError

PROPORTIONAL_BETA = 1e-3


def _sign(x: float) -> float:
    if x > 0:
        return 1.0
    if x < 0:
        return -1.0
    return 0.0


def _as_utilities(v) -> np.ndarray:
    # The engine keeps utilities >= 1; the cost formulas themselves are
    # defined for any positive utility, which finite-difference probes
    # (two-sided, at the v=1 boundary) rely on.
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or len(v) == 0:
        raise ParameterError("utility vector must be a nonempty 1-d array")
    if np.any(v <= 0.0) or not np.all(np.isfinite(v)):
        raise ParameterError("all group utilities must be finite and positive")
    return v


def log_group_power_sum(v, beta: float) -> float:
    """log of G = sum_g v_g^beta, computed without overflow."""
    v = _as_utilities(v)
    return float(logsumexp(beta * np.log(v)))


def group_power_sum(v, beta: float) -> float:
    """G = sum_g v_g^beta. Raises NonFiniteResultError on overflow."""
    v = _as_utilities(v)
    with np.errstate(over="ignore"):
        g = float(np.sum(np.power(v, beta)))
    if math.isfinite(g):
        return g
    log_g = float(logsumexp(beta * np.log(v)))
    if log_g < 709.0:
        return math.exp(log_g)
    raise NonFiniteResultError("group power sum overflowed", beta=beta)


def _checked_exp(log_value: float, what: str, params: TaxationParams) -> float:
    if log_value >= 709.0:
        raise NonFiniteResultError(
            f"{what} overflowed", alpha=params.alpha, beta=params.beta
        )
    return math.exp(log_value)


def taxation_cost(v_g: float, G: float, params: TaxationParams) -> float:
    """Per-group cost sign(alpha*beta) * v_g^beta * G^(alpha-1).

    ``G`` is the group power sum precomputed by the caller.
    """
    if v_g <= 0.0:
        raise ParameterError("group utility must be positive", v_g=v_g)
    if G <= 0 or not math.isfinite(G):
        raise NonFiniteResultError("group power sum must be positive finite", G=G)
    s = _sign(params.alpha * params.beta)
    if s == 0.0:
        return 0.0
    with np.errstate(over="ignore"):
        val = float(np.power(v_g, params.beta) * np.power(G, params.alpha - 1.0))
    if math.isfinite(val):
        return s * val
    log_r = params.beta * math.log(v_g) + (params.alpha - 1.0) * math.log(G)
    return s * _checked_exp(log_r, "taxation cost", params)


def total_cost(v, params: TaxationParams) -> float:
    """Total market cost sign(alpha*beta) * (sum_g v_g^beta)^alpha."""
    v = _as_utilities(v)
    s = _sign(params.alpha * params.beta)
    if s == 0.0:
        return 0.0
    with np.errstate(over="ignore"):
        g = float(np.sum(np.power(v, params.beta)))
        val = float(np.power(g, params.alpha)) if math.isfinite(g) else math.inf
    if math.isfinite(val):
        return s * val
    log_g = float(logsumexp(params.beta * np.log(v)))
    return s * _checked_exp(params.alpha * log_g, "total cost", params)


def marginal_tax(v, g: int, params: TaxationParams) -> float:
    """d(total cost)/d v_g = sign(ab)*a*b * G^(alpha-1) * v_g^(beta-1).

    Always >= 0: the tax liability never decreases with utility.
    """
    v = _as_utilities(v)
    a, b = params.alpha, params.beta
    scale = _sign(a * b) * a * b
    if scale == 0.0:
        return 0.0
    with np.errstate(over="ignore"):
        gsum = float(np.sum(np.power(v, b)))
        if math.isfinite(gsum):
            val = float(
                scale * np.power(gsum, a - 1.0) * np.power(v[g], b - 1.0)
            )
        else:
            val = math.inf
    if math.isfinite(val):
        return val
    log_g = float(logsumexp(b * np.log(v)))
    log_m = math.log(scale) + (a - 1.0) * log_g + (b - 1.0) * math.log(v[g])
    return _checked_exp(log_m, "marginal tax", params)


def convexity_direction(v, g: int, params: TaxationParams) -> int:
    """Sign of the total cost's second derivative in v_g: -1, 0, or +1.

    Equals sign((alpha-1)*beta*v_g^beta + (beta-1)*G); multiplying the raw
    gradient by this direction keeps the effective cost convex.
    """
    v = _as_utilities(v)
    a, b = params.alpha, params.beta
    # Signed sum of two log-scale terms; factor out the dominant magnitude
    # so the sign survives even when the terms themselves would overflow.
    terms = []
    if (a - 1.0) * b != 0.0:
        terms.append(((a - 1.0) * b, b * math.log(v[g])))
    if b - 1.0 != 0.0:
        terms.append((b - 1.0, log_group_power_sum(v, b)))
    if not terms:
        return 0
    m = max(lv for _, lv in terms)
    val = sum(c * math.exp(lv - m) for c, lv in terms)
    return int(np.sign(val))


@dataclass(frozen=True)
class FairnessPreset:
    """Named fairness function mapped onto (alpha, beta).

    Supported: p_norm(p), elastic(t), alpha_fair(a), proportional.
    max_min corresponds to infinite rates and is rejected.
    """

    name: str
    value: Optional[float] = None

    _PATTERN = re.compile(r"^\s*([a-z_]+)\s*(?:\(\s*([-+0-9.eE]+)\s*\))?\s*$")

    @classmethod
    def parse(cls, text: str) -> "FairnessPreset":
        m = cls._PATTERN.match(text)
        if not m:
            raise UnsupportedPresetError(f"cannot parse preset {text!r}")
        value = float(m.group(2)) if m.group(2) is not None else None
        return cls(name=m.group(1), value=value)

    def __str__(self) -> str:
        if self.value is None:
            return self.name
        return f"{self.name}({self.value:g})"


def resolve_preset(preset: FairnessPreset | str) -> tuple[float, float]:
    """Return the (alpha, beta) pair a preset stands for.

    p_norm(p) -> (1/p, p); elastic(t) -> (1/t, 1-t); alpha_fair(a) -> (1, 1-a);
    proportional -> (1, 1e-3), approximating the log-utility limit beta -> 0.
    max_min needs infinite rates and raises UnsupportedPresetError.
    """
    if isinstance(preset, str):
        preset = FairnessPreset.parse(preset)
    name, value = preset.name, preset.value

    if name == "max_min":
        raise UnsupportedPresetError(
            "max_min requires alpha=inf, beta=-inf; use a large p_norm or the "
            "MMF metric to evaluate worst-off groups"
        )
    if name == "proportional":
        return 1.0, PROPORTIONAL_BETA
    if value is None:
        raise UnsupportedPresetError(f"preset {name!r} requires a parameter value")
    if name == "p_norm":
        if abs(value) < MIN_ABS_BETA:
            raise UnsupportedPresetError("p_norm needs |p| >= 1e-6")
        return 1.0 / value, value
    if name == "elastic":
        if value == 0.0 or abs(1.0 - value) < MIN_ABS_BETA:
            raise UnsupportedPresetError(
                "elastic needs t != 0 and |1 - t| >= 1e-6", t=value
            )
        return 1.0 / value, 1.0 - value
    if name == "alpha_fair":
        if abs(1.0 - value) < MIN_ABS_BETA:
            raise UnsupportedPresetError(
                "alpha_fair needs |1 - a| >= 1e-6 (a=1 is the proportional limit)",
                a=value,
            )
        return 1.0, 1.0 - value
    raise UnsupportedPresetError(f"unknown preset {name!r}")


def preset_params(
    preset: FairnessPreset | str,
    a_e: float = 1.0,
    a_s: float = 1.0,
    k: int = 10,
    box: tuple[float, float] = (-3.0, 3.0),
) -> TaxationParams:
    """Build full TaxationParams from a preset plus demand weights."""
    alpha, beta = resolve_preset(preset)
    return TaxationParams(alpha=alpha, beta=beta, a_e=a_e, a_s=a_s, k=k, box=box)
