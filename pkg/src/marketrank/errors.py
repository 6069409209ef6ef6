"""Exception hierarchy. Every error carries a machine-readable ``code``."""


class MarketRankError(Exception):
    """Base class for all package errors."""

    code = "error"

    def __init__(self, message: str, **context):
        super().__init__(message)
        self.message = message
        self.context = context

    def __str__(self) -> str:
        if self.context:
            details = ", ".join(f"{k}={v}" for k, v in sorted(self.context.items()))
            return f"[{self.code}] {self.message} ({details})"
        return f"[{self.code}] {self.message}"


class ParameterError(MarketRankError):
    code = "invalid_parameter"


class NegativeScoreError(MarketRankError):
    code = "negative_score"


class UnmappedItemError(MarketRankError):
    code = "unmapped_item"


class CandidateTooSmallError(MarketRankError):
    code = "candidate_too_small"


class NonFiniteResultError(MarketRankError):
    code = "non_finite_result"


class NonFiniteGradientError(MarketRankError):
    code = "non_finite_gradient"


class AllZeroScoresError(MarketRankError):
    code = "all_zero_scores"


class AllZeroError(MarketRankError):
    code = "all_zero"


class ZeroIdealGainError(MarketRankError):
    code = "zero_ideal_gain"


class DegenerateTError(MarketRankError):
    code = "degenerate_t"


class UnsupportedPresetError(MarketRankError):
    code = "unsupported_preset"


class SessionExhaustedError(MarketRankError):
    code = "session_exhausted"


class InstanceTooLargeError(MarketRankError):
    code = "instance_too_large"


class SingularDesignError(MarketRankError):
    code = "singular_design"


class InvalidSpecError(MarketRankError):
    code = "invalid_spec"


class ParseError(MarketRankError):
    code = "parse_error"


class DuplicateTripletError(MarketRankError):
    code = "duplicate_triplet"


class NonFiniteScoreError(MarketRankError):
    code = "non_finite_score"


class ConfigError(MarketRankError):
    code = "invalid_config"
