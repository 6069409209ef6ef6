"""Experiment harness: parameter sweeps, Pareto extraction, per-step
trajectories, the demand-feature regression, and synthetic datasets.

Sweep configs are independent sessions over a shared read-only dataset, so
they may run in a process pool; results are always merged back in grid
enumeration order regardless of the execution schedule.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .core import (
    DEFAULT_PARAM_BOX,
    MIN_ABS_BETA,
    ScoreDataset,
    TaxationParams,
    build_dataset,
    validate_dataset,
)
from .errors import (
    InvalidSpecError,
    MarketRankError,
    ParameterError,
    SingularDesignError,
)
from .gradient import score_entropy, score_kurtosis, score_skewness
from .metrics import MetricBundle, ef_at_k, evaluate
from .rerank import Policy, RerankSession, ideal_lists

WORKERS_ENV_VAR = "MARKETRANK_WORKERS"

DEMAND_FEATURE_NAMES = (
    "entropy_mean",
    "entropy_var",
    "skewness_mean",
    "skewness_var",
    "kurtosis_mean",
    "kurtosis_var",
    "mean_mean",
    "mean_var",
    "std_mean",
    "std_var",
)


@dataclass(frozen=True)
class ExperimentConfig:
    """One grid point: a policy with its relevant parameters."""

    policy: Policy
    k: int
    alpha: float = 1.0
    beta: float = 1.0
    a_e: float = 1.0
    a_s: float = 1.0

    def taxation_params(self, box=DEFAULT_PARAM_BOX) -> TaxationParams:
        return TaxationParams(
            alpha=self.alpha, beta=self.beta, a_e=self.a_e, a_s=self.a_s,
            k=self.k, box=box,
        )

    def label(self) -> str:
        return (
            f"{self.policy} k={self.k} alpha={self.alpha:g} beta={self.beta:g} "
            f"a_e={self.a_e:g} a_s={self.a_s:g}"
        )


@dataclass(frozen=True)
class SweepGrid:
    """Cartesian parameter grid, enumerated policy-major in stable order.

    Taxation axes apply to manifold_rank only; lambda_values apply to
    min_regularizer only; top_k has no free parameters beyond k.
    """

    alpha_values: tuple[float, ...]
    beta_values: tuple[float, ...]
    a_e_values: tuple[float, ...] = (1.0,)
    a_s_values: tuple[float, ...] = (1.0,)
    policies: tuple[str, ...] = ("manifold_rank",)
    k_values: tuple[int, ...] = (10,)
    lambda_values: tuple[float, ...] = (0.1,)
    box: tuple[float, float] = DEFAULT_PARAM_BOX

    def __post_init__(self):
        for name in ("alpha_values", "beta_values", "a_e_values", "a_s_values",
                     "policies", "k_values", "lambda_values"):
            if len(getattr(self, name)) == 0:
                raise ParameterError(f"{name} must be nonempty")
        lo, hi = self.box
        for a in self.alpha_values:
            if not (lo <= a <= hi):
                raise ParameterError(f"alpha {a} outside box [{lo}, {hi}]")
        for b in self.beta_values:
            if not (lo <= b <= hi):
                raise ParameterError(f"beta {b} outside box [{lo}, {hi}]")
            if abs(b) < MIN_ABS_BETA:
                raise ParameterError(
                    f"beta {b} too close to the removable singularity at 0"
                )
        for w in self.a_e_values + self.a_s_values:
            if w <= 0:
                raise ParameterError("demand weights must be positive")
        for lam in self.lambda_values:
            if not (lo <= lam <= hi):
                raise ParameterError(
                    f"lambda {lam} outside box [{lo}, {hi}]; the regularizer "
                    "strength is swept over the same box as the taxation rates"
                )
        for k in self.k_values:
            if k < 1:
                raise ParameterError("ranking sizes must be positive")
        for name in self.policies:
            Policy.parse(name)

    def configs(self) -> list[ExperimentConfig]:
        out = []
        for pol_name in self.policies:
            base = Policy.parse(pol_name)
            for k in self.k_values:
                if base.name == "manifold_rank":
                    for alpha in self.alpha_values:
                        for beta in self.beta_values:
                            for a_e in self.a_e_values:
                                for a_s in self.a_s_values:
                                    out.append(ExperimentConfig(
                                        policy=base, k=k, alpha=alpha, beta=beta,
                                        a_e=a_e, a_s=a_s,
                                    ))
                elif base.name == "min_regularizer":
                    for lam in self.lambda_values:
                        out.append(ExperimentConfig(
                            policy=Policy("min_regularizer", lam=lam), k=k,
                        ))
                else:
                    out.append(ExperimentConfig(policy=base, k=k))
        return out


@dataclass
class ExperimentReport:
    """Metrics (or the failure) of one executed config."""

    config: ExperimentConfig
    metrics: Optional[MetricBundle] = None
    error_code: Optional[str] = None
    error_message: Optional[str] = None
    pareto_optimal: bool = False
    trajectory: Optional[list[tuple[int, float, float]]] = None
    grid_index: int = 0

    @property
    def ok(self) -> bool:
        return self.metrics is not None


def _run_one(args) -> ExperimentReport:
    ds, config, index, seed, clamp_zeta, zeta_override, ef_t, box = args
    report = ExperimentReport(config=config, grid_index=index)
    try:
        params = config.taxation_params(box=box)
        session = RerankSession(
            ds, params, policy=config.policy, seed=seed,
            clamp_zeta=clamp_zeta, zeta_override=zeta_override,
        )
        reranked = session.run()
        original = ideal_lists(ds, config.k)
        report.metrics = evaluate(original, reranked, session.state, params, ef_t=ef_t)
    except MarketRankError as exc:
        report.error_code = exc.code
        report.error_message = exc.message
    return report


def sweep_workers() -> int:
    raw = os.environ.get(WORKERS_ENV_VAR, "")
    if raw.strip():
        try:
            return max(1, int(raw))
        except ValueError:
            raise ParameterError(
                f"{WORKERS_ENV_VAR} must be an integer, got {raw!r}"
            ) from None
    return os.cpu_count() or 1


def run_sweep(
    ds: ScoreDataset,
    grid: SweepGrid,
    seed: int = 0,
    clamp_zeta: bool = False,
    zeta_override: Optional[float] = None,
    ef_t: float = 2.0,
    workers: Optional[int] = None,
) -> list[ExperimentReport]:
    """Run one session per grid point and evaluate it.

    Failed configs are reported with their error code instead of aborting
    the sweep. Reports come back in grid enumeration order.
    """
    configs = grid.configs()
    jobs = [
        (ds, config, i, seed, clamp_zeta, zeta_override, ef_t, grid.box)
        for i, config in enumerate(configs)
    ]
    n_workers = sweep_workers() if workers is None else max(1, workers)
    if n_workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(n_workers, len(jobs))) as pool:
            reports = list(pool.map(_run_one, jobs))
    else:
        reports = [_run_one(job) for job in jobs]
    pareto_frontier(reports)
    return reports


def pareto_frontier(
    reports: Sequence[ExperimentReport],
    accuracy_key: str = "ndcg",
    fairness_key: str = "ef",
) -> list[ExperimentReport]:
    """Mark and return the non-dominated configs on (accuracy, fairness).

    A report is dominated when another is >= on both keys and > on at least
    one. Failed reports never enter the frontier. Flags are rewritten on
    every report passed in.
    """
    scored = []
    for r in reports:
        r.pareto_optimal = False
        if r.ok:
            m = r.metrics.as_dict()
            scored.append((m[accuracy_key], m[fairness_key], r))
    if not scored:
        return []
    # Sweep accuracy groups in descending order; a point survives iff its
    # fairness strictly exceeds everything at strictly higher accuracy and
    # it tops its own accuracy group.
    scored.sort(key=lambda t: -t[0])
    frontier = []
    best_fair = -math.inf
    i = 0
    while i < len(scored):
        j = i
        while j < len(scored) and scored[j][0] == scored[i][0]:
            j += 1
        group = scored[i:j]
        group_best = max(f for _, f, _ in group)
        if group_best > best_fair:
            for _, f, r in group:
                if f == group_best:
                    r.pareto_optimal = True
                    frontier.append(r)
            best_fair = group_best
        i = j
    frontier.sort(key=lambda r: r.grid_index)
    return frontier


def constrained_best(
    reports: Sequence[ExperimentReport], ndcg_floor: float = 0.99
) -> Optional[ExperimentReport]:
    """Best fairness subject to an accuracy floor.

    Among reports with ndcg >= floor, picks max EF, then max MMF, then min
    GINI, then earliest grid position. None when nothing qualifies.
    """
    if not (0.0 < ndcg_floor <= 1.0):
        raise ParameterError("ndcg_floor must be in (0, 1]", floor=ndcg_floor)
    feasible = [r for r in reports if r.ok and r.metrics.ndcg >= ndcg_floor]
    if not feasible:
        return None
    return min(
        feasible,
        key=lambda r: (-r.metrics.ef, -r.metrics.mmf, r.metrics.gini, r.grid_index),
    )


def trajectory(
    ds: ScoreDataset,
    params: TaxationParams,
    policy: Policy | str = "manifold_rank",
    stride: int = 1,
    seed: int = 0,
    ef_t: float = 2.0,
) -> list[tuple[int, float, float]]:
    """(users_served, cumulative NDCG, current EF) every ``stride`` users."""
    if stride < 1:
        raise ParameterError("stride must be a positive integer", stride=stride)
    session = RerankSession(ds, params, policy=policy, seed=seed)
    original = ideal_lists(ds, params.k)
    by_user = {r.user_index: r for r in original}
    points = []
    ratio_sum = 0.0
    served = 0
    while not session.exhausted:
        fair = session.step()
        orig = by_user[fair.user_index]
        ranks = np.arange(1, params.k + 1, dtype=np.float64)
        discounts = np.log2(ranks + 1.0)
        ideal_gain = float(np.sum(orig.raw_scores / discounts))
        fair_gain = float(np.sum(fair.raw_scores / discounts))
        ratio_sum += fair_gain / ideal_gain
        served += 1
        if served % stride == 0 or session.exhausted:
            exposure = np.maximum(session.state.exposure(), 1e-12)
            points.append((served, ratio_sum / served, ef_at_k(exposure, t=ef_t)))
    return points


def demand_features(ds: ScoreDataset) -> np.ndarray:
    """Mean and variance across users of five per-user score statistics:
    entropy, skewness, excess kurtosis, mean, and standard deviation.
    """
    per_user = np.empty((ds.n_users, 5), dtype=np.float64)
    for u in range(ds.n_users):
        s = ds.scores[u, ds.candidate_indices(u)]
        per_user[u] = (
            score_entropy(s),
            score_skewness(s),
            score_kurtosis(s),
            float(s.mean()),
            float(s.std()),
        )
    means = per_user.mean(axis=0)
    variances = per_user.var(axis=0)
    out = np.empty(10, dtype=np.float64)
    out[0::2] = means
    out[1::2] = variances
    return out


@dataclass(frozen=True)
class RegressionResult:
    """OLS fit of a fairness target on standardized demand features."""

    feature_names: tuple[str, ...]
    coef: np.ndarray
    intercept: float
    stderr: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    n: int
    dof: int
    r_squared: float

    def covers(self, name: str, value: float) -> bool:
        i = self.feature_names.index(name)
        return bool(self.ci_low[i] <= value <= self.ci_high[i])


def standardize_columns(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Z-score each column; zero-variance columns raise SingularDesignError."""
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    dead = np.flatnonzero(std < 1e-12)
    if len(dead) > 0:
        names = [DEMAND_FEATURE_NAMES[i] if i < len(DEMAND_FEATURE_NAMES) else str(i)
                 for i in dead]
        raise SingularDesignError(
            f"zero-variance feature column(s): {', '.join(names)}", columns=names
        )
    return (x - mean) / std, mean, std


def fit_linear_ci(
    x: np.ndarray,
    y: np.ndarray,
    feature_names: Sequence[str] = DEMAND_FEATURE_NAMES,
    confidence: float = 0.95,
) -> RegressionResult:
    """OLS with intercept on standardized columns, plus t-based CIs.

    Raises SingularDesignError on rank-deficient designs, naming the
    columns implicated in the dependency.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = x.shape
    if len(feature_names) != p:
        raise ParameterError("feature_names length must match design columns")
    if n < p + 2:
        raise ParameterError(
            f"need at least {p + 2} runs for {p} features, got {n}", n=n, p=p
        )
    xz, _, _ = standardize_columns(x)
    design = np.column_stack([np.ones(n), xz])
    u_mat, sing, vt = np.linalg.svd(design, full_matrices=False)
    if sing[-1] < 1e-10 * sing[0]:
        weights = np.abs(vt[-1][1:])
        implicated = [feature_names[i] for i in np.flatnonzero(weights > 0.3 * weights.max())]
        raise SingularDesignError(
            f"collinear feature column(s): {', '.join(implicated)}",
            columns=implicated,
        )
    coef_full = vt.T @ ((u_mat.T @ y) / sing)
    resid = y - design @ coef_full
    dof = n - p - 1
    sigma2 = float(resid @ resid) / dof
    xtx_inv = vt.T @ np.diag(1.0 / sing**2) @ vt
    stderr_full = np.sqrt(sigma2 * np.diag(xtx_inv))
    t_crit = float(stats.t.ppf(0.5 + confidence / 2.0, dof))
    total_ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / total_ss if total_ss > 0 else 1.0
    return RegressionResult(
        feature_names=tuple(feature_names),
        coef=coef_full[1:],
        intercept=float(coef_full[0]),
        stderr=stderr_full[1:],
        ci_low=coef_full[1:] - t_crit * stderr_full[1:],
        ci_high=coef_full[1:] + t_crit * stderr_full[1:],
        n=n,
        dof=dof,
        r_squared=r2,
    )


def demand_regression(
    datasets: Sequence[ScoreDataset],
    grid: SweepGrid,
    ndcg_floor: float = 0.99,
    seed: int = 0,
    workers: Optional[int] = None,
) -> RegressionResult:
    """Regress achieved fairness on score-statistics features.

    Each dataset is swept with the demand multiplier pinned to 1 (supply
    gradient only); the accuracy-constrained best EF (falling back to the
    overall best EF when nothing clears the floor) becomes the target, and
    the dataset's demand features the predictors.
    """
    if len(datasets) < len(DEMAND_FEATURE_NAMES) + 2:
        raise ParameterError(
            f"need at least {len(DEMAND_FEATURE_NAMES) + 2} datasets, "
            f"got {len(datasets)}"
        )
    x = np.empty((len(datasets), len(DEMAND_FEATURE_NAMES)), dtype=np.float64)
    y = np.empty(len(datasets), dtype=np.float64)
    for i, ds in enumerate(datasets):
        reports = run_sweep(
            ds, grid, seed=seed, zeta_override=1.0, workers=workers
        )
        best = constrained_best(reports, ndcg_floor=ndcg_floor)
        if best is None:
            ok = [r for r in reports if r.ok]
            if not ok:
                raise MarketRankError(f"every config failed on dataset {i}")
            best = max(ok, key=lambda r: r.metrics.ef)
        x[i] = demand_features(ds)
        y[i] = best.metrics.ef
    return fit_linear_ci(x, y)


# --- synthetic datasets ----------------------------------------------------

SCORE_DISTRIBUTIONS = ("uniform", "lognormal", "point_mass_mix")
GROUP_LAYOUTS = ("balanced", "zipf")


@dataclass(frozen=True)
class SynthSpec:
    """Generator settings for a reproducible synthetic dataset."""

    n_users: int
    n_items: int
    n_groups: int
    k: int = 10
    score_distribution: str = "lognormal"
    sigma: float = 1.0
    point_mass: float = 0.1
    group_layout: str = "balanced"
    zipf_s: float = 1.1
    seed: int = 0

    def __post_init__(self):
        if self.n_users < 1 or self.n_items < 1 or self.n_groups < 1:
            raise InvalidSpecError("dimensions must be positive")
        if self.n_items < self.k:
            raise InvalidSpecError(
                f"need at least k={self.k} items, got {self.n_items}"
            )
        if self.n_groups > self.n_items:
            raise InvalidSpecError("cannot have more groups than items")
        if self.score_distribution not in SCORE_DISTRIBUTIONS:
            raise InvalidSpecError(
                f"unknown score distribution {self.score_distribution!r}"
            )
        if self.group_layout not in GROUP_LAYOUTS:
            raise InvalidSpecError(f"unknown group layout {self.group_layout!r}")
        if self.score_distribution == "lognormal" and self.sigma <= 0:
            raise InvalidSpecError("lognormal sigma must be positive")
        if self.score_distribution == "point_mass_mix" and not (
            0.0 < self.point_mass < 1.0
        ):
            raise InvalidSpecError("point mass fraction must be in (0, 1)")
        if self.group_layout == "zipf" and self.zipf_s <= 0:
            raise InvalidSpecError("zipf exponent must be positive")


def _zipf_sizes(n_items: int, n_groups: int, s: float) -> np.ndarray:
    """Non-increasing group sizes proportional to rank^-s, each >= 1."""
    weights = 1.0 / np.power(np.arange(1, n_groups + 1, dtype=np.float64), s)
    spare = n_items - n_groups
    exact = weights / weights.sum() * spare
    sizes = np.floor(exact).astype(np.int64)
    remainder = spare - int(sizes.sum())
    if remainder > 0:
        # Largest fractional remainder first; earlier rank wins ties, which
        # keeps the size sequence non-increasing.
        order = np.lexsort((np.arange(n_groups), -(exact - sizes)))
        sizes[order[:remainder]] += 1
    return sizes + 1


def synth_dataset(spec: SynthSpec) -> ScoreDataset:
    """Reproducible synthetic dataset from a seed.

    Lognormal sigma controls per-user score skewness, the point-mass
    fraction controls entropy, and the zipf exponent controls group
    imbalance.
    """
    rng = np.random.default_rng(spec.seed)
    if spec.score_distribution == "uniform":
        scores = rng.uniform(0.0, 1.0, size=(spec.n_users, spec.n_items))
    elif spec.score_distribution == "lognormal":
        scores = rng.lognormal(0.0, spec.sigma, size=(spec.n_users, spec.n_items))
    else:
        tall = rng.random(size=(spec.n_users, spec.n_items)) < spec.point_mass
        low = rng.uniform(0.0, 0.05, size=(spec.n_users, spec.n_items))
        high = rng.uniform(0.9, 1.0, size=(spec.n_users, spec.n_items))
        scores = np.where(tall, high, low)

    if spec.group_layout == "balanced":
        base = spec.n_items // spec.n_groups
        sizes = np.full(spec.n_groups, base, dtype=np.int64)
        sizes[: spec.n_items - base * spec.n_groups] += 1
    else:
        sizes = _zipf_sizes(spec.n_items, spec.n_groups, spec.zipf_s)

    width = len(str(spec.n_groups - 1))
    group_names = [f"g{j:0{width}d}" for j in range(spec.n_groups)]
    item_width = len(str(spec.n_items - 1))
    items = [f"i{j:0{item_width}d}" for j in range(spec.n_items)]
    group_by_item = {}
    cursor = 0
    for j, size in enumerate(sizes):
        for item in items[cursor: cursor + size]:
            group_by_item[item] = group_names[j]
        cursor += size
    user_width = len(str(spec.n_users - 1))
    users = [f"u{j:0{user_width}d}" for j in range(spec.n_users)]
    ds = build_dataset(users, items, scores, group_by_item)
    return validate_dataset(ds, spec.k)


REFERENCE_SPEC = SynthSpec(
    n_users=200,
    n_items=500,
    n_groups=20,
    k=10,
    score_distribution="lognormal",
    sigma=1.0,
    group_layout="zipf",
    zipf_s=1.1,
    seed=1871,
)


def reference_dataset() -> ScoreDataset:
    """The seeded instance used by trend tests and golden files."""
    return synth_dataset(REFERENCE_SPEC)
