"""Command-line interface: rerank, sweep, pareto, verify, analyze, synth.

Exit codes: 0 success, 1 usage error, 2 validation error, 3 property
violation (verify only).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional

from .checks import run_all_checks
from .core import TaxationParams, merge_infrequent_groups, validate_dataset
from .dataio import (
    RunConfig,
    dump_json,
    ingest_scores,
    parse_config,
    reports_payload,
    serialize_config,
    write_dataset_csv,
    write_reports_csv,
)
from .errors import MarketRankError
from .experiments import (
    SweepGrid,
    SynthSpec,
    constrained_best,
    demand_regression,
    pareto_frontier,
    run_sweep,
    synth_dataset,
)
from .fairness import resolve_preset
from .metrics import evaluate
from .rerank import Policy, RerankSession, ideal_lists

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_PROPERTY = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _float_list(text: str) -> tuple[float, ...]:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise UsageError(f"expected a comma-separated number list, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise UsageError(f"cannot parse number list {text!r}") from None


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in _float_list(text))


def _add_dataset_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="run config file (flags override file values)")
    p.add_argument("--scores", help="scores CSV (user_id,item_id,score)")
    p.add_argument("--groups", help="groups CSV (item_id,group_id)")
    p.add_argument("--candidates", help="optional candidates CSV (user_id,item_id)")
    p.add_argument("--full-catalog", action="store_true", default=None,
                   help="rank the full catalog; missing pairs score 0")
    p.add_argument("--normalize-scores", action="store_true", default=None,
                   help="per-user min-max normalization to [0, 1]")
    p.add_argument("--merge-threshold", type=int,
                   help="merge groups smaller than this into one (default 10; 1 disables)")
    p.add_argument("--k", type=int, help="ranking size")
    p.add_argument("--seed", type=int, help="session seed")
    p.add_argument("--out-dir", help="output directory")


def _load_config(args) -> RunConfig:
    config = RunConfig()
    if args.config:
        config = parse_config(Path(args.config).read_text(encoding="utf-8"))
    overrides = {
        "scores": args.scores,
        "groups": args.groups,
        "candidates": args.candidates,
        "full_catalog": args.full_catalog,
        "normalize_scores": args.normalize_scores,
        "merge_threshold": args.merge_threshold,
        "k": args.k,
        "seed": args.seed,
        "out_dir": args.out_dir,
    }
    for extra in ("alpha", "beta", "a_e", "a_s", "preset", "policy",
                  "clamp_zeta", "shuffle_arrivals"):
        if hasattr(args, extra):
            overrides[extra] = getattr(args, extra)
    for key, value in overrides.items():
        if value is not None:
            setattr(config, key, value)
    return config


def _load_dataset(config: RunConfig):
    if not config.scores or not config.groups:
        raise UsageError("both --scores and --groups (or a config file) are required")
    ds = ingest_scores(
        config.scores,
        config.groups,
        candidates_path=config.candidates or None,
        full_catalog=config.full_catalog,
        normalize=config.normalize_scores,
    )
    ds = merge_infrequent_groups(ds, threshold=config.merge_threshold)
    return validate_dataset(ds, config.k)


def _taxation_params(config: RunConfig) -> TaxationParams:
    alpha, beta = config.alpha, config.beta
    if config.preset:
        alpha, beta = resolve_preset(config.preset)
    return TaxationParams(
        alpha=alpha, beta=beta, a_e=config.a_e, a_s=config.a_s, k=config.k
    )


def _cmd_rerank(args) -> int:
    config = _load_config(args)
    ds = _load_dataset(config)
    params = _taxation_params(config)
    session = RerankSession(
        ds,
        params,
        policy=Policy.parse(config.policy),
        seed=config.seed,
        shuffle_arrivals=config.shuffle_arrivals,
        clamp_zeta=config.clamp_zeta,
    )
    reranked = session.run()
    original = ideal_lists(ds, config.k)
    bundle = evaluate(
        original, reranked, session.state, params,
        ef_t=config.ef_t, mmf_fraction=config.mmf_fraction,
    )
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(serialize_config(config), encoding="utf-8")
    dump_json(
        {
            "command": "rerank",
            "policy": config.policy,
            "params": {
                "alpha": params.alpha, "beta": params.beta,
                "a_e": params.a_e, "a_s": params.a_s, "k": params.k,
            },
            "catalog": {
                "groups": list(ds.group_names),
                "item_groups": [ds.group_names[g] for g in ds.group_of],
                "items": list(ds.items),
            },
            "lists": [
                {
                    "user": r.user,
                    "items": list(r.items),
                    "raw_scores": r.raw_scores,
                    "adjusted_scores": r.adjusted_scores,
                }
                for r in reranked
            ],
        },
        out / "lists.json",
    )
    dump_json(
        {
            "command": "rerank",
            "metrics": bundle.as_dict(),
            "group_names": list(ds.group_names),
            "group_exposure": session.state.exposure(),
        },
        out / "metrics.json",
    )
    print(f"served {len(reranked)} users; ndcg={bundle.ndcg:.6f} ef={bundle.ef:.6f} "
          f"gini={bundle.gini:.6f} mmf={bundle.mmf:.6f}")
    print(f"wrote {out / 'lists.json'} and {out / 'metrics.json'}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    config = _load_config(args)
    ds = _load_dataset(config)
    grid = SweepGrid(
        alpha_values=_float_list(args.alpha_values),
        beta_values=_float_list(args.beta_values),
        a_e_values=_float_list(args.a_e_values),
        a_s_values=_float_list(args.a_s_values),
        policies=tuple(p.strip() for p in args.policies.split(",") if p.strip()),
        k_values=_int_list(args.k_values) if args.k_values else (config.k,),
        lambda_values=_float_list(args.lambda_values),
    )
    reports = run_sweep(
        ds, grid, seed=config.seed, clamp_zeta=config.clamp_zeta,
        zeta_override=1.0 if args.no_demand else None, workers=args.workers,
    )
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_reports_csv(reports, out / "reports.csv")
    dump_json({"command": "sweep", "reports": reports_payload(reports)},
              out / "reports.json")
    best = constrained_best(reports, ndcg_floor=args.ndcg_floor)
    frontier = [r for r in reports if r.pareto_optimal]
    print(f"{len(reports)} configs, {sum(1 for r in reports if not r.ok)} failed, "
          f"{len(frontier)} on the pareto frontier")
    if best is not None:
        print(f"best at ndcg>={args.ndcg_floor:g}: {best.config.label()} "
              f"ef={best.metrics.ef:.6f}")
    else:
        print(f"no config reached ndcg>={args.ndcg_floor:g}")
    print(f"wrote {out / 'reports.csv'} and {out / 'reports.json'}")
    return EXIT_OK


def _cmd_pareto(args) -> int:
    import json as _json

    from .experiments import ExperimentConfig, ExperimentReport
    from .metrics import MetricBundle

    path = Path(args.reports)
    payload = _json.loads(path.read_text(encoding="utf-8"))
    entries = payload.get("reports", [])
    reports = []
    for e in entries:
        report = ExperimentReport(
            config=ExperimentConfig(
                policy=Policy.parse(e["policy"]),
                k=e["k"],
                alpha=e["alpha"],
                beta=e["beta"],
                a_e=e["a_e"],
                a_s=e["a_s"],
            ),
            grid_index=e.get("grid_index", 0),
        )
        if "metrics" in e:
            report.metrics = MetricBundle(**e["metrics"])
        reports.append(report)
    frontier = pareto_frontier(reports)
    for e, report in zip(entries, reports):
        e["pareto_optimal"] = report.pareto_optimal
    out_path = Path(args.out) if args.out else path
    dump_json({k: v for k, v in payload.items() if k != "schema_version"}, out_path)
    ok_count = sum(1 for r in reports if r.ok)
    print(f"{len(frontier)} of {ok_count} configs on the frontier")
    for r in sorted(frontier, key=lambda r: -r.metrics.ndcg):
        print(f"  {r.config.label()} ndcg={r.metrics.ndcg:.6f} ef={r.metrics.ef:.6f}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    results = run_all_checks()
    failed = 0
    for result in results:
        status = "PASS" if result.passed else "FAIL"
        print(f"[{status}] {result.name}: {result.detail}")
        if not result.passed:
            failed += 1
    if failed:
        print(f"{failed} of {len(results)} property checks failed")
        return EXIT_PROPERTY
    print(f"all {len(results)} property checks passed")
    return EXIT_OK


def _cmd_analyze(args) -> int:
    datasets = []
    rng_seed = args.seed
    sigmas = [0.3, 0.6, 0.9, 1.2, 1.5, 1.8]
    masses = [0.05, 0.1, 0.2, 0.4]
    for i in range(args.runs):
        kind = i % 3
        if kind == 0:
            spec = SynthSpec(
                n_users=args.users, n_items=args.items, n_groups=args.groups_count,
                k=args.k, score_distribution="lognormal",
                sigma=sigmas[i % len(sigmas)], seed=rng_seed + i,
            )
        elif kind == 1:
            spec = SynthSpec(
                n_users=args.users, n_items=args.items, n_groups=args.groups_count,
                k=args.k, score_distribution="point_mass_mix",
                point_mass=masses[i % len(masses)], seed=rng_seed + i,
            )
        else:
            spec = SynthSpec(
                n_users=args.users, n_items=args.items, n_groups=args.groups_count,
                k=args.k, score_distribution="uniform", seed=rng_seed + i,
            )
        datasets.append(synth_dataset(spec))
    grid = SweepGrid(
        alpha_values=_float_list(args.alpha_values),
        beta_values=_float_list(args.beta_values),
        k_values=(args.k,),
    )
    result = demand_regression(datasets, grid, seed=args.seed, workers=args.workers)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dump_json(
        {
            "command": "analyze",
            "n_runs": result.n,
            "dof": result.dof,
            "r_squared": result.r_squared,
            "intercept": result.intercept,
            "features": [
                {
                    "name": name,
                    "coef": float(result.coef[i]),
                    "stderr": float(result.stderr[i]),
                    "ci_low": float(result.ci_low[i]),
                    "ci_high": float(result.ci_high[i]),
                }
                for i, name in enumerate(result.feature_names)
            ],
        },
        out / "regression.json",
    )
    print(f"fit {result.n} runs, r^2={result.r_squared:.4f}")
    for i, name in enumerate(result.feature_names):
        print(f"  {name:>14s}: {result.coef[i]:+.4f} "
              f"[{result.ci_low[i]:+.4f}, {result.ci_high[i]:+.4f}]")
    print(f"wrote {out / 'regression.json'}")
    return EXIT_OK


def _cmd_synth(args) -> int:
    spec = SynthSpec(
        n_users=args.users,
        n_items=args.items,
        n_groups=args.groups_count,
        k=args.k,
        score_distribution=args.distribution,
        sigma=args.sigma,
        point_mass=args.point_mass,
        group_layout=args.group_layout,
        zipf_s=args.zipf_s,
        seed=args.seed,
    )
    ds = synth_dataset(spec)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_dataset_csv(ds, out / "scores.csv", out / "groups.csv")
    print(f"wrote {out / 'scores.csv'} and {out / 'groups.csv'} "
          f"({ds.n_users} users, {ds.n_items} items, {ds.n_groups} groups)")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="marketrank", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rerank", help="run one online re-ranking session")
    _add_dataset_args(p)
    p.add_argument("--policy", help="manifold_rank | top_k | min_regularizer(lam)")
    p.add_argument("--preset",
                   help="p_norm(p) | elastic(t) | alpha_fair(a) | proportional")
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--a-e", dest="a_e", type=float)
    p.add_argument("--a-s", dest="a_s", type=float)
    p.add_argument("--clamp-zeta", action="store_true", default=None,
                   dest="clamp_zeta", help="floor the demand multiplier at 0")
    p.add_argument("--shuffle-arrivals", action="store_true", default=None,
                   dest="shuffle_arrivals")
    p.set_defaults(func=_cmd_rerank)

    p = sub.add_parser("sweep", help="run a parameter sweep")
    _add_dataset_args(p)
    p.add_argument("--alpha-values", default="0.5,1,1.5,2,2.5")
    p.add_argument("--beta-values", default="-2,-1,0.5,1,2,3")
    p.add_argument("--a-e-values", dest="a_e_values", default="1")
    p.add_argument("--a-s-values", dest="a_s_values", default="1")
    p.add_argument("--policies", default="manifold_rank")
    p.add_argument("--k-values", default="")
    p.add_argument("--lambda-values", default="0.1")
    p.add_argument("--ndcg-floor", type=float, default=0.99)
    p.add_argument("--no-demand", action="store_true",
                   help="pin the demand multiplier to 1")
    p.add_argument("--workers", type=int, default=None,
                   help="process pool size (default: MARKETRANK_WORKERS or CPUs)")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("pareto", help="recompute frontier flags on a reports file")
    p.add_argument("--reports", required=True, help="reports.json from sweep")
    p.add_argument("--out", help="output path (default: rewrite in place)")
    p.set_defaults(func=_cmd_pareto)

    p = sub.add_parser("verify", help="run the market-law property suites")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("analyze", help="regress fairness on demand features")
    p.add_argument("--runs", type=int, default=24)
    p.add_argument("--users", type=int, default=40)
    p.add_argument("--items", type=int, default=80)
    p.add_argument("--groups-count", type=int, default=6)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--alpha-values", default="1,2")
    p.add_argument("--beta-values", default="0.5,2")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default="out")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--users", type=int, required=True)
    p.add_argument("--items", type=int, required=True)
    p.add_argument("--groups-count", type=int, required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--distribution", default="lognormal",
                   choices=("uniform", "lognormal", "point_mass_mix"))
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--point-mass", type=float, default=0.1)
    p.add_argument("--group-layout", default="balanced",
                   choices=("balanced", "zipf"))
    p.add_argument("--zipf-s", type=float, default=1.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default="out")
    p.set_defaults(func=_cmd_synth)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MarketRankError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
