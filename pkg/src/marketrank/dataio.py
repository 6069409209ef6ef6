"""File formats: score/group/candidate CSVs, run configs, report writers.

All output serialization is deterministic: fixed field order, floats at 12
significant digits in JSON, so repeated runs over the same inputs produce
byte-identical files.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .core import ScoreDataset, build_dataset
from .errors import (
    ConfigError,
    DuplicateTripletError,
    NonFiniteScoreError,
    ParseError,
)
from .experiments import ExperimentReport

SCHEMA_VERSION = 1


def _read_rows(path: Path, expected_header: list[str]) -> list[list[str]]:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}", path=str(path)) from exc
    rows = list(csv.reader(text.splitlines()))
    if not rows:
        raise ParseError(f"{path} is empty", path=str(path))
    header = [h.strip() for h in rows[0]]
    if header != expected_header:
        raise ParseError(
            f"{path} header must be {','.join(expected_header)!r}, got "
            f"{','.join(header)!r}",
            path=str(path),
            line=1,
        )
    return rows[1:]


def ingest_scores(
    scores_path: str | Path,
    groups_path: str | Path,
    candidates_path: Optional[str | Path] = None,
    full_catalog: bool = False,
    normalize: bool = False,
) -> ScoreDataset:
    """Load a dataset from delimited text files.

    Users are ordered by first appearance in the scores file (arrival
    order); items by first appearance across scores and groups files. In
    full-catalog mode every user ranks every item with missing pairs scored
    0; otherwise a user's candidates are exactly the items on their rows,
    unless a candidates file overrides them. ``normalize`` rescales each
    user's candidate scores to [0, 1] by min-max (constant rows map to 1).
    """
    scores_path, groups_path = Path(scores_path), Path(groups_path)
    group_rows = _read_rows(groups_path, ["item_id", "group_id"])
    group_by_item: dict[str, str] = {}
    item_order: list[str] = []
    for lineno, row in enumerate(group_rows, start=2):
        if len(row) != 2:
            raise ParseError(
                f"{groups_path}:{lineno}: expected 2 fields, got {len(row)}",
                path=str(groups_path),
                line=lineno,
            )
        item, group = row[0].strip(), row[1].strip()
        if not item or not group:
            raise ParseError(
                f"{groups_path}:{lineno}: empty identifier",
                path=str(groups_path),
                line=lineno,
            )
        if item in group_by_item:
            if group_by_item[item] != group:
                raise ParseError(
                    f"{groups_path}:{lineno}: item {item!r} mapped to two groups",
                    path=str(groups_path),
                    line=lineno,
                )
            continue
        group_by_item[item] = group
        item_order.append(item)

    score_rows = _read_rows(scores_path, ["user_id", "item_id", "score"])
    users: list[str] = []
    user_index: dict[str, int] = {}
    triplets: dict[tuple[int, str], float] = {}
    for lineno, row in enumerate(score_rows, start=2):
        if len(row) != 3:
            raise ParseError(
                f"{scores_path}:{lineno}: expected 3 fields, got {len(row)}",
                path=str(scores_path),
                line=lineno,
            )
        user, item, raw = row[0].strip(), row[1].strip(), row[2].strip()
        try:
            value = float(raw)
        except ValueError:
            raise ParseError(
                f"{scores_path}:{lineno}: cannot parse score {raw!r}",
                path=str(scores_path),
                line=lineno,
            ) from None
        if not math.isfinite(value):
            raise NonFiniteScoreError(
                f"{scores_path}:{lineno}: non-finite score for ({user}, {item})",
                path=str(scores_path),
                line=lineno,
            )
        if user not in user_index:
            user_index[user] = len(users)
            users.append(user)
        if item not in group_by_item:
            raise ParseError(
                f"{scores_path}:{lineno}: item {item!r} missing from the group file",
                path=str(scores_path),
                line=lineno,
            )
        key = (user_index[user], item)
        if key in triplets:
            raise DuplicateTripletError(
                f"{scores_path}:{lineno}: duplicated (user, item) pair ({user}, {item})",
                path=str(scores_path),
                line=lineno,
            )
        triplets[key] = value

    if not users:
        raise ParseError(f"{scores_path} contains no data rows", path=str(scores_path))

    item_pos = {item: j for j, item in enumerate(item_order)}
    scores = np.zeros((len(users), len(item_order)), dtype=np.float64)
    seen_items: list[set[str]] = [set() for _ in users]
    for (u, item), value in triplets.items():
        scores[u, item_pos[item]] = value
        seen_items[u].add(item)

    candidates: Optional[dict[str, list[str]]]
    if candidates_path is not None:
        cand_rows = _read_rows(Path(candidates_path), ["user_id", "item_id"])
        candidates = {}
        for lineno, row in enumerate(cand_rows, start=2):
            if len(row) != 2:
                raise ParseError(
                    f"{candidates_path}:{lineno}: expected 2 fields",
                    path=str(candidates_path),
                    line=lineno,
                )
            user, item = row[0].strip(), row[1].strip()
            if user not in user_index:
                raise ParseError(
                    f"{candidates_path}:{lineno}: unknown user {user!r}",
                    path=str(candidates_path),
                    line=lineno,
                )
            candidates.setdefault(user, []).append(item)
        for user in users:
            if user not in candidates:
                candidates[user] = sorted(seen_items[user_index[user]])
    elif full_catalog:
        candidates = None
    else:
        candidates = {u: sorted(seen_items[user_index[u]]) for u in users}

    ds = build_dataset(users, item_order, scores, group_by_item, candidates)
    if normalize:
        ds = normalize_scores(ds)
    return ds


def normalize_scores(ds: ScoreDataset) -> ScoreDataset:
    """Per-user min-max rescale of candidate scores to [0, 1].

    Constant rows map to 1 (total indifference, kept selectable). Scores of
    non-candidate items are zeroed.
    """
    scores = np.zeros_like(ds.scores)
    for u in range(ds.n_users):
        cand = ds.candidate_indices(u)
        row = ds.scores[u, cand]
        lo, hi = float(row.min()), float(row.max())
        if hi - lo < 1e-15:
            scores[u, cand] = 1.0
        else:
            scores[u, cand] = (row - lo) / (hi - lo)
    return ScoreDataset(
        users=ds.users,
        items=ds.items,
        scores=scores,
        group_of=ds.group_of,
        group_names=ds.group_names,
        candidates=ds.candidates,
    )


def write_dataset_csv(ds: ScoreDataset, scores_path: Path, groups_path: Path) -> None:
    """Write a dataset back out as scores and groups CSVs (full precision)."""
    with open(groups_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("item_id,group_id\n")
        for j, item in enumerate(ds.items):
            fh.write(f"{item},{ds.group_names[ds.group_of[j]]}\n")
    with open(scores_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("user_id,item_id,score\n")
        for u, user in enumerate(ds.users):
            for j in ds.candidate_indices(u):
                fh.write(f"{user},{ds.items[j]},{float(ds.scores[u, j])!r}\n")


# --- run config --------------------------------------------------------------


@dataclass
class RunConfig:
    """Key-value run settings; files use one ``key = value`` line per field."""

    scores: str = ""
    groups: str = ""
    candidates: str = ""
    preset: str = ""
    alpha: float = 1.0
    beta: float = 1.0
    a_e: float = 1.0
    a_s: float = 1.0
    k: int = 10
    policy: str = "manifold_rank"
    seed: int = 0
    out_dir: str = "out"
    normalize_scores: bool = False
    clamp_zeta: bool = False
    merge_threshold: int = 10
    shuffle_arrivals: bool = False
    full_catalog: bool = False
    ef_t: float = 2.0
    mmf_fraction: float = 0.2


_CONFIG_FIELDS = {f.name: f.type for f in fields(RunConfig)}


def parse_config(text: str) -> RunConfig:
    """Parse ``key = value`` lines; '#' starts a comment; unknown keys fail."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'", line=lineno)
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _CONFIG_FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}", line=lineno)
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}", line=lineno)
        kind = _CONFIG_FIELDS[key]
        try:
            if kind in ("bool", bool):
                if value not in ("true", "false"):
                    raise ValueError(value)
                values[key] = value == "true"
            elif kind in ("int", int):
                values[key] = int(value)
            elif kind in ("float", float):
                values[key] = float(value)
            else:
                values[key] = value
        except ValueError:
            raise ConfigError(
                f"line {lineno}: cannot parse {value!r} for {key!r}", line=lineno
            ) from None
    return RunConfig(**values)


def serialize_config(config: RunConfig) -> str:
    """Canonical text form: sorted keys, one per line."""
    lines = []
    for name in sorted(_CONFIG_FIELDS):
        value = getattr(config, name)
        if isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, float):
            text = format(value, "g")
        else:
            text = str(value)
        lines.append(f"{name} = {text}")
    return "\n".join(lines) + "\n"


# --- deterministic JSON / CSV writers ----------------------------------------


def _round_floats(obj):
    if isinstance(obj, float):
        return float(format(obj, ".12g"))
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return float(format(float(obj), ".12g"))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_round_floats(v) for v in obj.tolist()]
    return obj


def dump_json(obj: dict, path: Path) -> None:
    """Write JSON with 12-significant-digit floats and stable field order."""
    payload = _round_floats({"schema_version": SCHEMA_VERSION, **obj})
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


REPORT_CSV_COLUMNS = (
    "policy", "k", "alpha", "beta", "a_e", "a_s", "lam",
    "ndcg", "ef", "gini", "mmf", "pareto_optimal", "error",
)


def report_row(report: ExperimentReport) -> dict:
    cfg = report.config
    row = {
        "policy": cfg.policy.name,
        "k": cfg.k,
        "alpha": cfg.alpha,
        "beta": cfg.beta,
        "a_e": cfg.a_e,
        "a_s": cfg.a_s,
        "lam": cfg.policy.lam if cfg.policy.name == "min_regularizer" else "",
        "pareto_optimal": report.pareto_optimal,
        "error": report.error_code or "",
    }
    if report.ok:
        m = report.metrics.as_dict()
        row.update(ndcg=m["ndcg"], ef=m["ef"], gini=m["gini"], mmf=m["mmf"])
    else:
        row.update(ndcg="", ef="", gini="", mmf="")
    return row


def write_reports_csv(reports: list[ExperimentReport], path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for report in reports:
            row = report_row(report)
            for key in ("alpha", "beta", "a_e", "a_s", "lam", "ndcg", "ef",
                        "gini", "mmf"):
                if isinstance(row.get(key), float):
                    row[key] = format(row[key], ".12g")
            row["pareto_optimal"] = "true" if row["pareto_optimal"] else "false"
            writer.writerow(row)


def reports_payload(reports: list[ExperimentReport]) -> list[dict]:
    out = []
    for report in reports:
        entry = {
            "policy": str(report.config.policy),
            "k": report.config.k,
            "alpha": report.config.alpha,
            "beta": report.config.beta,
            "a_e": report.config.a_e,
            "a_s": report.config.a_s,
            "pareto_optimal": report.pareto_optimal,
            "grid_index": report.grid_index,
        }
        if report.ok:
            entry["metrics"] = report.metrics.as_dict()
        else:
            entry["error"] = {
                "code": report.error_code,
                "message": report.error_message,
            }
        out.append(entry)
    return out
