"""Offline evaluation: temporal leave-last-out splits and ranking metrics.

The protocol is rolling next-item prediction: each held-out interaction is a
test case served with everything strictly earlier (including earlier targets)
as history, while the store and the rules come from the train portion only.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .config import EngineConfig
from .datamodel import EventLog, ItemSequence, UserGroupMap
from .declarative import ChunkStore
from .errors import InvariantError, NoTestCases
from .recommend import Engine, recommend
from .rulemine import RuleSet, mine_scoped


@dataclass(frozen=True)
class SplitSpec:
    """Hold out the last ``holdout_n`` interactions of each qualifying user."""

    holdout_n: int = 1
    min_history: int = 5

    def __post_init__(self):
        if self.holdout_n < 1:
            raise ValueError("holdout_n must be >= 1")
        if self.min_history <= self.holdout_n:
            raise ValueError("min_history must exceed holdout_n")


@dataclass(frozen=True)
class TestCase:
    user: str
    now: int
    target: str
    history: ItemSequence


@dataclass
class MetricReport:
    hr_at_k: dict[int, float]
    mrr_at_k: dict[int, float]
    ndcg_at_k: dict[int, float]
    popularity_delta: float
    per_user_count: int
    per_config: dict

    def to_json(self) -> str:
        obj = {
            "hr_at_k": {str(k): v for k, v in sorted(self.hr_at_k.items())},
            "mrr_at_k": {str(k): v for k, v in sorted(self.mrr_at_k.items())},
            "ndcg_at_k": {str(k): v for k, v in sorted(self.ndcg_at_k.items())},
            "popularity_delta": self.popularity_delta,
            "per_user_count": self.per_user_count,
            "per_config": self.per_config,
        }
        return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def temporal_split(log: EventLog, spec: SplitSpec) -> tuple[EventLog, list[TestCase]]:
    """Split the log into a train portion and rolling next-item test cases.

    Users shorter than ``min_history`` contribute all interactions to train
    and no test cases. Each test case's history is every interaction of that
    user strictly before the target, so later targets see earlier ones.
    """
    train = []
    cases: list[TestCase] = []
    by_user: dict[str, list] = {}
    for r in log.interactions:
        by_user.setdefault(r.user_id, []).append(r)

    for user in sorted(by_user):
        rows = by_user[user]
        n = len(rows)
        if n < spec.min_history:
            train.extend(rows)
            continue
        cut = n - spec.holdout_n
        train.extend(rows[:cut])
        items = tuple(r.item_id for r in rows)
        times = tuple(r.timestamp for r in rows)
        for t in range(cut, n):
            if any(ts > times[t] for ts in times[:t]):
                raise InvariantError("history would leak past the target timestamp")
            cases.append(TestCase(
                user=user,
                now=times[t],
                target=items[t],
                history=ItemSequence(user_id=user, items=items[:t], times=times[:t]),
            ))
    if not cases:
        raise NoTestCases("no users qualify for the temporal split")
    return EventLog(train), cases


def _target_rank(recs, target: str) -> int | None:
    for r in recs:
        if r.item_id == target:
            return r.rank
    return None


def evaluate(log: EventLog, spec: SplitSpec, config: EngineConfig,
             k_list: Sequence[int], groups: UserGroupMap | None = None,
             manual_rules: RuleSet | None = None,
             disabled: Iterable[str] = (),
             per_user_csv: str | Path | None = None) -> MetricReport:
    """Mine rules on the train split, serve every test case, aggregate metrics.

    HR@k is the fraction of cases whose target lands in the top-k; MRR@k the
    mean reciprocal rank (0 when absent); NDCG@k the mean of 1/log2(1+rank).
    popularity_delta is the mean gap between the popularity of the top-k and
    of the user's own train history, both as train-side quantiles.
    """
    ks = sorted(set(k_list))
    if not ks or ks[0] < 1:
        raise ValueError("k_list must contain positive integers")
    groups = groups or UserGroupMap()

    train, cases = temporal_split(log, spec)
    store = ChunkStore.build(train, cooc_window=config.cooc_window,
                             time_mode=config.time_mode)
    ruleset = mine_scoped(train, groups, config.mining, beta=config.beta,
                          lift_cap=config.lift_cap, bucket_kind=config.bucket_kind,
                          bucket_key=config.bucket_key, tz_offset=config.tz_offset)
    if manual_rules is not None:
        ruleset = ruleset.merged_with(manual_rules)
    disabled = set(disabled)
    ruleset.without(disabled)  # fail fast on unknown ids
    engine = Engine(store=store, ruleset=ruleset, config=config, groups=groups)

    quantiles = store.popularity_quantiles()
    train_profile: dict[str, float] = {}
    for user in sorted({c.user for c in cases}):
        hist = store.histories.get(user)
        if hist is not None and hist.items:
            train_profile[user] = (
                sum(quantiles.get(i, 0.5) for i in hist.items) / len(hist.items)
            )
        else:
            train_profile[user] = 0.5

    kmax = max(ks)
    hits = {k: 0.0 for k in ks}
    mrr = {k: 0.0 for k in ks}
    ndcg = {k: 0.0 for k in ks}
    pop_delta_sum = 0.0
    per_user: dict[str, dict] = {}

    for case in cases:
        recs = recommend(engine, case.user, case.now, kmax,
                         disabled=disabled, history=case.history)
        rank = _target_rank(recs, case.target)
        row = per_user.setdefault(case.user, {
            "cases": 0, **{f"hr@{k}": 0.0 for k in ks},
            **{f"mrr@{k}": 0.0 for k in ks}, **{f"ndcg@{k}": 0.0 for k in ks},
        })
        row["cases"] += 1
        for k in ks:
            if rank is not None and rank <= k:
                hits[k] += 1.0
                mrr[k] += 1.0 / rank
                ndcg[k] += 1.0 / math.log2(1 + rank)
                row[f"hr@{k}"] += 1.0
                row[f"mrr@{k}"] += 1.0 / rank
                row[f"ndcg@{k}"] += 1.0 / math.log2(1 + rank)
        top_pop = [quantiles.get(r.item_id, 0.5) for r in recs]
        mean_top = sum(top_pop) / len(top_pop) if top_pop else 0.5
        pop_delta_sum += mean_top - train_profile[case.user]

    n = len(cases)
    report = MetricReport(
        hr_at_k={k: hits[k] / n for k in ks},
        mrr_at_k={k: mrr[k] / n for k in ks},
        ndcg_at_k={k: ndcg[k] / n for k in ks},
        popularity_delta=pop_delta_sum / n,
        per_user_count=len(per_user),
        per_config=config.to_dict(),
    )
    _check_metric_bounds(report)
    if per_user_csv is not None:
        _write_per_user_csv(per_user, ks, per_user_csv)
    return report


def _check_metric_bounds(report: MetricReport) -> None:
    for name, table in (("hr", report.hr_at_k), ("mrr", report.mrr_at_k),
                        ("ndcg", report.ndcg_at_k)):
        for k, v in table.items():
            if not (0.0 <= v <= 1.0):
                raise InvariantError(f"{name}@{k} out of [0,1]: {v}")
    if not (-1.0 <= report.popularity_delta <= 1.0):
        raise InvariantError(f"popularity_delta out of [-1,1]: {report.popularity_delta}")


def _write_per_user_csv(per_user: dict[str, dict], ks: Sequence[int],
                        path: str | Path) -> None:
    columns = ["user_id", "cases"]
    for k in ks:
        columns += [f"hr@{k}", f"mrr@{k}", f"ndcg@{k}"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for user in sorted(per_user):
            row = per_user[user]
            cases = row["cases"]
            out = [user, cases]
            for k in ks:
                out += [row[f"hr@{k}"] / cases, row[f"mrr@{k}"] / cases,
                        row[f"ndcg@{k}"] / cases]
            writer.writerow(out)
