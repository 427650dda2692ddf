"""End-to-end recommendation pipeline.

Scores candidates from declarative memory, matches production rules against
the user's recent history and current context, applies the boosts, ranks
top-k, and renders rule-grounded explanations. Ablation reruns the pipeline
with selected rules disabled and reports the ranking diff.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

from .config import EngineConfig
from .datamodel import BucketKind, ContextBucket, ItemSequence, UserGroupMap, bucketize
from .declarative import ChunkStore, score_candidates
from .errors import InvariantError, NoCandidates
from .procedural import (
    FiringRecord,
    PopularityCalibrationRule,
    apply_boosts,
    apply_popularity_calibration,
    match_rules,
    scope_eligible,
)
from .rulemine import (
    ContextRule,
    PeriodicRule,
    RuleSet,
    SequentialRule,
    rule_targets,
)

DECLARATIVE_FALLBACK_TEXT = (
    "Recommended from your memory of past interactions (recency and frequency)."
)


@dataclass(frozen=True)
class Recommendation:
    item_id: str
    base_activation: float
    final_activation: float
    firings: tuple[FiringRecord, ...]
    rank: int

    def to_json_obj(self) -> dict:
        return {
            "rank": self.rank,
            "item_id": self.item_id,
            "base_activation": self.base_activation,
            "final_activation": self.final_activation,
            "firings": [
                {"rule_id": f.rule_id, "scope": f.scope.render(), "boost": f.applied_boost}
                for f in self.firings
            ],
        }


@dataclass(frozen=True)
class ExplanationLine:
    rule_id: str | None
    scope: str | None
    text: str
    contribution_share: float | None


@dataclass(frozen=True)
class Explanation:
    item_id: str
    lines: tuple[ExplanationLine, ...]

    def to_json_obj(self) -> dict:
        return {
            "item_id": self.item_id,
            "lines": [
                {"rule_id": l.rule_id, "scope": l.scope, "text": l.text,
                 "contribution_share": l.contribution_share}
                for l in self.lines
            ],
        }


@dataclass
class Engine:
    """Immutable serving state: store, rules, config, and group assignments."""

    store: ChunkStore
    ruleset: RuleSet
    config: EngineConfig
    groups: UserGroupMap = UserGroupMap()


def _serve_bucket(engine: Engine, now: int,
                  override: ContextBucket | None) -> ContextBucket | None:
    if override is not None:
        return override
    kind = engine.config.bucket_kind
    if kind is BucketKind.CUSTOM:
        # No request-time context value to bucket on; custom rules stay quiet
        # unless the caller supplies a bucket explicitly.
        return None
    return bucketize(now, kind, engine.config.tz_offset)


def recommend(engine: Engine, user: str, now: int, k: int,
              disabled: Iterable[str] = (),
              history: ItemSequence | None = None,
              context_bucket: ContextBucket | None = None) -> list[Recommendation]:
    """Top-k recommendations for a user at a point in time.

    Candidates are the user's own items plus the target items of every
    scope-eligible rule, minus the ``exclude_recent`` most recent items when
    configured. ``history`` overrides the stored history (used by the
    evaluation harness to serve from rolling prefixes).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    ruleset = engine.ruleset.without(disabled)
    cfg = engine.config
    if history is None:
        history = engine.store.histories.get(user)

    eligible = [sr for sr in ruleset.rules if scope_eligible(sr.scope, user, engine.groups)]
    candidates: set[str] = set(history.items) if history is not None else set()
    for sr in eligible:
        candidates |= rule_targets(sr.rule)
    if cfg.exclude_recent > 0 and history is not None:
        candidates -= set(history.items[-cfg.exclude_recent:])
    if not candidates:
        raise NoCandidates(f"no candidate items for user {user!r}")

    base = score_candidates(user, now, candidates, engine.store, cfg.activation,
                            history=history)

    calibrations = [
        sr for sr in eligible if isinstance(sr.rule, PopularityCalibrationRule)
    ]
    if calibrations:
        quantiles = engine.store.popularity_quantiles()
        profile = _profile_popularity(history, quantiles)
        for sr in calibrations:
            base = apply_popularity_calibration(base, profile, quantiles, sr.rule)

    bucket = _serve_bucket(engine, now, context_bucket)
    firings = match_rules(ruleset, history, now, bucket, user, engine.groups,
                          weights=cfg.scopes, scope_mode=cfg.scope_mode)
    boosted = apply_boosts(base, firings, cold_base=cfg.activation.cold_base)
    # Boosts may target excluded items; those stay out of the candidate set.
    final = {item: boosted[item] for item in candidates}

    ordered = sorted(final, key=lambda i: (-final[i], -base[i], i))
    recs = []
    for rank, item in enumerate(ordered[:k], start=1):
        item_firings = tuple(f for f in firings if item in f.boosted_items)
        recs.append(Recommendation(
            item_id=item,
            base_activation=base[item],
            final_activation=final[item],
            firings=item_firings,
            rank=rank,
        ))
    _check_pipeline(recs)
    return recs


def _profile_popularity(history: ItemSequence | None,
                        quantiles: dict[str, float]) -> float:
    if history is None or not history.items:
        return 0.5
    return sum(quantiles.get(i, 0.5) for i in history.items) / len(history.items)


def _check_pipeline(recs: Sequence[Recommendation]) -> None:
    for r in recs:
        expect = r.base_activation + sum(f.applied_boost for f in r.firings)
        if abs(expect - r.final_activation) > 1e-9:
            raise InvariantError(
                f"activation mismatch for {r.item_id!r}: {expect} != {r.final_activation}"
            )


def _evidence_value(firing: FiringRecord, key: str) -> str | None:
    prefix = key + "="
    for ev in firing.condition_evidence:
        if ev.startswith(prefix):
            return ev[len(prefix):]
    return None


def explain(rec: Recommendation, ruleset: RuleSet) -> Explanation:
    """Template-based explanation lines, one per contributing firing.

    Items with no firings get the declarative-memory fallback line.
    """
    if not rec.firings:
        return Explanation(rec.item_id, (ExplanationLine(
            rule_id=None, scope=None, text=DECLARATIVE_FALLBACK_TEXT,
            contribution_share=None,
        ),))
    total = sum(f.applied_boost for f in rec.firings)
    lines = []
    for f in sorted(rec.firings, key=lambda f: (-f.applied_boost, f.rule_id)):
        sr = ruleset.by_id[f.rule_id]
        rule = sr.rule
        if isinstance(rule, SequentialRule):
            text = ("This item is recommended because you recently interacted "
                    f"with: {', '.join(sorted(rule.antecedent))}.")
        elif isinstance(rule, PeriodicRule):
            steps = _evidence_value(f, "steps_ago")
            text = ("This item is recommended because you regularly return to "
                    f"it, and last used it {steps} steps ago.")
        elif isinstance(rule, ContextRule):
            text = ("This item is recommended because you like it in the "
                    f"{rule.bucket.label()}.")
        else:
            raise InvariantError(f"firing from unexplainable rule {f.rule_id!r}")
        lines.append(ExplanationLine(
            rule_id=f.rule_id,
            scope=sr.scope.level,
            text=text,
            contribution_share=f.applied_boost / total,
        ))
    return Explanation(rec.item_id, tuple(lines))


def ablate(engine: Engine, user: str, now: int, k: int,
           disabled_rule_ids: Iterable[str],
           history: ItemSequence | None = None) -> tuple[list[Recommendation], list[dict]]:
    """Recommendations with the listed rules removed, plus a rank-diff report.

    The diff lists items whose rank changed between the full and the ablated
    top-k, with before/after activations (None on the side an item is absent
    from).
    """
    disabled = set(disabled_rule_ids)
    engine.ruleset.without(disabled)  # fail fast on unknown ids
    full = recommend(engine, user, now, k, history=history)
    reduced = recommend(engine, user, now, k, disabled=disabled, history=history)

    before = {r.item_id: r for r in full}
    after = {r.item_id: r for r in reduced}
    diff = []
    for item in sorted(set(before) | set(after)):
        b = before.get(item)
        a = after.get(item)
        if b is not None and a is not None and b.rank == a.rank:
            continue
        diff.append({
            "item_id": item,
            "rank_before": b.rank if b else None,
            "rank_after": a.rank if a else None,
            "final_before": b.final_activation if b else None,
            "final_after": a.final_activation if a else None,
        })
    diff.sort(key=lambda d: (d["rank_after"] if d["rank_after"] is not None else 1 << 30,
                             d["item_id"]))
    return reduced, diff


def recommendations_to_jsonl(recs: Sequence[Recommendation],
                             ruleset: RuleSet) -> str:
    """Wire format: one JSON object per recommended item, rank order."""
    lines = []
    for r in recs:
        obj = r.to_json_obj()
        obj["explanation_lines"] = explain(r, ruleset).to_json_obj()["lines"]
        lines.append(json.dumps(obj, sort_keys=True, separators=(",", ":")))
    return "".join(line + "\n" for line in lines)
