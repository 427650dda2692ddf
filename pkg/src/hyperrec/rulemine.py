"""Mining of production rules from interaction histories.

Three rule classes come out of the miners:

* sequential: antecedent items seen anywhere before the consequent items,
  counted once per sequence (set semantics);
* periodic: an item whose occurrence gaps within one history stay inside a
  small spread, captured as a [w_min, w_max] reoccurrence interval;
* contextual: items over-represented in a context bucket, filtered by lift.

``mine_scoped`` runs the miners at individual, group, and global granularity
and assembles a RuleSet with deterministic rule ids.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

from .datamodel import (
    BucketKind,
    ContextBucket,
    EventLog,
    ItemSequence,
    UserGroupMap,
    bucketize,
    user_history,
)
from .errors import InputError, UnknownRule

RULE_CLASS_SEQUENTIAL = "sequential"
RULE_CLASS_PERIODIC = "periodic"
RULE_CLASS_CONTEXTUAL = "contextual"
RULE_CLASS_CALIBRATION = "popularity_calibration"

SCOPE_INDIVIDUAL = "individual"
SCOPE_GROUP = "group"
SCOPE_GLOBAL = "global"


@dataclass(frozen=True)
class SequentialRule:
    """antecedent -> consequent with a firing lookback window (in items)."""

    antecedent: frozenset[str]
    consequent: frozenset[str]
    window: int
    support: int
    confidence: float

    def __post_init__(self):
        if not self.antecedent or not self.consequent:
            raise ValueError("antecedent and consequent must be non-empty")
        if self.antecedent & self.consequent:
            raise ValueError("antecedent and consequent must be disjoint")
        if self.window < 1:
            raise ValueError("window must be >= 1")


@dataclass(frozen=True)
class PeriodicRule:
    """An item that reoccurs every w_min..w_max steps within one history."""

    item: str
    w_min: int
    w_max: int
    occurrences: int

    def __post_init__(self):
        if not (1 <= self.w_min <= self.w_max):
            raise ValueError("need 1 <= w_min <= w_max")
        if self.occurrences < 2:
            raise ValueError("a periodic rule needs at least two occurrences")


@dataclass(frozen=True)
class ContextRule:
    """Items lifted above their base rate inside one context bucket."""

    bucket: ContextBucket
    items: frozenset[str]
    lift: float
    support: int

    def __post_init__(self):
        if not self.items:
            raise ValueError("items must be non-empty")
        if self.lift <= 0:
            raise ValueError("lift must be positive")


@dataclass(frozen=True)
class MiningConfig:
    minsup: int = 3
    minconf: float = 0.5
    max_antecedent: int = 3
    max_consequent: int = 1
    fire_window: int = 10
    min_periodic_occ: int = 3
    periodic_tolerance: int = 1
    lift_threshold: float = 2.0
    minsup_frac: float | None = None  # scale minsup by pool size when set

    def __post_init__(self):
        for name in ("minsup", "max_antecedent", "max_consequent", "fire_window",
                     "min_periodic_occ", "lift_threshold"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not (0 < self.minconf <= 1):
            raise ValueError("minconf must be in (0, 1]")
        if self.periodic_tolerance < 0:
            raise ValueError("periodic_tolerance must be >= 0")
        if self.minsup_frac is not None and not (0 < self.minsup_frac <= 1):
            raise ValueError("minsup_frac must be in (0, 1]")

    def scaled_for(self, pool_size: int) -> "MiningConfig":
        if self.minsup_frac is None:
            return self
        return replace(self, minsup=max(1, math.ceil(self.minsup_frac * pool_size)))


@dataclass(frozen=True)
class Scope:
    level: str  # individual | group | global
    subject: str | None = None

    def __post_init__(self):
        if self.level not in (SCOPE_INDIVIDUAL, SCOPE_GROUP, SCOPE_GLOBAL):
            raise ValueError(f"unknown scope level {self.level!r}")
        if self.level == SCOPE_GLOBAL and self.subject is not None:
            raise ValueError("global scope carries no subject")
        if self.level != SCOPE_GLOBAL and not self.subject:
            raise ValueError(f"{self.level} scope requires a subject")

    def render(self) -> str:
        return self.level if self.subject is None else f"{self.level}:{self.subject}"


GLOBAL_SCOPE = Scope(SCOPE_GLOBAL)


@dataclass(frozen=True)
class ScopedRule:
    rule_id: str
    scope: Scope
    rule: object  # SequentialRule | PeriodicRule | ContextRule | PopularityCalibrationRule
    v_r: float
    provenance: str = "mined"

    def __post_init__(self):
        if self.v_r <= 0:
            raise ValueError("v_r must be positive")
        if self.provenance not in ("mined", "manual"):
            raise ValueError(f"unknown provenance {self.provenance!r}")

    @property
    def rule_class(self) -> str:
        return rule_class_of(self.rule)


def rule_class_of(rule: object) -> str:
    from .procedural import PopularityCalibrationRule

    if isinstance(rule, SequentialRule):
        return RULE_CLASS_SEQUENTIAL
    if isinstance(rule, PeriodicRule):
        return RULE_CLASS_PERIODIC
    if isinstance(rule, ContextRule):
        return RULE_CLASS_CONTEXTUAL
    if isinstance(rule, PopularityCalibrationRule):
        return RULE_CLASS_CALIBRATION
    raise TypeError(f"unknown rule type {type(rule).__name__}")


def rule_targets(rule: object) -> frozenset[str]:
    """Items a rule can boost when it fires (empty for calibration rules)."""
    if isinstance(rule, SequentialRule):
        return rule.consequent
    if isinstance(rule, PeriodicRule):
        return frozenset((rule.item,))
    if isinstance(rule, ContextRule):
        return rule.items
    return frozenset()


class RuleSet:
    """Immutable collection of scoped rules with unique ids."""

    def __init__(self, rules: Iterable[ScopedRule]):
        self.rules: tuple[ScopedRule, ...] = tuple(rules)
        self.by_id: dict[str, ScopedRule] = {}
        for sr in self.rules:
            if sr.rule_id in self.by_id:
                raise ValueError(f"duplicate rule id {sr.rule_id!r}")
            self.by_id[sr.rule_id] = sr

    def __len__(self) -> int:
        return len(self.rules)

    def without(self, disabled_ids: Iterable[str]) -> "RuleSet":
        disabled = set(disabled_ids)
        unknown = disabled - set(self.by_id)
        if unknown:
            raise UnknownRule(f"unknown rule ids: {sorted(unknown)}")
        if not disabled:
            return self
        return RuleSet(sr for sr in self.rules if sr.rule_id not in disabled)

    def merged_with(self, other: "RuleSet") -> "RuleSet":
        return RuleSet(self.rules + other.rules)

    def to_jsonl(self) -> str:
        return "".join(dumps_rule(sr) + "\n" for sr in self.rules)

    @classmethod
    def from_jsonl(cls, text: str) -> "RuleSet":
        rules = []
        for line_no, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                rules.append(loads_rule(line))
            except (ValueError, KeyError, TypeError) as exc:
                raise InputError(f"rules line {line_no}: {exc}") from exc
        return cls(rules)


# ---------------------------------------------------------------------------
# Miners
# ---------------------------------------------------------------------------

def _first_last_positions(seq: ItemSequence) -> tuple[dict[str, int], dict[str, int]]:
    first: dict[str, int] = {}
    last: dict[str, int] = {}
    for pos, item in enumerate(seq.items):
        first.setdefault(item, pos)
        last[item] = pos
    return first, last


def mine_sequential(sequences: Sequence[ItemSequence],
                    cfg: MiningConfig) -> list[SequentialRule]:
    """All X -> Y rules meeting minsup and minconf, set semantics per sequence.

    A rule occurs in a sequence when every antecedent item appears strictly
    before every consequent item (some occurrence of each). Output is sorted
    by (support desc, confidence desc, lexicographic rule).
    """
    if not sequences:
        raise ValueError("mine_sequential requires at least one sequence")
    firsts = []
    lasts = []
    covers: dict[str, set[int]] = {}
    for idx, seq in enumerate(sequences):
        f, l = _first_last_positions(seq)
        firsts.append(f)
        lasts.append(l)
        for item in f:
            covers.setdefault(item, set()).add(idx)

    frequent = sorted(item for item, c in covers.items() if len(c) >= cfg.minsup)
    rules: list[SequentialRule] = []

    def grow_consequent(x_items: tuple[str, ...], x_cover: set[int],
                        ready_bound: dict[int, int],
                        y_items: tuple[str, ...], y_cover: set[int],
                        start: int) -> None:
        for k in range(start, len(frequent)):
            item = frequent[k]
            if item in x_items:
                continue
            cand = tuple(sorted(y_items + (item,)))
            cover = {
                s for s in (y_cover & covers[item])
                if lasts[s].get(item, -1) > ready_bound[s]
            }
            if len(cover) < cfg.minsup:
                continue
            support = len(cover)
            confidence = support / len(x_cover)
            if confidence >= cfg.minconf:
                rules.append(SequentialRule(
                    antecedent=frozenset(x_items),
                    consequent=frozenset(cand),
                    window=cfg.fire_window,
                    support=support,
                    confidence=confidence,
                ))
            if len(cand) < cfg.max_consequent:
                grow_consequent(x_items, x_cover, ready_bound, cand, cover, k + 1)

    def grow_antecedent(x_items: tuple[str, ...], x_cover: set[int], start: int) -> None:
        for k in range(start, len(frequent)):
            item = frequent[k]
            cand = tuple(sorted(x_items + (item,)))
            cover = x_cover & covers[item]
            if len(cover) < cfg.minsup:
                continue
            # Earliest point where every antecedent item has appeared.
            ready = {s: max(firsts[s][x] for x in cand) for s in cover}
            grow_consequent(cand, cover, ready, (), cover, 0)
            if len(cand) < cfg.max_antecedent:
                grow_antecedent(cand, cover, k + 1)

    grow_antecedent((), set(range(len(sequences))), 0)
    rules.sort(key=lambda r: (
        -r.support, -r.confidence, sorted(r.antecedent), sorted(r.consequent)
    ))
    return rules


def mine_periodic(sequence: ItemSequence, cfg: MiningConfig) -> list[PeriodicRule]:
    """Items reoccurring at near-constant item-step gaps within one history.

    The gap spread (max - min) must stay within ``periodic_tolerance``.
    """
    positions: dict[str, list[int]] = {}
    for pos, item in enumerate(sequence.items):
        positions.setdefault(item, []).append(pos)
    rules = []
    for item in sorted(positions):
        occ = positions[item]
        if len(occ) < max(cfg.min_periodic_occ, 2):
            continue
        gaps = [b - a for a, b in zip(occ, occ[1:])]
        if max(gaps) - min(gaps) <= cfg.periodic_tolerance:
            rules.append(PeriodicRule(
                item=item, w_min=min(gaps), w_max=max(gaps), occurrences=len(occ)
            ))
    return rules


def _event_bucket(interaction, kind: BucketKind, key: str | None,
                  tz_offset: int) -> ContextBucket | None:
    if kind is BucketKind.CUSTOM:
        value = interaction.context.get(key or "")
        if value is None:
            return None
        return ContextBucket(BucketKind.CUSTOM, value, key=key)
    return bucketize(interaction.timestamp, kind, tz_offset)


def mine_contextual(log: EventLog, kind: BucketKind, cfg: MiningConfig,
                    tz_offset: int = 0, key: str | None = None) -> list[ContextRule]:
    """Bucket -> items rules where lift = P(item|bucket) / P(item) clears the
    threshold. Items sharing the same (bucket, lift) merge into one rule."""
    total = 0
    bucket_counts: dict[ContextBucket, int] = {}
    item_counts: dict[str, int] = {}
    pair_counts: dict[tuple[ContextBucket, str], int] = {}
    for r in log.interactions:
        bucket = _event_bucket(r, kind, key, tz_offset)
        if bucket is None:
            continue
        total += 1
        bucket_counts[bucket] = bucket_counts.get(bucket, 0) + 1
        item_counts[r.item_id] = item_counts.get(r.item_id, 0) + 1
        pk = (bucket, r.item_id)
        pair_counts[pk] = pair_counts.get(pk, 0) + 1
    if total == 0:
        return []

    merged: dict[tuple[ContextBucket, float], tuple[set[str], int]] = {}
    for (bucket, item), c_bi in pair_counts.items():
        lift = c_bi * total / (bucket_counts[bucket] * item_counts[item])
        if lift < cfg.lift_threshold or c_bi < cfg.minsup:
            continue
        items, support = merged.setdefault((bucket, lift), (set(), c_bi))
        items.add(item)
        merged[(bucket, lift)] = (items, min(support, c_bi))

    rules = [
        ContextRule(bucket=bucket, items=frozenset(items), lift=lift, support=support)
        for (bucket, lift), (items, support) in merged.items()
    ]
    rules.sort(key=lambda r: (
        r.bucket.kind.value, r.bucket.key or "", r.bucket.value,
        -r.lift, sorted(r.items),
    ))
    return rules


def mine_scoped(log: EventLog, groups: UserGroupMap, cfg: MiningConfig,
                beta: float = 1.0, lift_cap: float = 5.0,
                bucket_kind: BucketKind = BucketKind.TIME_OF_DAY,
                bucket_key: str | None = None, tz_offset: int = 0) -> RuleSet:
    """Run the miners at individual, group, and global scope.

    Sequential and contextual rules are mined at every scope; periodic rules
    only at individual scope, where item-step gaps are well defined. Boost
    weights come from each rule's mining statistics scaled by ``beta``.
    """
    from .procedural import boost_weight

    groups.validate_against(log)
    users = sorted(log.users)
    sequences = {u: user_history(log, u) for u in users}
    scoped: list[ScopedRule] = []

    def add(scope: Scope, mined: Iterable[object]) -> None:
        counters: dict[str, int] = {}
        for rule in mined:
            cls = rule_class_of(rule)
            ordinal = counters.get(cls, 0)
            counters[cls] = ordinal + 1
            scoped.append(ScopedRule(
                rule_id=f"{scope.render()}/{cls}/{ordinal}",
                scope=scope,
                rule=rule,
                v_r=boost_weight(rule, beta, lift_cap=lift_cap),
            ))

    def mined_for(pool_users: list[str], include_periodic: bool) -> list[object]:
        pool_cfg = cfg.scaled_for(len(pool_users))
        out: list[object] = list(mine_sequential(
            [sequences[u] for u in pool_users], pool_cfg
        ))
        if include_periodic:
            for u in pool_users:
                out.extend(mine_periodic(sequences[u], cfg))
        sub_log = log if set(pool_users) == set(users) else log.restricted_to(pool_users)
        out.extend(mine_contextual(sub_log, bucket_kind, cfg,
                                   tz_offset=tz_offset, key=bucket_key))
        return out

    for u in users:
        add(Scope(SCOPE_INDIVIDUAL, u), mined_for([u], include_periodic=True))
    for g in groups.group_ids():
        members = [u for u in groups.members(g) if u in log.users]
        if members:
            add(Scope(SCOPE_GROUP, g), mined_for(members, include_periodic=False))
    add(GLOBAL_SCOPE, mined_for(users, include_periodic=False))
    return RuleSet(scoped)


# ---------------------------------------------------------------------------
# JSON-lines serialization (bit-exact round trips)
# ---------------------------------------------------------------------------

def _bucket_to_json(bucket: ContextBucket) -> dict:
    return {"kind": bucket.kind.value, "value": bucket.value, "key": bucket.key}


def _bucket_from_json(obj: dict) -> ContextBucket:
    return ContextBucket(BucketKind(obj["kind"]), obj["value"], key=obj.get("key"))


def dumps_rule(sr: ScopedRule) -> str:
    from .procedural import PopularityCalibrationRule

    rule = sr.rule
    record: dict = {
        "rule_id": sr.rule_id,
        "scope": {"level": sr.scope.level, "subject": sr.scope.subject},
        "class": sr.rule_class,
        "v_r": sr.v_r,
        "provenance": sr.provenance,
    }
    if isinstance(rule, SequentialRule):
        record["body"] = {
            "antecedent": sorted(rule.antecedent),
            "consequent": sorted(rule.consequent),
            "window": rule.window,
        }
        record["support"] = rule.support
        record["confidence"] = rule.confidence
    elif isinstance(rule, PeriodicRule):
        record["body"] = {
            "item": rule.item,
            "w_min": rule.w_min,
            "w_max": rule.w_max,
            "occurrences": rule.occurrences,
        }
        record["support"] = rule.occurrences
    elif isinstance(rule, ContextRule):
        record["body"] = {
            "bucket": _bucket_to_json(rule.bucket),
            "items": sorted(rule.items),
        }
        record["support"] = rule.support
        record["lift"] = rule.lift
    elif isinstance(rule, PopularityCalibrationRule):
        record["body"] = {
            "profile_quantile_target": rule.profile_quantile_target,
            "strength": rule.strength,
            "direction": rule.direction,
        }
    else:
        raise TypeError(f"cannot serialize rule type {type(rule).__name__}")
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def loads_rule(line: str) -> ScopedRule:
    from .procedural import PopularityCalibrationRule

    obj = json.loads(line)
    cls = obj["class"]
    body = obj["body"]
    if cls == RULE_CLASS_SEQUENTIAL:
        rule: object = SequentialRule(
            antecedent=frozenset(body["antecedent"]),
            consequent=frozenset(body["consequent"]),
            window=body["window"],
            support=obj["support"],
            confidence=obj["confidence"],
        )
    elif cls == RULE_CLASS_PERIODIC:
        rule = PeriodicRule(
            item=body["item"], w_min=body["w_min"], w_max=body["w_max"],
            occurrences=body["occurrences"],
        )
    elif cls == RULE_CLASS_CONTEXTUAL:
        rule = ContextRule(
            bucket=_bucket_from_json(body["bucket"]),
            items=frozenset(body["items"]),
            lift=obj["lift"],
            support=obj["support"],
        )
    elif cls == RULE_CLASS_CALIBRATION:
        rule = PopularityCalibrationRule(
            profile_quantile_target=body["profile_quantile_target"],
            strength=body["strength"],
            direction=body["direction"],
        )
    else:
        raise ValueError(f"unknown rule class {cls!r}")
    scope_obj = obj["scope"]
    return ScopedRule(
        rule_id=obj["rule_id"],
        scope=Scope(scope_obj["level"], scope_obj.get("subject")),
        rule=rule,
        v_r=obj["v_r"],
        provenance=obj["provenance"],
    )
