"""Procedural memory: rule condition matching and additive activation boosts.

A rule that fires contributes its influence weight (scaled by the weight of
its scope) to every item it targets; simultaneous firings on the same item
sum. Popularity calibration is the one manual rule family handled here: it
penalizes items whose popularity quantile sits far from the user's own
profile.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping

from .datamodel import ContextBucket, ItemSequence, UserGroupMap
from .errors import InvariantError
from .rulemine import (
    SCOPE_GLOBAL,
    SCOPE_GROUP,
    SCOPE_INDIVIDUAL,
    ContextRule,
    PeriodicRule,
    RuleSet,
    Scope,
    ScopedRule,
    SequentialRule,
    rule_targets,
)

SCOPE_MODE_WEIGHTED = "weighted"
SCOPE_MODE_FALLBACK = "fallback"

_SCOPE_PRIORITY = {SCOPE_INDIVIDUAL: 0, SCOPE_GROUP: 1, SCOPE_GLOBAL: 2}


@dataclass(frozen=True)
class ScopeWeights:
    """Multiplicative weight per rule scope; zero disables a scope."""

    individual: float = 1.0
    group: float = 0.5
    global_: float = 0.25

    def __post_init__(self):
        for name in ("individual", "group", "global_"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} weight must be >= 0")

    def for_level(self, level: str) -> float:
        if level == SCOPE_INDIVIDUAL:
            return self.individual
        if level == SCOPE_GROUP:
            return self.group
        if level == SCOPE_GLOBAL:
            return self.global_
        raise ValueError(f"unknown scope level {level!r}")


@dataclass(frozen=True)
class PopularityCalibrationRule:
    """Pull recommendations toward the user's own popularity level."""

    profile_quantile_target: float = 0.5
    strength: float = 1.0
    direction: str = "match_profile"

    def __post_init__(self):
        if not (0 <= self.profile_quantile_target <= 1):
            raise ValueError("profile_quantile_target must be in [0, 1]")
        if not math.isfinite(self.strength) or self.strength < 0:
            raise ValueError("strength must be a non-negative finite real")
        if self.direction != "match_profile":
            raise ValueError(f"unknown calibration direction {self.direction!r}")


@dataclass(frozen=True)
class FiringRecord:
    """One rule firing: which items it boosted, by how much, and why."""

    rule_id: str
    scope: Scope
    boosted_items: frozenset[str]
    applied_boost: float  # v_r times scope weight
    condition_evidence: frozenset[str]

    def __post_init__(self):
        if self.applied_boost <= 0:
            raise ValueError("applied_boost must be positive")
        if not self.boosted_items:
            raise ValueError("boosted_items must be non-empty")


def boost_weight(rule: object, beta: float, lift_cap: float = 5.0) -> float:
    """Influence weight of a mined rule, derived from its mining statistics.

    Sequential rules scale with confidence, periodic with occurrence count
    (saturating at 10), contextual with lift (saturating at ``lift_cap``).
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    if isinstance(rule, SequentialRule):
        return beta * rule.confidence
    if isinstance(rule, PeriodicRule):
        return beta * min(1.0, rule.occurrences / 10.0)
    if isinstance(rule, ContextRule):
        return beta * min(1.0, rule.lift / lift_cap)
    if isinstance(rule, PopularityCalibrationRule):
        # Calibration acts through its strength, not an additive boost.
        return 1.0
    raise TypeError(f"no boost weight for rule type {type(rule).__name__}")


def scope_eligible(scope: Scope, user: str, groups: UserGroupMap) -> bool:
    if scope.level == SCOPE_INDIVIDUAL:
        return scope.subject == user
    if scope.level == SCOPE_GROUP:
        return groups.group_of(user) == scope.subject
    return True


def _last_position(items: tuple[str, ...], item: str) -> int | None:
    for idx in range(len(items) - 1, -1, -1):
        if items[idx] == item:
            return idx
    return None


def _check_condition(sr: ScopedRule, items: tuple[str, ...],
                     bucket: ContextBucket | None) -> frozenset[str] | None:
    """Evidence strings when the rule's IF condition holds, else None."""
    rule = sr.rule
    if isinstance(rule, SequentialRule):
        recent = set(items[-rule.window:]) if rule.window else set()
        if rule.antecedent <= recent:
            return frozenset({
                f"antecedent={','.join(sorted(rule.antecedent))}",
                f"window={rule.window}",
            })
        return None
    if isinstance(rule, PeriodicRule):
        idx = _last_position(items, rule.item)
        if idx is None:
            return None
        steps = len(items) - idx
        if rule.w_min <= steps <= rule.w_max:
            return frozenset({
                f"steps_ago={steps}",
                f"interval={rule.w_min}..{rule.w_max}",
            })
        return None
    if isinstance(rule, ContextRule):
        if bucket is not None and rule.bucket == bucket:
            return frozenset({f"bucket={bucket.label()}"})
        return None
    return None  # calibration rules never produce firings


def match_rules(ruleset: RuleSet, history: ItemSequence | None, now: int,
                bucket: ContextBucket | None, user: str, groups: UserGroupMap,
                weights: ScopeWeights | None = None,
                scope_mode: str = SCOPE_MODE_WEIGHTED) -> list[FiringRecord]:
    """Evaluate every rule's IF condition and return the firing records.

    Scope gating: individual rules fire only for their own user, group rules
    only for members, global rules for everyone. A scope whose weight is zero
    is disabled outright. In ``fallback`` mode only the highest-priority scope
    with at least one firing contributes.
    """
    weights = weights or ScopeWeights()
    items = history.items if history is not None else ()
    firings: list[FiringRecord] = []
    for sr in ruleset.rules:
        if not scope_eligible(sr.scope, user, groups):
            continue
        w = weights.for_level(sr.scope.level)
        if w == 0.0:
            continue
        evidence = _check_condition(sr, items, bucket)
        if evidence is None:
            continue
        firings.append(FiringRecord(
            rule_id=sr.rule_id,
            scope=sr.scope,
            boosted_items=rule_targets(sr.rule),
            applied_boost=sr.v_r * w,
            condition_evidence=evidence,
        ))
    if scope_mode == SCOPE_MODE_FALLBACK and firings:
        best = min(_SCOPE_PRIORITY[f.scope.level] for f in firings)
        firings = [f for f in firings if _SCOPE_PRIORITY[f.scope.level] == best]
    elif scope_mode not in (SCOPE_MODE_WEIGHTED, SCOPE_MODE_FALLBACK):
        raise ValueError(f"unknown scope_mode {scope_mode!r}")
    return firings


def apply_boosts(activations: Mapping[str, float],
                 firings: Iterable[FiringRecord],
                 cold_base: float = -10.0) -> dict[str, float]:
    """Add each firing's boost to every item it targets.

    Items boosted but absent from the map enter at ``cold_base`` first.
    Returns a new map; non-targeted entries are copied bit-identically.
    """
    out = dict(activations)
    for f in firings:
        for item in f.boosted_items:
            out[item] = out.get(item, cold_base) + f.applied_boost
    for item, value in out.items():
        if not math.isfinite(value):
            raise InvariantError(f"non-finite boosted activation for {item!r}")
    return out


def apply_popularity_calibration(activations: Mapping[str, float],
                                 user_profile_popularity: float,
                                 item_popularity: Mapping[str, float],
                                 rule: PopularityCalibrationRule) -> dict[str, float]:
    """Penalize items by their popularity distance from the user's profile.

    Items without a popularity quantile are treated as median (0.5).
    """
    return {
        item: a - rule.strength * abs(item_popularity.get(item, 0.5) - user_profile_popularity)
        for item, a in activations.items()
    }
