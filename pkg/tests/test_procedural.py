import numpy as np
import pytest

from hyperrec.datamodel import (
    BucketKind,
    ContextBucket,
    ItemSequence,
    UserGroupMap,
    bucketize,
)
from hyperrec.procedural import (
    FiringRecord,
    PopularityCalibrationRule,
    ScopeWeights,
    apply_boosts,
    apply_popularity_calibration,
    boost_weight,
    match_rules,
)
from hyperrec.rulemine import (
    ContextRule,
    PeriodicRule,
    RuleSet,
    Scope,
    ScopedRule,
    SequentialRule,
)

from reference import should_fire
from synth import random_ruleset

MORNING = ContextBucket(BucketKind.TIME_OF_DAY, "morning")


def history(*items, user="u1"):
    return ItemSequence(user_id=user, items=tuple(items),
                        times=tuple(range(0, 10 * len(items), 10)))


def seq_rule(antecedent, consequent, window=10, support=3, confidence=1.0):
    return SequentialRule(frozenset(antecedent), frozenset(consequent),
                          window, support, confidence)


def scoped(rule, rule_id="r0", scope=Scope("global"), v_r=1.0):
    return ScopedRule(rule_id=rule_id, scope=scope, rule=rule, v_r=v_r)


class TestBoostWeight:
    def test_sequential_identity_case(self):
        assert boost_weight(seq_rule("a", "b", confidence=1.0), beta=1.0) == 1.0

    def test_sequential_scalar_product(self):
        got = boost_weight(seq_rule("a", "b", confidence=0.667), beta=0.5)
        assert got == pytest.approx(0.3335)

    def test_periodic_saturates_at_ten(self):
        assert boost_weight(PeriodicRule("p", 2, 3, 5), beta=1.0) == pytest.approx(0.5)
        assert boost_weight(PeriodicRule("p", 2, 3, 25), beta=1.0) == 1.0

    def test_contextual_lift_scaling(self):
        rule = ContextRule(MORNING, frozenset("s"), lift=2.5, support=4)
        assert boost_weight(rule, beta=1.0, lift_cap=5.0) == pytest.approx(0.5)
        rule_high = ContextRule(MORNING, frozenset("s"), lift=40.0, support=4)
        assert boost_weight(rule_high, beta=1.0, lift_cap=5.0) == 1.0

    def test_beta_must_be_positive(self):
        with pytest.raises(ValueError):
            boost_weight(seq_rule("a", "b"), beta=0.0)


class TestMatchRules:
    def test_sequential_window_match(self):
        rs = RuleSet([scoped(seq_rule({"a", "b"}, {"c"}, window=2))])
        firings = match_rules(rs, history("x", "a", "b"), 0, None, "u1", UserGroupMap())
        assert len(firings) == 1
        assert firings[0].boosted_items == frozenset({"c"})
        # antecedent outside the window does not fire
        assert match_rules(rs, history("a", "x", "b"), 0, None, "u1", UserGroupMap()) == []

    def test_periodic_interval_boundaries(self):
        rs = RuleSet([scoped(PeriodicRule("p", 2, 4, 5))])

        def fires(items):
            return bool(match_rules(rs, history(*items), 0, None, "u1", UserGroupMap()))

        assert fires(["p", "x", "y"])          # 3 steps ago
        assert fires(["p", "x"])               # 2 steps ago (lower bound)
        assert fires(["p", "x", "y", "z"])     # 4 steps ago (upper bound)
        assert not fires(["p"])                # 1 step ago
        assert not fires(["p", "a", "b", "c", "d"])  # 5 steps ago

    def test_periodic_uses_most_recent_occurrence(self):
        rs = RuleSet([scoped(PeriodicRule("p", 3, 4, 5))])
        # an old occurrence sits in the interval but the latest is 1 step ago
        firings = match_rules(rs, history("p", "x", "y", "p"), 0, None, "u1",
                              UserGroupMap())
        assert firings == []

    def test_contextual_bucket_match(self):
        rule = ContextRule(MORNING, frozenset({"s"}), lift=2.5, support=4)
        rs = RuleSet([scoped(rule)])
        assert match_rules(rs, history("x"), 0, MORNING, "u1", UserGroupMap())
        night = ContextBucket(BucketKind.TIME_OF_DAY, "night")
        assert match_rules(rs, history("x"), 0, night, "u1", UserGroupMap()) == []
        assert match_rules(rs, history("x"), 0, None, "u1", UserGroupMap()) == []

    def test_individual_scope_gate(self):
        rs = RuleSet([scoped(seq_rule({"a"}, {"b"}), scope=Scope("individual", "u1"))])
        assert match_rules(rs, history("a"), 0, None, "u1", UserGroupMap())
        assert match_rules(rs, history("a"), 0, None, "u2", UserGroupMap()) == []

    def test_group_scope_gate(self):
        rs = RuleSet([scoped(seq_rule({"a"}, {"b"}), scope=Scope("group", "g1"))])
        groups = UserGroupMap({"u1": "g1", "u2": "g2"})
        assert match_rules(rs, history("a"), 0, None, "u1", groups)
        assert match_rules(rs, history("a"), 0, None, "u2", groups) == []

    def test_empty_history_only_context_fires(self):
        rs = RuleSet([
            scoped(seq_rule({"a"}, {"b"}), rule_id="s"),
            scoped(PeriodicRule("p", 1, 3, 5), rule_id="p"),
            scoped(ContextRule(MORNING, frozenset({"s"}), 2.5, 4), rule_id="c"),
        ])
        firings = match_rules(rs, None, 0, MORNING, "u1", UserGroupMap())
        assert [f.rule_id for f in firings] == ["c"]

    def test_applied_boost_includes_scope_weight(self):
        rs = RuleSet([
            scoped(seq_rule({"a"}, {"b"}), rule_id="i", scope=Scope("individual", "u1"),
                   v_r=0.8),
            scoped(seq_rule({"a"}, {"c"}), rule_id="g", v_r=0.8),
        ])
        weights = ScopeWeights(individual=1.0, group=0.5, global_=0.25)
        firings = {f.rule_id: f for f in match_rules(
            rs, history("a"), 0, None, "u1", UserGroupMap(), weights=weights)}
        assert firings["i"].applied_boost == pytest.approx(0.8)
        assert firings["g"].applied_boost == pytest.approx(0.2)

    def test_scope_monotonicity(self):
        body = seq_rule({"a"}, {"b"})
        rs = RuleSet([
            scoped(body, rule_id="i", scope=Scope("individual", "u1"), v_r=0.6),
            scoped(body, rule_id="g", scope=Scope("group", "g1"), v_r=0.6),
        ])
        groups = UserGroupMap({"u1": "g1"})
        firings = {f.rule_id: f for f in match_rules(
            rs, history("a"), 0, None, "u1", groups)}
        assert firings["i"].applied_boost >= firings["g"].applied_boost

    def test_zero_weight_disables_scope(self):
        rs = RuleSet([scoped(seq_rule({"a"}, {"b"}))])
        weights = ScopeWeights(global_=0.0)
        assert match_rules(rs, history("a"), 0, None, "u1", UserGroupMap(),
                           weights=weights) == []

    def test_fallback_mode_keeps_highest_priority_scope(self):
        rs = RuleSet([
            scoped(seq_rule({"a"}, {"b"}), rule_id="i", scope=Scope("individual", "u1")),
            scoped(seq_rule({"a"}, {"c"}), rule_id="g"),
        ])
        firings = match_rules(rs, history("a"), 0, None, "u1", UserGroupMap(),
                              scope_mode="fallback")
        assert [f.rule_id for f in firings] == ["i"]
        # without an individual firing, global applies
        firings = match_rules(rs, history("a"), 0, None, "u2", UserGroupMap(),
                              scope_mode="fallback")
        assert [f.rule_id for f in firings] == ["g"]

    def test_evidence_strings(self):
        rs = RuleSet([
            scoped(seq_rule({"a", "b"}, {"c"}, window=4), rule_id="s"),
            scoped(PeriodicRule("p", 2, 4, 5), rule_id="p"),
            scoped(ContextRule(MORNING, frozenset({"s"}), 2.5, 4), rule_id="c"),
        ])
        firings = {f.rule_id: f for f in match_rules(
            rs, history("p", "a", "b"), 0, MORNING, "u1", UserGroupMap())}
        assert "antecedent=a,b" in firings["s"].condition_evidence
        assert "steps_ago=3" in firings["p"].condition_evidence
        assert "bucket=morning" in firings["c"].condition_evidence


class TestFiringSoundness:
    def test_against_independent_evaluator(self):
        rng = np.random.default_rng(59)
        items = [f"i{k}" for k in range(6)]
        users = ["u0", "u1", "u2"]
        groups = UserGroupMap({"u0": "g0", "u1": "g1"})
        weights = ScopeWeights()
        for trial in range(120):
            rs = random_ruleset(rng, items, users, groups,
                                n_rules=int(rng.integers(2, 9)))
            length = int(rng.integers(0, 12))
            hist = history(*(items[int(rng.integers(0, len(items)))]
                             for _ in range(length)))
            bucket = bucketize(int(rng.integers(0, 10**6)), BucketKind.TIME_OF_DAY)
            user = users[int(rng.integers(0, len(users)))]
            firings = match_rules(rs, hist, 0, bucket, user, groups, weights=weights)
            fired = {f.rule_id for f in firings}
            for sr in rs.rules:
                expected = should_fire(sr, hist.items, bucket, user, groups, weights)
                assert (sr.rule_id in fired) == expected, \
                    f"trial {trial}: rule {sr.rule_id} mismatch"


class TestApplyBoosts:
    def firing(self, items, boost, rule_id="r0"):
        return FiringRecord(rule_id=rule_id, scope=Scope("global"),
                            boosted_items=frozenset(items), applied_boost=boost,
                            condition_evidence=frozenset())

    def test_direct_addition(self):
        out = apply_boosts({"c": 0.2}, [self.firing({"c"}, 0.3)])
        assert out["c"] == pytest.approx(0.5)

    def test_two_firings_sum(self):
        firings = [self.firing({"c"}, 0.3, "r0"), self.firing({"c"}, 0.1, "r1")]
        together = apply_boosts({"c": 0.0}, firings)
        one_at_a_time = apply_boosts(apply_boosts({"c": 0.0}, firings[:1]), firings[1:])
        assert together["c"] == pytest.approx(0.4)
        assert one_at_a_time["c"] == pytest.approx(together["c"], abs=1e-12)

    def test_no_firings_value_equal(self):
        amap = {"a": 1.0, "b": -2.0}
        assert apply_boosts(amap, []) == amap

    def test_absent_item_enters_at_cold_base(self):
        out = apply_boosts({"a": 0.0}, [self.firing({"z"}, 1.0)], cold_base=-10.0)
        assert out["z"] == pytest.approx(-9.0)

    def test_boost_locality_bit_identical(self):
        rng = np.random.default_rng(61)
        amap = {f"i{k}": float(rng.normal()) for k in range(30)}
        firings = [self.firing({"i1", "i2"}, 0.5)]
        out = apply_boosts(amap, firings)
        for k, v in amap.items():
            if k in ("i1", "i2"):
                assert out[k] == v + 0.5
            else:
                assert out[k] == v  # exact equality, untouched entries copied

    def test_additivity_order_independent(self):
        rng = np.random.default_rng(67)
        items = [f"i{k}" for k in range(8)]
        for _ in range(50):
            amap = {i: float(rng.normal()) for i in items}
            firings = [
                self.firing(
                    set(str(x) for x in rng.choice(items, size=int(rng.integers(1, 4)),
                                                   replace=False)),
                    float(rng.uniform(0.01, 2.0)), f"r{j}",
                )
                for j in range(int(rng.integers(1, 6)))
            ]
            together = apply_boosts(amap, firings)
            perm = [firings[int(j)] for j in rng.permutation(len(firings))]
            stepwise = dict(amap)
            for f in perm:
                stepwise = apply_boosts(stepwise, [f])
            for item in together:
                assert stepwise[item] == pytest.approx(together[item], abs=1e-12)

    def test_ablation_identity(self):
        rng = np.random.default_rng(71)
        items = [f"i{k}" for k in range(6)]
        amap = {i: float(rng.normal()) for i in items}
        firings = [
            self.firing({"i0", "i1"}, 0.4, "r0"),
            self.firing({"i1", "i2"}, 0.7, "r1"),
            self.firing({"i3"}, 0.2, "r2"),
        ]
        full = apply_boosts(amap, firings)
        removed = apply_boosts(amap, [f for f in firings if f.rule_id != "r1"])
        for item in items:
            delta = full[item] - removed[item]
            if item in ("i1", "i2"):
                assert delta == pytest.approx(0.7, abs=1e-12)
            else:
                assert delta == 0.0


class TestPopularityCalibration:
    def test_matching_popularity_unchanged(self):
        rule = PopularityCalibrationRule(strength=1.0)
        out = apply_popularity_calibration({"a": 0.5}, 0.4, {"a": 0.4}, rule)
        assert out["a"] == pytest.approx(0.5)

    def test_scalar_penalty(self):
        rule = PopularityCalibrationRule(strength=1.0)
        out = apply_popularity_calibration({"a": 0.0}, 0.2, {"a": 0.9}, rule)
        assert out["a"] == pytest.approx(-0.7)

    def test_zero_strength_identity(self):
        rule = PopularityCalibrationRule(strength=0.0)
        amap = {"a": 0.3, "b": -1.2}
        assert apply_popularity_calibration(amap, 0.2, {"a": 0.9, "b": 0.1}, rule) == amap

    def test_missing_quantile_treated_as_median(self):
        rule = PopularityCalibrationRule(strength=2.0)
        out = apply_popularity_calibration({"a": 0.0}, 0.25, {}, rule)
        assert out["a"] == pytest.approx(-2.0 * abs(0.5 - 0.25))

    def test_validation(self):
        with pytest.raises(ValueError):
            PopularityCalibrationRule(profile_quantile_target=1.5)
        with pytest.raises(ValueError):
            PopularityCalibrationRule(strength=-1.0)
        with pytest.raises(ValueError):
            PopularityCalibrationRule(direction="boost_popular")


class TestRecordValidation:
    def test_firing_record_requires_positive_boost(self):
        with pytest.raises(ValueError):
            FiringRecord("r", Scope("global"), frozenset({"a"}), 0.0, frozenset())
        with pytest.raises(ValueError):
            FiringRecord("r", Scope("global"), frozenset(), 1.0, frozenset())

    def test_scope_weights_non_negative(self):
        with pytest.raises(ValueError):
            ScopeWeights(individual=-0.1)
