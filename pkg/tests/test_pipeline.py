import threading

import numpy as np
import pytest

from banditd.core import ActionCandidate, FeatureVector
from banditd.exploration import ExplorationConfig
from banditd.logchannel import SegmentWriter, decode_line, read_lines
from banditd.ope import EvaluationReport, randomization_diagnostic
from banditd.pipeline import (
    DecisionPipeline,
    DecisionRequest,
    GuardRails,
    PolicyRegistry,
    PromotionRejected,
    promote,
    rollback,
)
from banditd.policy import ColdStartScorer, HashedLinearPolicy
from banditd.rules import Rule, RuleFactory, RuleSetVersion
from banditd.simenv import standard_rules


def make_registry(tmp_path, rails=None, explo=None, rules=None, champion=None,
                  fallback=None):
    factory = RuleFactory(str(tmp_path / "rules"))
    factory.publish(rules or standard_rules())
    champion = champion or ColdStartScorer(rules_version="rules-v1")
    return PolicyRegistry(
        champion=champion,
        rule_factory=factory,
        active_rules_version=(rules or standard_rules()).version,
        exploration_config=explo or ExplorationConfig(strategy="softmax",
                                                      temperature=1.0),
        rails=rails or GuardRails(),
        fallback=fallback,
        history_path=str(tmp_path / "promotions.log"),
    )


def pool():
    return tuple([
        ActionCandidate("escalate", FeatureVector(features={"quality": 0.5}),
                        0.0, "escalation"),
        ActionCandidate("article-a", FeatureVector(features={"quality": 0.8}),
                        0.9, "web_article"),
        ActionCandidate("dialog-a", FeatureVector(features={"quality": 0.7}),
                        0.8, "dialog"),
    ])


def request(tags=(), user="u1", query="reset password"):
    return DecisionRequest(
        user_id=user, query=query,
        context=FeatureVector(features={"severity": 0.2}, tags=frozenset(tags)),
        candidates=pool(),
    )


class TestDecide:
    def test_requested_human_always_escalates(self, tmp_path):
        registry = make_registry(tmp_path)
        pipeline = DecisionPipeline(registry, None)
        for user in ("u1", "u2", "u3"):
            action, _, record = pipeline.decide(request(tags=("requested_human",),
                                                         user=user))
            assert action.action_id == "escalate"
            assert record.chosen_prob == 1.0
            assert record.action_sets.legal_ids == {"escalate"}

    def test_identical_requests_get_identical_decisions(self, tmp_path):
        registry = make_registry(tmp_path)
        pipeline = DecisionPipeline(registry, None)
        a1, _, r1 = pipeline.decide(request())
        a2, _, r2 = pipeline.decide(request())
        assert a1.action_id == a2.action_id
        assert r1.chosen_prob == r2.chosen_prob
        assert r1.distribution.probs == r2.distribution.probs
        assert r1.event_id != r2.event_id

    def test_different_users_can_differ(self, tmp_path):
        registry = make_registry(tmp_path)
        pipeline = DecisionPipeline(registry, None)
        seen = {pipeline.decide(request(user=f"u{i}"))[0].action_id
                for i in range(40)}
        assert len(seen) > 1

    def test_records_are_logged_and_valid(self, tmp_path):
        path = str(tmp_path / "decisions-20240101-00.log")
        registry = make_registry(tmp_path)
        writer = SegmentWriter(path, "decision", durable=False)
        pipeline = DecisionPipeline(registry, writer)
        for i in range(20):
            pipeline.decide(request(user=f"u{i}"))
        writer.close()
        lines = list(read_lines(path))
        assert len(lines) == 20
        for _, text in lines:
            record = decode_line(text)
            assert record.chosen_prob == record.distribution.probs[record.chosen_id]
            assert record.policy_version == "coldstart-v0"
            assert record.rules_version == "rules-v1"

    def test_fallback_served_when_nothing_legal(self, tmp_path):
        nothing_legal = RuleSetVersion(version="rules-v1", rules=(
            Rule(rule_id="block-all", kind="allow_only_sources",
                 sources=frozenset({"nothing"})),))
        fallback = ActionCandidate("fallback-editorial", FeatureVector(),
                                   None, "editorial")
        registry = make_registry(tmp_path, rules=nothing_legal, fallback=fallback)
        pipeline = DecisionPipeline(registry, None)
        action, _, record = pipeline.decide(request())
        assert action.action_id == "fallback-editorial"
        assert record.chosen_prob == 1.0
        assert record.distribution.strategy == "fallback"
        assert pipeline.stats.fallbacks == 1
        # record invariants hold: the fallback was added to the superset
        assert "fallback-editorial" in {a.action_id
                                        for a in record.action_sets.potential}

    def test_no_fallback_configured_raises(self, tmp_path):
        nothing_legal = RuleSetVersion(version="rules-v1", rules=(
            Rule(rule_id="block-all", kind="allow_only_sources",
                 sources=frozenset({"nothing"})),))
        registry = make_registry(tmp_path, rules=nothing_legal, fallback=None)
        pipeline = DecisionPipeline(registry, None)
        with pytest.raises(ValueError, match="fallback"):
            pipeline.decide(request())

    def test_logging_failure_still_answers(self, tmp_path):
        class BrokenWriter:
            path = "broken"

            def append_decision(self, record):
                raise OSError("disk gone")

        registry = make_registry(tmp_path)
        pipeline = DecisionPipeline(registry, BrokenWriter())
        action, event_id, _ = pipeline.decide(request())
        assert action.action_id
        assert pipeline.stats.logging_failures == 1

    def test_self_consistency_and_randomization_health(self, tmp_path):
        registry = make_registry(tmp_path, explo=ExplorationConfig(
            strategy="rank_weight"))
        pipeline = DecisionPipeline(registry, None)
        records = []
        rng = np.random.default_rng(0)
        for i in range(2000):
            tags = ("requested_human",) if rng.random() < 0.02 else ()
            _, _, record = pipeline.decide(request(tags=tags, user=f"u{i}",
                                                   query=f"q{int(rng.integers(6))}"))
            records.append(record)
            assert record.chosen_prob == record.distribution.probs[record.chosen_id]
        result = randomization_diagnostic(records)
        assert result["p_value"] > 0.01
        assert result["degenerate_seed_fraction"] == 0.0


def report(ci_low, ci_high, ess, n, baseline=0.5):
    estimate = (ci_low + ci_high) / 2
    return EvaluationReport(
        policy_version="cand", reward_spec="resolution", n=n,
        estimates={"ips": estimate, "capped_ips": estimate, "snips": estimate,
                   "cap": 10.0},
        ess=ess, ci={"low": ci_low, "high": ci_high, "level": 0.9,
                     "estimator": "capped_ips"},
        diagnostics={}, baseline_delta=estimate - baseline,
        logging_mean_reward=baseline)


class TestPromotion:
    def _registry_with_candidate(self, tmp_path, rails=None):
        registry = make_registry(tmp_path, rails=rails)
        candidate = HashedLinearPolicy.zeros("cand", rules_version="rules-v1")
        registry.register(candidate)
        return registry

    def test_auto_promotes_when_rails_pass(self, tmp_path):
        registry = self._registry_with_candidate(tmp_path)
        entry = promote(registry, "cand",
                        evaluation=report(0.52, 0.60, ess=500, n=1000),
                        mode="auto", champion_estimate=0.50)
        assert registry.champion_version == "cand"
        assert entry.mode == "auto"

    def test_auto_rejects_low_ci(self, tmp_path):
        registry = self._registry_with_candidate(tmp_path)
        with pytest.raises(PromotionRejected, match="confidence lower bound"):
            promote(registry, "cand",
                    evaluation=report(0.48, 0.60, ess=500, n=1000),
                    mode="auto", champion_estimate=0.50)
        assert registry.champion_version == "coldstart-v0"

    def test_auto_rejects_insufficient_ess(self, tmp_path):
        registry = self._registry_with_candidate(
            tmp_path, rails=GuardRails(min_ess_fraction=0.01))
        with pytest.raises(PromotionRejected, match="insufficient effective sample size"):
            promote(registry, "cand",
                    evaluation=report(0.52, 0.60, ess=1.0, n=1000),
                    mode="auto", champion_estimate=0.50)

    def test_auto_requires_report(self, tmp_path):
        registry = self._registry_with_candidate(tmp_path)
        with pytest.raises(ValueError, match="requires an evaluation"):
            promote(registry, "cand", mode="auto")

    def test_manual_promotes_unconditionally_with_operator(self, tmp_path):
        registry = self._registry_with_candidate(tmp_path)
        entry = promote(registry, "cand", mode="manual", operator="kathy")
        assert registry.champion_version == "cand"
        assert entry.operator == "kathy"
        assert entry.previous == "coldstart-v0"

    def test_manual_requires_operator(self, tmp_path):
        registry = self._registry_with_candidate(tmp_path)
        with pytest.raises(ValueError, match="operator"):
            promote(registry, "cand", mode="manual")

    def test_unknown_version(self, tmp_path):
        registry = make_registry(tmp_path)
        with pytest.raises(KeyError):
            promote(registry, "ghost", mode="manual", operator="x")

    def test_history_written_to_disk(self, tmp_path):
        registry = self._registry_with_candidate(tmp_path)
        promote(registry, "cand", mode="manual", operator="kathy")
        lines = list(read_lines(str(tmp_path / "promotions.log")))
        assert len(lines) == 2  # initial + promote

    def test_margin_softens_the_rail(self, tmp_path):
        registry = self._registry_with_candidate(
            tmp_path, rails=GuardRails(required_margin=0.05))
        promote(registry, "cand",
                evaluation=report(0.46, 0.60, ess=500, n=1000),
                mode="auto", champion_estimate=0.50)
        assert registry.champion_version == "cand"


class TestRollback:
    def test_rollback_restores_previous_champion(self, tmp_path):
        registry = make_registry(tmp_path)
        registry.register(HashedLinearPolicy.zeros("cand"))
        promote(registry, "cand", mode="manual", operator="k")
        rollback(registry, "coldstart-v0", operator="k")
        assert registry.champion_version == "coldstart-v0"
        pipeline = DecisionPipeline(registry, None)
        _, _, record = pipeline.decide(request())
        assert record.policy_version == "coldstart-v0"

    def test_rollback_to_never_promoted_version_errors(self, tmp_path):
        registry = make_registry(tmp_path)
        registry.register(HashedLinearPolicy.zeros("cand"))
        with pytest.raises(KeyError, match="never promoted"):
            rollback(registry, "cand")

    def test_rollbacks_are_forward_history_entries(self, tmp_path):
        registry = make_registry(tmp_path)
        registry.register(HashedLinearPolicy.zeros("c1"))
        registry.register(HashedLinearPolicy.zeros("c2"))
        promote(registry, "c1", mode="manual", operator="k")
        promote(registry, "c2", mode="manual", operator="k")
        rollback(registry, "c1", operator="k")
        rollback(registry, "coldstart-v0", operator="k")
        actions = [(e.action, e.version) for e in registry.history]
        assert actions == [("promote", "coldstart-v0"), ("promote", "c1"),
                           ("promote", "c2"), ("rollback", "c1"),
                           ("rollback", "coldstart-v0")]


class TestAtomicity:
    def test_concurrent_decides_and_promotions(self, tmp_path):
        registry = make_registry(tmp_path)
        versions = ["coldstart-v0"]
        for i in range(4):
            v = f"cand-{i}"
            registry.register(HashedLinearPolicy.zeros(v, rules_version="rules-v1"))
            versions.append(v)
        pipeline = DecisionPipeline(registry, None)
        records = []
        lock = threading.Lock()
        stop = threading.Event()

        def decider(tid):
            i = 0
            while not stop.is_set():
                _, _, record = pipeline.decide(request(user=f"u{tid}-{i}"))
                with lock:
                    records.append(record)
                i += 1

        threads = [threading.Thread(target=decider, args=(t,)) for t in range(4)]
        for t in threads:
            t.start()
        for v in versions[1:]:
            promote(registry, v, mode="manual", operator="test")
        stop.set()
        for t in threads:
            t.join()
        assert records
        for record in records:
            # every record reflects a version that was champion at some instant
            assert record.policy_version in versions
            assert record.chosen_prob == record.distribution.probs[record.chosen_id]


class TestCappingSafety:
    def _rules(self):
        v1 = RuleSetVersion(version="rules-v1", rules=(
            Rule(rule_id="no-new-article", kind="forbid",
                 match=({"id_in": ["article-new"]},)),))
        v2 = RuleSetVersion(version="rules-v2", rules=())
        return v1, v2

    def _candidates(self):
        return pool() + (ActionCandidate("article-new",
                                         FeatureVector(features={"quality": 0.99}),
                                         0.99, "web_article"),)

    def test_newly_legal_action_is_capped_until_restamped(self, tmp_path):
        v1, v2 = self._rules()
        factory = RuleFactory(str(tmp_path / "rules"))
        factory.publish(v1)
        factory.publish(v2)
        champion = ColdStartScorer(version="cold", rules_version="rules-v1",
                                   preferred_sources=("web_article",))
        registry = PolicyRegistry(
            champion=champion, rule_factory=factory,
            active_rules_version="rules-v2",
            exploration_config=ExplorationConfig(strategy="softmax",
                                                 temperature=0.2,
                                                 new_action_cap=0.05),
            rails=GuardRails(), fallback=None,
            history_path=str(tmp_path / "promotions.log"))
        pipeline = DecisionPipeline(registry, None)
        for i in range(50):
            req = DecisionRequest(user_id=f"u{i}", query="q",
                                  context=FeatureVector(features={"severity": 0.1}),
                                  candidates=self._candidates())
            _, _, record = pipeline.decide(req)
            assert record.distribution.probs["article-new"] <= 0.05 + 1e-12
            if record.chosen_id == "article-new":
                assert (record.chosen_prob <= 0.05 + 1e-12
                        or "article-new" in record.distribution.capped_ids)

        # promoting a policy stamped with the new rules version lifts the cap
        restamped = ColdStartScorer(version="cold-v2", rules_version="rules-v2",
                                    preferred_sources=("web_article",))
        registry.register(restamped)
        promote(registry, "cold-v2", mode="manual", operator="k")
        req = DecisionRequest(user_id="u-after", query="q",
                              context=FeatureVector(features={"severity": 0.1}),
                              candidates=self._candidates())
        _, _, record = pipeline.decide(req)
        assert record.distribution.probs["article-new"] > 0.05
        assert not record.distribution.capped_ids
