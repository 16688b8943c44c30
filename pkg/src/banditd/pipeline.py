"""The serving path: rules -> score -> explore -> cap -> sample -> log -> act,
plus the policy registry with atomic promotion, guard rails, and rollback.
"""
from __future__ import annotations

import secrets
import threading
import time
from dataclasses import dataclass
from typing import Optional, Sequence

from banditd import exploration, rules as rules_mod
from banditd.core import (
    ActionCandidate,
    ActionSets,
    DecisionRecord,
    ExplorationDistribution,
    FeatureVector,
    candidates_fingerprint,
)
from banditd.exploration import ExplorationConfig
from banditd.logchannel import SegmentWriter, canonical_json
from banditd.ope import EvaluationReport
from banditd.policy import Scorer, score as score_actions
from banditd.rules import RuleFactory, RuleSetVersion, compute_legal


@dataclass(frozen=True)
class GuardRails:
    min_ess_fraction: float = 0.01
    ci_level: float = 0.90
    required_margin: float = 0.0


@dataclass(frozen=True)
class DecisionRequest:
    user_id: str
    query: str
    context: FeatureVector
    candidates: tuple[ActionCandidate, ...]

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(self.candidates))
        if not self.candidates:
            raise ValueError("request carries no candidate actions")


@dataclass
class PromotionEntry:
    timestamp_ms: int
    action: str            # "promote" | "rollback"
    version: str
    mode: str              # "auto" | "manual" | "initial"
    operator: Optional[str]
    previous: Optional[str]

    def to_obj(self) -> dict:
        return {
            "ts": self.timestamp_ms,
            "action": self.action,
            "version": self.version,
            "mode": self.mode,
            "operator": self.operator,
            "previous": self.previous,
        }


class PromotionRejected(ValueError):
    """Auto-promotion failed a guard rail; the message names the rail."""


class PolicyRegistry:
    """Versioned policies with one champion, swapped atomically.

    Readers snapshot (champion, rules) under the lock, so a decision never
    mixes scores from two versions. The promotion history is append-only;
    rollbacks are forward entries, never erasures.
    """

    def __init__(self, champion: Scorer, rule_factory: RuleFactory,
                 active_rules_version: str,
                 exploration_config: Optional[ExplorationConfig] = None,
                 rails: Optional[GuardRails] = None,
                 fallback: Optional[ActionCandidate] = None,
                 history_path: Optional[str] = None):
        self._lock = threading.Lock()
        self._policies: dict[str, Scorer] = {champion.version: champion}
        self._champion_version = champion.version
        self.rule_factory = rule_factory
        self.active_rules_version = active_rules_version
        self.exploration_config = exploration_config or ExplorationConfig()
        self.rails = rails or GuardRails()
        self.fallback = fallback
        self.history: list[PromotionEntry] = []
        self._history_path = history_path
        self._record_history("promote", champion.version, "initial", None, None)

    # -- reads

    @property
    def champion_version(self) -> str:
        with self._lock:
            return self._champion_version

    def champion(self) -> Scorer:
        with self._lock:
            return self._policies[self._champion_version]

    def get(self, version: str) -> Scorer:
        with self._lock:
            return self._policies[version]

    def versions(self) -> list[str]:
        with self._lock:
            return sorted(self._policies)

    def snapshot(self) -> tuple[Scorer, RuleSetVersion, Optional[RuleSetVersion]]:
        """(champion, active rules, rules the champion was trained under)."""
        with self._lock:
            champion = self._policies[self._champion_version]
            active_version = self.active_rules_version
        active = self.rule_factory.build(active_version)
        stamped = None
        stamped_version = getattr(champion, "rules_version", "")
        if stamped_version and stamped_version != active_version:
            stamped = self.rule_factory.build(stamped_version)
        return champion, active, stamped

    # -- writes

    def register(self, policy: Scorer) -> None:
        with self._lock:
            existing = self._policies.get(policy.version)
            if existing is not None and existing is not policy:
                raise ValueError(f"policy version {policy.version!r} already registered")
            self._policies[policy.version] = policy

    def _record_history(self, action: str, version: str, mode: str,
                        operator: Optional[str], previous: Optional[str]) -> None:
        entry = PromotionEntry(
            timestamp_ms=int(time.time() * 1000),
            action=action, version=version, mode=mode,
            operator=operator, previous=previous,
        )
        self.history.append(entry)
        if self._history_path:
            with open(self._history_path, "a", encoding="utf-8") as fh:
                fh.write(canonical_json(entry.to_obj()) + "\n")

    def promote(self, version: str, evaluation: Optional[EvaluationReport] = None,
                mode: str = "manual", operator: Optional[str] = None,
                champion_estimate: Optional[float] = None) -> PromotionEntry:
        """Swap the champion, either behind guard rails (auto) or by operator
        decision (manual, recorded with their identity).

        Auto mode requires the candidate's evaluation report and promotes only
        when the capped-IPS confidence lower bound clears the champion's point
        estimate minus the margin, and the effective sample size clears the
        floor. When no separate champion report is supplied, the champion's
        estimate defaults to the logging policy's mean reward on the same
        logs, which is exact when the champion generated them.
        """
        with self._lock:
            if version not in self._policies:
                raise KeyError(f"unknown policy version {version!r}")
        if mode == "auto":
            if evaluation is None:
                raise ValueError("auto promotion requires an evaluation report")
            baseline = (champion_estimate if champion_estimate is not None
                        else evaluation.logging_mean_reward)
            ci_low = evaluation.ci.get("low")
            if ci_low is None:
                raise ValueError("evaluation report lacks a confidence interval")
            if ci_low < baseline - self.rails.required_margin:
                raise PromotionRejected(
                    "confidence lower bound below champion estimate minus margin "
                    f"({ci_low:.6f} < {baseline:.6f} - {self.rails.required_margin:.6f})")
            if evaluation.ess < self.rails.min_ess_fraction * evaluation.n:
                raise PromotionRejected(
                    "insufficient effective sample size "
                    f"({evaluation.ess:.1f} < {self.rails.min_ess_fraction} * {evaluation.n})")
        elif mode == "manual":
            if not operator:
                raise ValueError("manual promotion must record an operator identity")
        else:
            raise ValueError(f"unknown promotion mode {mode!r}")

        with self._lock:
            previous = self._champion_version
            self._champion_version = version
            self._record_history("promote", version, mode, operator, previous)
            return self.history[-1]

    def rollback(self, to_version: str, operator: Optional[str] = None) -> PromotionEntry:
        with self._lock:
            promoted_ever = {e.version for e in self.history if e.action == "promote"}
            if to_version not in promoted_ever:
                raise KeyError(f"version {to_version!r} was never promoted")
            previous = self._champion_version
            self._champion_version = to_version
            self._record_history("rollback", to_version, "manual", operator, previous)
            return self.history[-1]


@dataclass
class PipelineStats:
    decisions: int = 0
    fallbacks: int = 0
    logging_failures: int = 0
    capped_decisions: int = 0


def build_distribution(champion: Scorer, active: RuleSetVersion,
                       stamped: Optional[RuleSetVersion],
                       config: ExplorationConfig,
                       fallback: Optional[ActionCandidate],
                       context: FeatureVector,
                       candidates: Sequence[ActionCandidate],
                       ) -> tuple[ExplorationDistribution, frozenset[str]]:
    """Pure serving distribution for one request.

    Rules first, then champion scores, then the configured exploration
    strategy; actions legal now but unseen by the champion's training rules
    are capped. An empty legal set yields a one-hot fallback distribution.
    The closed-form simulator oracle calls this same function, so served
    probabilities and oracle expectations cannot drift apart.
    """
    legal_ids = compute_legal(active, context, candidates)
    if not legal_ids:
        if fallback is None:
            raise rules_mod.NoLegalActionError("no legal action and no fallback configured")
        dist = ExplorationDistribution(probs={fallback.action_id: 1.0}, strategy="fallback")
        return dist, legal_ids

    legal = sorted((c for c in candidates if c.action_id in legal_ids),
                   key=lambda c: c.action_id)
    scores = score_actions(champion, context, legal)

    if config.strategy == "epsilon_greedy":
        dist = exploration.epsilon_greedy(scores, config.epsilon)
    elif config.strategy == "softmax":
        dist = exploration.softmax_distribution(scores, config.temperature)
    else:
        incumbent = exploration.greedy_action(scores)
        ordering = exploration.rank_ordering(legal, incumbent)
        dist = exploration.rank_weight_distribution(ordering, config.rank_weights)

    if stamped is not None:
        stamped_legal = compute_legal(stamped, context, candidates)
        newly_legal = legal_ids - stamped_legal
        if newly_legal:
            dist = exploration.cap_new_actions(dist, newly_legal, config.new_action_cap)
    return dist, legal_ids


class DecisionPipeline:
    """Serves decisions and logs them through the bandit channel.

    Caches legal sets and exploration distributions keyed by content
    fingerprints; everything cached is a pure function of its key.
    """

    def __init__(self, registry: PolicyRegistry, writer: Optional[SegmentWriter],
                 clock=None):
        self.registry = registry
        self.writer = writer
        self.clock = clock or (lambda: int(time.time() * 1000))
        self.stats = PipelineStats()
        self._dist_cache: dict = {}

    def _distribution(self, champion: Scorer, active: RuleSetVersion,
                      stamped: Optional[RuleSetVersion],
                      request: DecisionRequest) -> tuple[ExplorationDistribution, frozenset[str]]:
        config = self.registry.exploration_config
        cands_fp = candidates_fingerprint(request.candidates)
        cache_key = (champion.version, active.version,
                     stamped.version if stamped else None,
                     request.context.fingerprint, cands_fp, config)
        hit = self._dist_cache.get(cache_key)
        if hit is not None:
            return hit
        result = build_distribution(champion, active, stamped, config,
                                    self.registry.fallback, request.context,
                                    request.candidates)
        if len(self._dist_cache) > 1 << 16:
            self._dist_cache.clear()
        self._dist_cache[cache_key] = result
        return result

    def decide(self, request: DecisionRequest,
               arm: str = "none") -> tuple[ActionCandidate, str, DecisionRecord]:
        """Serve one request: returns (action, event id, the logged record).

        A rules outcome with no legal action serves the configured fallback
        with probability 1. A logging failure never fails the request; it is
        counted and the record is still returned to the caller.
        """
        champion, active, stamped = self.registry.snapshot()
        dist, legal_ids = self._distribution(champion, active, stamped, request)

        candidates = request.candidates
        if not legal_ids:
            fallback = self.registry.fallback
            assert fallback is not None
            self.stats.fallbacks += 1
            if all(c.action_id != fallback.action_id for c in candidates):
                candidates = candidates + (fallback,)
            legal_ids = frozenset({fallback.action_id})

        seed = exploration.seed_from(request.user_id, request.query)
        chosen_id, chosen_prob = exploration.sample(dist, seed)
        chosen = next(c for c in candidates if c.action_id == chosen_id)
        if dist.capped_ids:
            self.stats.capped_decisions += 1

        record = DecisionRecord(
            event_id=secrets.token_hex(16),
            timestamp_ms=self.clock(),
            context=request.context,
            action_sets=ActionSets(potential=candidates, legal_ids=legal_ids),
            chosen_id=chosen_id,
            chosen_prob=chosen_prob,
            distribution=dist,
            policy_version=champion.version,
            rules_version=active.version,
            arm=arm,
            seed_material=exploration.seed_material(request.user_id, request.query),
        )
        self.stats.decisions += 1
        if self.writer is not None:
            try:
                self.writer.append_decision(record)
            except OSError:
                # Availability over completeness: answer anyway, flag it.
                self.stats.logging_failures += 1
        return chosen, record.event_id, record


def decide(registry: PolicyRegistry, request: DecisionRequest,
           writer: Optional[SegmentWriter] = None,
           arm: str = "none") -> tuple[ActionCandidate, str, DecisionRecord]:
    """One-shot convenience wrapper around DecisionPipeline.decide."""
    return DecisionPipeline(registry, writer).decide(request, arm=arm)


def promote(registry: PolicyRegistry, version: str,
            evaluation: Optional[EvaluationReport] = None, mode: str = "manual",
            operator: Optional[str] = None,
            champion_estimate: Optional[float] = None) -> PromotionEntry:
    return registry.promote(version, evaluation, mode, operator, champion_estimate)


def rollback(registry: PolicyRegistry, to_version: str,
             operator: Optional[str] = None) -> PromotionEntry:
    return registry.rollback(to_version, operator)
