"""Versioned business rules: legal-action computation, the version factory,
and offline rule-change impact analysis.

Rules are declarative predicates (no arbitrary code) so any historical
version can be re-executed offline and content-hashed for the manifest.
"""
from __future__ import annotations

import hashlib
import json
import os
import threading
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from banditd.core import ActionCandidate, FeatureVector, JoinedExample, RewardSpec, scalar_reward

RULE_KINDS = ("require_only", "forbid", "allow_only_sources")

_OPS = {
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
}


def _eval_condition(cond: Mapping, features: FeatureVector,
                    action: Optional[ActionCandidate] = None) -> bool:
    """Evaluate one condition object; missing features compare false.

    Predicates are total: any well-formed condition evaluates on any input.
    """
    if "tag" in cond:
        return cond["tag"] in features.tags
    if "not_tag" in cond:
        return cond["not_tag"] not in features.tags
    if "feature" in cond:
        value = features.features.get(cond["feature"])
        if value is None:
            return False
        return _OPS[cond["op"]](value, cond["value"])
    if action is not None:
        if "id_in" in cond:
            return action.action_id in cond["id_in"]
        if "source_in" in cond:
            return action.source in cond["source_in"]
    raise ValueError(f"malformed condition {dict(cond)!r}")


@dataclass(frozen=True)
class Rule:
    rule_id: str
    kind: str
    priority: int = 0
    # AND-list of conditions on the request context; empty list matches all.
    when: tuple[Mapping, ...] = ()
    # AND-list of conditions on each action (require_only / forbid).
    match: tuple[Mapping, ...] = ()
    sources: frozenset[str] = frozenset()

    def __post_init__(self):
        if self.kind not in RULE_KINDS:
            raise ValueError(f"unknown rule kind {self.kind!r}")
        object.__setattr__(self, "when", tuple(dict(c) for c in self.when))
        object.__setattr__(self, "match", tuple(dict(c) for c in self.match))
        object.__setattr__(self, "sources", frozenset(self.sources))

    def applies(self, context: FeatureVector) -> bool:
        return all(_eval_condition(c, context) for c in self.when)

    def action_matches(self, action: ActionCandidate) -> bool:
        return all(_eval_condition(c, action.features, action) for c in self.match)

    def to_obj(self) -> dict:
        obj = {"rule_id": self.rule_id, "kind": self.kind, "priority": self.priority}
        if self.when:
            obj["when"] = [dict(c) for c in self.when]
        if self.match:
            obj["match"] = [dict(c) for c in self.match]
        if self.sources:
            obj["sources"] = sorted(self.sources)
        return obj

    @classmethod
    def from_obj(cls, obj: Mapping) -> "Rule":
        return cls(
            rule_id=obj["rule_id"],
            kind=obj["kind"],
            priority=int(obj.get("priority", 0)),
            when=tuple(obj.get("when", ())),
            match=tuple(obj.get("match", ())),
            sources=frozenset(obj.get("sources", ())),
        )


@dataclass(frozen=True)
class RuleSetVersion:
    """An immutable, content-hashed set of rules."""

    version: str
    rules: tuple[Rule, ...]

    def __post_init__(self):
        ordered = tuple(sorted(self.rules, key=lambda r: (r.priority, r.rule_id)))
        ids = [r.rule_id for r in ordered]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate rule_id within a version")
        object.__setattr__(self, "rules", ordered)

    def canonical_bytes(self) -> bytes:
        obj = {"version": self.version, "rules": [r.to_obj() for r in self.rules]}
        return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()

    @property
    def content_hash(self) -> str:
        return hashlib.sha256(self.canonical_bytes()).hexdigest()

    @classmethod
    def from_bytes(cls, data: bytes) -> "RuleSetVersion":
        obj = json.loads(data)
        return cls(version=obj["version"],
                   rules=tuple(Rule.from_obj(r) for r in obj["rules"]))


class NoLegalActionError(ValueError):
    """Raised when the rules leave no legal action for a request."""


def compute_legal(ruleset: RuleSetVersion, context: FeatureVector,
                  potential: Sequence[ActionCandidate]) -> frozenset[str]:
    """Legal ids under the rules; may be empty (callers decide how to react).

    A matching require_only rule resets the legal set from the full potential
    set and short-circuits everything after it, so its outcome cannot be
    narrowed by other rules.
    """
    if not potential:
        raise ValueError("potential action set empty")
    current = list(potential)
    for rule in ruleset.rules:
        if not rule.applies(context):
            continue
        if rule.kind == "require_only":
            current = [a for a in potential if rule.action_matches(a)]
            break
        if rule.kind == "forbid":
            current = [a for a in current if not rule.action_matches(a)]
        elif rule.kind == "allow_only_sources":
            current = [a for a in current if a.source in rule.sources]
    return frozenset(a.action_id for a in current)


def apply_rules(ruleset: RuleSetVersion, context: FeatureVector,
                potential: Sequence[ActionCandidate]) -> frozenset[str]:
    """Legal ids under the rules; empty legal sets are an error here."""
    legal = compute_legal(ruleset, context, potential)
    if not legal:
        raise NoLegalActionError(f"no legal action under rules {ruleset.version!r}")
    return legal


class RuleFactory:
    """Registry able to produce any published rule-set version.

    Versions are stored as ``<dir>/<version>.rules`` with a content-hash
    line in ``<dir>/manifest``; published versions are immutable.
    """

    def __init__(self, directory: str):
        self.directory = directory
        self._lock = threading.Lock()
        self._cache: dict[str, RuleSetVersion] = {}

    def _manifest_path(self) -> str:
        return os.path.join(self.directory, "manifest")

    def _rules_path(self, version: str) -> str:
        return os.path.join(self.directory, f"{version}.rules")

    def manifest(self) -> dict[str, str]:
        path = self._manifest_path()
        if not os.path.exists(path):
            return {}
        out = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    version, digest = line.split(" ", 1)
                    out[version] = digest
        return out

    def publish(self, ruleset: RuleSetVersion) -> str:
        """Write a version and record its hash; republishing must be identical."""
        with self._lock:
            os.makedirs(self.directory, exist_ok=True)
            manifest = self.manifest()
            digest = ruleset.content_hash
            if ruleset.version in manifest:
                if manifest[ruleset.version] != digest:
                    raise ValueError(
                        f"version {ruleset.version!r} already published with different content"
                    )
                return digest
            with open(self._rules_path(ruleset.version), "wb") as fh:
                fh.write(ruleset.canonical_bytes())
            with open(self._manifest_path(), "a", encoding="utf-8") as fh:
                fh.write(f"{ruleset.version} {digest}\n")
            self._cache[ruleset.version] = ruleset
            return digest

    def build(self, version: str) -> RuleSetVersion:
        """Reproduce an exact historical version, verifying its content hash."""
        with self._lock:
            cached = self._cache.get(version)
            if cached is not None:
                return cached
        manifest = self.manifest()
        if version not in manifest:
            raise KeyError(f"unknown rules version {version!r}")
        with open(self._rules_path(version), "rb") as fh:
            data = fh.read()
        ruleset = RuleSetVersion.from_bytes(data)
        if ruleset.version != version:
            raise ValueError(f"file for {version!r} declares version {ruleset.version!r}")
        if ruleset.content_hash != manifest[version]:
            raise ValueError(f"content hash mismatch for rules version {version!r}")
        with self._lock:
            self._cache[version] = ruleset
        return ruleset

    def versions(self) -> list[str]:
        return sorted(self.manifest())


def build_version(factory: RuleFactory, version: str) -> RuleSetVersion:
    return factory.build(version)


@dataclass
class RecordDelta:
    event_id: str
    shrunk_ids: frozenset[str]
    expanded_ids: frozenset[str]
    # Probabilities the policy would assign to each newly-legal action.
    new_action_probs: dict[str, float] = field(default_factory=dict)


@dataclass
class RuleChangeReport:
    old_version: str
    new_version: str
    n_records: int
    n_shrunk_records: int
    n_expanded_records: int
    deltas: list[RecordDelta]
    # Present only for pure shrinkage: IPS of the policy renormalized over
    # the new legal sets. Expansions void formal counterfactual evaluation.
    counterfactual_estimate: Optional[float]
    baseline_estimate: Optional[float]

    def to_obj(self) -> dict:
        return {
            "old_version": self.old_version,
            "new_version": self.new_version,
            "n_records": self.n_records,
            "n_shrunk_records": self.n_shrunk_records,
            "n_expanded_records": self.n_expanded_records,
            "counterfactual_estimate": self.counterfactual_estimate,
            "baseline_estimate": self.baseline_estimate,
            "deltas": [
                {
                    "event_id": d.event_id,
                    "shrunk_ids": sorted(d.shrunk_ids),
                    "expanded_ids": sorted(d.expanded_ids),
                    "new_action_probs": d.new_action_probs,
                }
                for d in self.deltas
            ],
        }


def analyze_rule_change(examples: Iterable[JoinedExample], old: RuleSetVersion,
                        new: RuleSetVersion, policy, reward_spec: RewardSpec,
                        temperature: Optional[float] = None) -> RuleChangeReport:
    """Estimate the offline impact of replacing ``old`` rules with ``new``.

    Pure shrinkage keeps the logged supports valid, so an IPS estimate of the
    policy renormalized over the new legal sets is reported. Any expansion
    makes formal counterfactual evaluation impossible; the report instead
    lists affected records with the probability the policy would give each
    newly-legal action.
    """
    from banditd.policy import policy_probs

    examples = list(examples)
    deltas: list[RecordDelta] = []
    n_shrunk = 0
    n_expanded = 0
    weighted = []
    baseline = []
    any_expansion = False

    for ex in examples:
        record = ex.decision
        potential = record.action_sets.potential
        if not potential:
            raise ValueError(f"record {record.event_id} lacks the potential action set")
        legal_old = compute_legal(old, record.context, potential)
        legal_new = compute_legal(new, record.context, potential)
        shrunk = legal_old - legal_new
        expanded = legal_new - legal_old
        reward = scalar_reward(ex, reward_spec)
        reward = 0.0 if reward is None else reward

        delta = RecordDelta(record.event_id, shrunk, expanded)
        if expanded:
            any_expansion = True
            n_expanded += 1
            new_legal_actions = [a for a in potential if a.action_id in legal_new]
            probs = policy_probs(policy, record.context, new_legal_actions, temperature)
            delta.new_action_probs = {aid: probs[aid] for aid in sorted(expanded)}
        if shrunk:
            n_shrunk += 1
        if shrunk or expanded:
            deltas.append(delta)

        if not any_expansion:
            new_legal_actions = [a for a in potential if a.action_id in legal_new]
            if new_legal_actions:
                probs = policy_probs(policy, record.context, new_legal_actions, temperature)
            else:
                probs = {}
            target_prob = probs.get(record.chosen_id, 0.0)
            weighted.append(target_prob / record.chosen_prob * reward)
            old_legal_actions = [a for a in potential if a.action_id in legal_old]
            base_probs = policy_probs(policy, record.context, old_legal_actions, temperature)
            baseline.append(base_probs.get(record.chosen_id, 0.0) / record.chosen_prob * reward)

    estimate = None
    baseline_estimate = None
    if not any_expansion and examples:
        estimate = sum(weighted) / len(weighted)
        baseline_estimate = sum(baseline) / len(baseline)
    return RuleChangeReport(
        old_version=old.version,
        new_version=new.version,
        n_records=len(examples),
        n_shrunk_records=n_shrunk,
        n_expanded_records=n_expanded,
        deltas=deltas,
        counterfactual_estimate=estimate,
        baseline_estimate=baseline_estimate,
    )
