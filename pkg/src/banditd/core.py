"""Shared domain types: contexts, actions, decisions, rewards, reward specs.

All types are immutable value objects; construction does not validate
(records can represent bad data read from disk), validation is explicit via
:func:`validate_record`.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Optional

from banditd._kernels import fnv1a64

SIGNALS = ("click", "resolution", "escalation")
ARMS = ("control", "treatment", "none")

PROB_SUM_TOL = 1e-9

# Separator byte between hashed key components; prevents concatenation
# collisions like ("u1","a") vs ("u1a","").
SEP = b"\x1f"


@dataclass(frozen=True)
class FeatureVector:
    """Named numeric features plus boolean tag flags."""

    features: Mapping[str, float] = field(default_factory=dict)
    tags: frozenset[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "features", dict(self.features))
        object.__setattr__(self, "tags", frozenset(self.tags))

    def violations(self) -> list[str]:
        out = []
        for name, value in self.features.items():
            if not name:
                out.append("feature name empty")
            if not math.isfinite(value):
                out.append(f"feature {name!r} not finite")
        for tag in self.tags:
            if not tag:
                out.append("empty tag")
        return out

    @cached_property
    def fingerprint(self) -> int:
        """Content hash used as a cache key; pure function of the value."""
        parts = []
        for name in sorted(self.features):
            parts.append(name.encode() + SEP + repr(self.features[name]).encode())
        for tag in sorted(self.tags):
            parts.append(b"#" + tag.encode())
        return fnv1a64(SEP.join(parts))


@dataclass(frozen=True)
class ActionCandidate:
    """One candidate action with its own features and retrieval provenance."""

    action_id: str
    features: FeatureVector = field(default_factory=FeatureVector)
    retrieval_score: Optional[float] = None
    source: str = ""

    def violations(self) -> list[str]:
        out = []
        if not self.action_id:
            out.append("action_id empty")
        if self.retrieval_score is not None and not math.isfinite(self.retrieval_score):
            out.append(f"retrieval_score of {self.action_id!r} not finite")
        out.extend(self.features.violations())
        return out

    @cached_property
    def fingerprint(self) -> int:
        score = b"" if self.retrieval_score is None else repr(self.retrieval_score).encode()
        return fnv1a64(
            SEP.join(
                [
                    self.action_id.encode(),
                    self.features.fingerprint.to_bytes(8, "little"),
                    score,
                    self.source.encode(),
                ]
            )
        )


@dataclass(frozen=True)
class ActionSets:
    """The retrieved candidate superset and the legal subset of its ids."""

    potential: tuple[ActionCandidate, ...]
    legal_ids: frozenset[str]

    def __post_init__(self):
        object.__setattr__(self, "potential", tuple(self.potential))
        object.__setattr__(self, "legal_ids", frozenset(self.legal_ids))

    def violations(self) -> list[str]:
        out = []
        ids = [a.action_id for a in self.potential]
        if len(set(ids)) != len(ids):
            out.append("duplicate action_id in potential set")
        if not self.legal_ids <= set(ids):
            out.append("legal_ids not a subset of potential ids")
        if not self.legal_ids:
            out.append("legal_ids empty")
        for a in self.potential:
            out.extend(a.violations())
        return out

    def legal_actions(self) -> list[ActionCandidate]:
        """Legal candidates in deterministic (lexicographic id) order."""
        return sorted(
            (a for a in self.potential if a.action_id in self.legal_ids),
            key=lambda a: a.action_id,
        )


@dataclass(frozen=True)
class ExplorationDistribution:
    """Per-action sampling probabilities with provenance."""

    probs: Mapping[str, float]
    strategy: str
    capped_ids: frozenset[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "probs", dict(self.probs))
        object.__setattr__(self, "capped_ids", frozenset(self.capped_ids))

    def violations(self, legal_ids: Optional[frozenset[str]] = None) -> list[str]:
        out = []
        total = 0.0
        for aid, p in self.probs.items():
            if not (0.0 <= p <= 1.0):
                out.append(f"probability of {aid!r} outside [0,1]")
            total += p
        if abs(total - 1.0) > PROB_SUM_TOL:
            out.append(f"probabilities sum to {total!r}, not 1")
        if legal_ids is not None:
            support = {aid for aid, p in self.probs.items() if p > 0.0}
            if not support <= legal_ids:
                out.append("distribution support outside legal set")
        return out


@dataclass(frozen=True)
class DecisionRecord:
    """One logged decision: everything needed to replay and reweight it."""

    event_id: str
    timestamp_ms: int
    context: FeatureVector
    action_sets: ActionSets
    chosen_id: str
    chosen_prob: float
    distribution: ExplorationDistribution
    policy_version: str
    rules_version: str
    arm: str = "none"
    seed_material: str = ""


@dataclass(frozen=True)
class RewardEvent:
    """A named reward signal for a previously logged decision."""

    event_id: str
    signal: str
    value: float
    timestamp_ms: int

    def violations(self) -> list[str]:
        out = []
        if not self.event_id:
            out.append("event_id empty")
        if self.signal not in SIGNALS:
            out.append(f"unknown signal {self.signal!r}")
        elif self.value not in (0.0, 1.0):
            out.append(f"{self.signal} value must be 0 or 1")
        if self.timestamp_ms < 0:
            out.append("timestamp negative")
        return out


@dataclass(frozen=True)
class JoinedExample:
    """A decision joined with the reward signals that arrived in the window."""

    decision: DecisionRecord
    rewards: Mapping[str, float] = field(default_factory=dict)
    imputed_resolution: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "rewards", dict(self.rewards))


def validate_record(record: DecisionRecord) -> list[str]:
    """Return every violated invariant (empty list means the record is ok).

    Violations are data, not failures: bad records are reported, never raised.
    """
    out: list[str] = []
    if not record.event_id:
        out.append("event_id empty")
    if record.timestamp_ms < 0:
        out.append("timestamp negative")
    out.extend(record.context.violations())
    out.extend(record.action_sets.violations())
    if record.chosen_id not in record.action_sets.legal_ids:
        out.append("chosen action illegal")
    out.extend(record.distribution.violations(record.action_sets.legal_ids))
    logged = record.distribution.probs.get(record.chosen_id)
    if logged is None or logged != record.chosen_prob:
        out.append("chosen_prob differs from distribution entry")
    if not record.chosen_prob > 0.0:
        out.append("chosen_prob > 0 violated")
    if not record.policy_version:
        out.append("policy_version empty")
    if not record.rules_version:
        out.append("rules_version empty")
    if record.arm not in ARMS:
        out.append(f"unknown arm {record.arm!r}")
    return out


@dataclass(frozen=True)
class RewardSpec:
    """A scalar reward definition over the logged signals.

    ``weights`` maps signal name to coefficient. A missing resolution value
    falls back to the example's imputed value when ``allow_imputed`` is set;
    any other missing signal contributes ``default``. ``default=None`` marks
    the example unresolvable (callers drop it), which is how observed-only
    training is expressed.
    """

    name: str
    weights: Mapping[str, float]
    allow_imputed: bool = False
    default: Optional[float] = 0.0

    def __post_init__(self):
        object.__setattr__(self, "weights", dict(self.weights))


def scalar_reward(example: JoinedExample, spec: RewardSpec) -> Optional[float]:
    """Collapse an example's reward signals into one scalar per ``spec``."""
    total = 0.0
    for signal, weight in spec.weights.items():
        if signal not in SIGNALS:
            raise ValueError(f"unknown reward signal {signal!r}")
        if not math.isfinite(weight):
            raise ValueError(f"non-finite weight for {signal!r}")
        value = example.rewards.get(signal)
        if value is None and signal == "resolution" and spec.allow_imputed:
            value = example.imputed_resolution
        if value is None:
            if spec.default is None:
                return None
            value = spec.default
        total += weight * value
    return total


_TERM_RE = re.compile(r"([+-]?)\s*(?:(\d+(?:\.\d+)?)\s*\*\s*)?([a-z_]+)")


def parse_reward_spec(text: str, allow_imputed: bool = False,
                      default: Optional[float] = 0.0) -> RewardSpec:
    """Parse expressions like ``resolution`` or ``resolution-0.5*escalation``."""
    weights: dict[str, float] = {}
    pos = 0
    cleaned = text.replace(" ", "")
    while pos < len(cleaned):
        m = _TERM_RE.match(cleaned, pos)
        if m is None:
            raise ValueError(f"cannot parse reward spec {text!r} at {cleaned[pos:]!r}")
        sign, coeff, signal = m.groups()
        weight = float(coeff) if coeff else 1.0
        if sign == "-":
            weight = -weight
        weights[signal] = weights.get(signal, 0.0) + weight
        pos = m.end()
    if not weights:
        raise ValueError(f"empty reward spec {text!r}")
    for signal in weights:
        if signal not in SIGNALS:
            raise ValueError(f"unknown reward signal {signal!r}")
    return RewardSpec(name=text, weights=weights, allow_imputed=allow_imputed,
                      default=default)


def candidates_fingerprint(candidates: Iterable[ActionCandidate]) -> int:
    """Order-sensitive content hash over a candidate list."""
    acc = b"".join(a.fingerprint.to_bytes(8, "little") for a in candidates)
    return fnv1a64(acc)
