"""The dedicated bandit logging channel and the decision/reward joiner.

Wire format: one JSON object per line with a leading schema-version field.
This channel is deliberately separate from diagnostic logs; training and
counterfactual evaluation depend on its exact contents, so the schema is
versioned and readers reject versions they do not understand.

Decision lines:
    v, kind, event_id, ts, context, a_p, a_l, chosen, p, dist, strategy,
    capped, policy_v, rules_v, arm, seed_material
Reward lines:
    v, kind, event_id, ts, signal, value
"""
from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Sequence, Union

from banditd.core import (
    ActionCandidate,
    ActionSets,
    DecisionRecord,
    ExplorationDistribution,
    FeatureVector,
    JoinedExample,
    RewardEvent,
    validate_record,
)

SCHEMA_VERSION = 1

DEFAULT_JOIN_WINDOW_MS = 86_400_000


def canonical_json(obj) -> str:
    """Sorted-key compact JSON; the byte-deterministic encoding used
    everywhere a file or response must be reproducible."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


# ---------------------------------------------------------------------------
# Encoding


def _fv_obj(fv: FeatureVector) -> dict:
    return {"f": {k: fv.features[k] for k in sorted(fv.features)},
            "tags": sorted(fv.tags)}


def _fv_from(obj: dict) -> FeatureVector:
    return FeatureVector(features=obj.get("f", {}), tags=frozenset(obj.get("tags", ())))


def _candidate_obj(c: ActionCandidate) -> dict:
    obj = {"id": c.action_id, "f": {k: c.features.features[k] for k in sorted(c.features.features)},
           "tags": sorted(c.features.tags), "source": c.source}
    if c.retrieval_score is not None:
        obj["score"] = c.retrieval_score
    return obj


def _candidate_from(obj: dict) -> ActionCandidate:
    return ActionCandidate(
        action_id=obj["id"],
        features=FeatureVector(features=obj.get("f", {}), tags=frozenset(obj.get("tags", ()))),
        retrieval_score=obj.get("score"),
        source=obj.get("source", ""),
    )


def encode_decision(record: DecisionRecord) -> str:
    return canonical_json({
        "v": SCHEMA_VERSION,
        "kind": "decision",
        "event_id": record.event_id,
        "ts": record.timestamp_ms,
        "context": _fv_obj(record.context),
        "a_p": [_candidate_obj(c) for c in record.action_sets.potential],
        "a_l": sorted(record.action_sets.legal_ids),
        "chosen": record.chosen_id,
        "p": record.chosen_prob,
        "dist": {k: record.distribution.probs[k] for k in sorted(record.distribution.probs)},
        "strategy": record.distribution.strategy,
        "capped": sorted(record.distribution.capped_ids),
        "policy_v": record.policy_version,
        "rules_v": record.rules_version,
        "arm": record.arm,
        "seed_material": record.seed_material,
    })


def encode_reward(event: RewardEvent) -> str:
    return canonical_json({
        "v": SCHEMA_VERSION,
        "kind": "reward",
        "event_id": event.event_id,
        "ts": event.timestamp_ms,
        "signal": event.signal,
        "value": event.value,
    })


def encode_joined(example: JoinedExample) -> str:
    obj = {
        "v": SCHEMA_VERSION,
        "kind": "joined",
        "decision": json.loads(encode_decision(example.decision)),
        "rewards": {k: example.rewards[k] for k in sorted(example.rewards)},
    }
    if example.imputed_resolution is not None:
        obj["imputed_resolution"] = example.imputed_resolution
    return canonical_json(obj)


def decode_line(line: str) -> Union[DecisionRecord, RewardEvent, JoinedExample]:
    """Parse one wire line; raises ValueError on anything unusable."""
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ValueError(f"unparseable line: {exc}") from exc
    if not isinstance(obj, dict):
        raise ValueError("line is not an object")
    if obj.get("v") != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema version {obj.get('v')!r}")
    kind = obj.get("kind")
    if kind == "decision":
        return _decode_decision(obj)
    if kind == "reward":
        event = RewardEvent(event_id=obj["event_id"], signal=obj["signal"],
                            value=float(obj["value"]), timestamp_ms=int(obj["ts"]))
        problems = event.violations()
        if problems:
            raise ValueError("; ".join(problems))
        return event
    if kind == "joined":
        return JoinedExample(
            decision=_decode_decision(obj["decision"]),
            rewards={k: float(v) for k, v in obj.get("rewards", {}).items()},
            imputed_resolution=obj.get("imputed_resolution"),
        )
    raise ValueError(f"unknown record kind {kind!r}")


def _decode_decision(obj: dict) -> DecisionRecord:
    try:
        record = DecisionRecord(
            event_id=obj["event_id"],
            timestamp_ms=int(obj["ts"]),
            context=_fv_from(obj["context"]),
            action_sets=ActionSets(
                potential=tuple(_candidate_from(c) for c in obj["a_p"]),
                legal_ids=frozenset(obj["a_l"]),
            ),
            chosen_id=obj["chosen"],
            chosen_prob=float(obj["p"]),
            distribution=ExplorationDistribution(
                probs={k: float(v) for k, v in obj["dist"].items()},
                strategy=obj["strategy"],
                capped_ids=frozenset(obj.get("capped", ())),
            ),
            policy_version=obj["policy_v"],
            rules_version=obj["rules_v"],
            arm=obj.get("arm", "none"),
            seed_material=obj.get("seed_material", ""),
        )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed decision line: {exc}") from exc
    problems = validate_record(record)
    if problems:
        raise ValueError("; ".join(problems))
    return record


# ---------------------------------------------------------------------------
# Segments


@dataclass(frozen=True)
class JoinWindow:
    duration_ms: int = DEFAULT_JOIN_WINDOW_MS

    def __post_init__(self):
        if self.duration_ms <= 0:
            raise ValueError("join window must be positive")


class SegmentWriter:
    """Single-writer append-only segment holding one record kind.

    Appends are serialized by an internal lock; each ack carries the byte
    offset at which the line starts. ``durable=True`` fsyncs per append,
    which the service uses; batch simulation turns it off and flushes at
    segment close.
    """

    def __init__(self, path: str, kind: str, durable: bool = True):
        if kind not in ("decision", "reward"):
            raise ValueError(f"segment kind must be decision or reward, got {kind!r}")
        self.path = path
        self.kind = kind
        self.durable = durable
        self._lock = threading.Lock()
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        self._fh = open(path, "ab")

    def append_decision(self, record: DecisionRecord) -> int:
        if self.kind != "decision":
            raise ValueError("not a decision segment")
        problems = validate_record(record)
        if problems:
            raise ValueError("invalid record: " + "; ".join(problems))
        return self._append(encode_decision(record))

    def append_reward(self, event: RewardEvent) -> int:
        if self.kind != "reward":
            raise ValueError("not a reward segment")
        problems = event.violations()
        if problems:
            raise ValueError("invalid reward event: " + "; ".join(problems))
        return self._append(encode_reward(event))

    def _append(self, line: str) -> int:
        data = line.encode() + b"\n"
        with self._lock:
            offset = self._fh.tell()
            self._fh.write(data)
            self._fh.flush()
            if self.durable:
                os.fsync(self._fh.fileno())
            return offset

    def close(self) -> None:
        with self._lock:
            if not self._fh.closed:
                self._fh.flush()
                os.fsync(self._fh.fileno())
                self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def append_decision(segment: SegmentWriter, record: DecisionRecord) -> int:
    return segment.append_decision(record)


def append_reward(segment: SegmentWriter, event: RewardEvent) -> int:
    return segment.append_reward(event)


def read_lines(path: str) -> Iterator[tuple[int, str]]:
    """(line number, text) pairs; a trailing unterminated fragment is a
    write in progress and is skipped."""
    with open(path, "rb") as fh:
        data = fh.read()
    lines = data.split(b"\n")
    if lines and lines[-1] != b"":
        lines = lines[:-1]  # partial trailing line
    elif lines:
        lines = lines[:-1]
    for i, raw in enumerate(lines, start=1):
        yield i, raw.decode("utf-8", errors="replace")


@dataclass
class JoinResult:
    examples: list[JoinedExample]
    n_decisions: int
    n_rewards: int
    n_unmatched_rewards: int
    n_quarantined: int
    quarantine_paths: list[str]

    def to_obj(self) -> dict:
        return {
            "n_examples": len(self.examples),
            "n_decisions": self.n_decisions,
            "n_rewards": self.n_rewards,
            "n_unmatched_rewards": self.n_unmatched_rewards,
            "n_quarantined": self.n_quarantined,
            "quarantine_paths": list(self.quarantine_paths),
        }


def _read_segment(path: str, expect_kinds: tuple[str, ...], quarantine: bool):
    """Yields parsed records; bad lines go to a ``.bad`` sidecar."""
    good = []
    bad_path = path + ".bad"
    bad_lines = []
    for line_no, text in read_lines(path):
        try:
            record = decode_line(text)
        except ValueError as exc:
            bad_lines.append((line_no, text, str(exc)))
            continue
        kind = "decision" if isinstance(record, DecisionRecord) else (
            "reward" if isinstance(record, RewardEvent) else "joined")
        if kind not in expect_kinds:
            bad_lines.append((line_no, text, f"unexpected record kind {kind!r}"))
            continue
        good.append(record)
    if bad_lines and quarantine:
        with open(bad_path, "w", encoding="utf-8") as fh:
            for line_no, text, reason in bad_lines:
                fh.write(canonical_json({"line": line_no, "reason": reason, "text": text}) + "\n")
    return good, len(bad_lines), (bad_path if bad_lines and quarantine else None)


def join(decision_paths: Sequence[str], reward_paths: Sequence[str],
         window: Optional[JoinWindow] = None, quarantine: bool = True) -> JoinResult:
    """Attach reward events to decisions by event id within the window.

    A reward joins when it shares the decision's event_id and arrives at or
    after the decision but no later than the window (skewed earlier-than-
    decision rewards are dropped). The first event per signal by timestamp
    wins. Output order is (timestamp, event_id), so the result is identical
    regardless of how lines were spread across segment files.
    """
    window = window or JoinWindow()
    decisions: list[DecisionRecord] = []
    rewards: list[RewardEvent] = []
    n_quarantined = 0
    quarantine_paths = []
    for path in decision_paths:
        good, n_bad, bad_path = _read_segment(path, ("decision",), quarantine)
        decisions.extend(good)
        n_quarantined += n_bad
        if bad_path:
            quarantine_paths.append(bad_path)
    for path in reward_paths:
        good, n_bad, bad_path = _read_segment(path, ("reward",), quarantine)
        rewards.extend(good)
        n_quarantined += n_bad
        if bad_path:
            quarantine_paths.append(bad_path)

    decisions.sort(key=lambda d: (d.timestamp_ms, d.event_id))
    by_event: dict[str, list[RewardEvent]] = {}
    for event in rewards:
        by_event.setdefault(event.event_id, []).append(event)
    for events in by_event.values():
        events.sort(key=lambda e: (e.timestamp_ms, e.signal, e.value))

    matched = 0
    examples = []
    for decision in decisions:
        attached: dict[str, float] = {}
        for event in by_event.get(decision.event_id, ()):
            delta = event.timestamp_ms - decision.timestamp_ms
            if 0 <= delta <= window.duration_ms and event.signal not in attached:
                attached[event.signal] = event.value
                matched += 1
        examples.append(JoinedExample(decision=decision, rewards=attached))

    return JoinResult(
        examples=examples,
        n_decisions=len(decisions),
        n_rewards=len(rewards),
        n_unmatched_rewards=len(rewards) - matched,
        n_quarantined=n_quarantined,
        quarantine_paths=quarantine_paths,
    )


def write_joined(examples: Iterable[JoinedExample], path: str) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(encode_joined(ex) + "\n")
            n += 1
    return n


def read_joined(path: str) -> list[JoinedExample]:
    out = []
    for _, text in read_lines(path):
        record = decode_line(text)
        if not isinstance(record, JoinedExample):
            raise ValueError(f"{path}: expected joined examples")
        out.append(record)
    return out


def segment_name(kind: str, ts_ms: int) -> str:
    """decisions-YYYYMMDD-HH.log / rewards-YYYYMMDD-HH.log naming."""
    import datetime

    dt = datetime.datetime.fromtimestamp(ts_ms / 1000.0, tz=datetime.timezone.utc)
    prefix = {"decision": "decisions", "reward": "rewards"}[kind]
    return f"{prefix}-{dt:%Y%m%d-%H}.log"
