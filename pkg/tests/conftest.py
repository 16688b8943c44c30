import numpy as np
import pytest

from banditd.core import (
    ActionCandidate,
    ActionSets,
    DecisionRecord,
    ExplorationDistribution,
    FeatureVector,
    JoinedExample,
)


def make_candidates(n=3, prefix="a", source="dialog"):
    return tuple(
        ActionCandidate(
            action_id=f"{prefix}{i}",
            features=FeatureVector(features={"quality": 0.1 * (i + 1)}),
            retrieval_score=float(n - i),
            source=source,
        )
        for i in range(n)
    )


def make_record(event_id="e" * 32, probs=None, chosen=None, ts=1000,
                context=None, candidates=None, arm="none",
                seed_material="u1\x1fq1", policy_version="pol-test",
                rules_version="rules-v1", strategy="softmax"):
    candidates = candidates if candidates is not None else make_candidates()
    if probs is None:
        k = len(candidates)
        probs = {c.action_id: 1.0 / k for c in candidates}
    chosen = chosen or sorted(probs)[0]
    return DecisionRecord(
        event_id=event_id,
        timestamp_ms=ts,
        context=context if context is not None else FeatureVector(
            features={"severity": 0.4}, tags=frozenset({"seg:0"})),
        action_sets=ActionSets(potential=candidates, legal_ids=frozenset(probs)),
        chosen_id=chosen,
        chosen_prob=probs[chosen],
        distribution=ExplorationDistribution(probs=probs, strategy=strategy),
        policy_version=policy_version,
        rules_version=rules_version,
        arm=arm,
        seed_material=seed_material,
    )


def make_example(rewards=None, imputed=None, **kwargs):
    return JoinedExample(decision=make_record(**kwargs),
                         rewards=rewards or {}, imputed_resolution=imputed)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
