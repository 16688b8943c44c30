"""Exploration distributions, deterministic seeding, and probability capping.

Every operation here is a pure function, so results are reproducible across
processes and safe for unlimited concurrent use. Sampling uses a counter-based
generator (splitmix64) seeded from the user id and query, which keeps repeat
queries stable for a user while the policy version is unchanged.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from banditd._kernels import fnv1a64, uniform01
from banditd.core import ExplorationDistribution

STRATEGIES = ("epsilon_greedy", "rank_weight", "softmax")

SEED_SEPARATOR = "\x1f"


@dataclass(frozen=True)
class RankWeights:
    """Non-increasing per-rank sampling weights with a flat tail.

    ``flat_from`` is the 1-based rank at which the weights go flat; the last
    configured weight extends to any number of actions.
    """

    u: tuple[float, ...] = (8.0, 4.0, 2.0, 1.0)
    flat_from: int = 4

    def __post_init__(self):
        object.__setattr__(self, "u", tuple(float(x) for x in self.u))
        if not self.u or self.u[0] <= 0.0:
            raise ValueError("first rank weight must be positive")
        for a, b in zip(self.u, self.u[1:]):
            if b > a:
                raise ValueError("rank weights must be non-increasing")
        if any(x < 0.0 for x in self.u):
            raise ValueError("rank weights must be non-negative")
        if not 1 <= self.flat_from <= len(self.u):
            raise ValueError("flat_from out of range")
        tail = self.u[self.flat_from - 1]
        if any(x != tail for x in self.u[self.flat_from - 1:]):
            raise ValueError("weights beyond flat_from must be constant")

    def weight(self, rank: int) -> float:
        """Weight for a 0-based rank; the flat tail extends indefinitely."""
        return self.u[rank] if rank < len(self.u) else self.u[-1]


@dataclass(frozen=True)
class ExplorationConfig:
    strategy: str = "softmax"
    epsilon: float = 0.1
    temperature: float = 1.0
    rank_weights: RankWeights = field(default_factory=RankWeights)
    new_action_cap: float = 0.05

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must be in [0,1]")
        if not self.temperature > 0.0:
            raise ValueError("temperature must be positive")
        if not 0.0 < self.new_action_cap < 1.0:
            raise ValueError("new_action_cap must be in (0,1)")


def _check_scores(scores: Mapping[str, float]) -> None:
    if not scores:
        raise ValueError("empty action set")
    for aid, s in scores.items():
        if not math.isfinite(s):
            raise ValueError(f"non-finite score for {aid!r}")


def greedy_action(scores: Mapping[str, float]) -> str:
    """Argmax action id; ties broken by lexicographic id for replayability."""
    _check_scores(scores)
    return min(scores, key=lambda aid: (-scores[aid], aid))


def epsilon_greedy(scores: Mapping[str, float], epsilon: float) -> ExplorationDistribution:
    """Greedy action gets 1-eps+eps/K, every other action eps/K."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must be in [0,1]")
    best = greedy_action(scores)
    k = len(scores)
    base = epsilon / k
    probs = {aid: (1.0 - epsilon + base if aid == best else base) for aid in sorted(scores)}
    return ExplorationDistribution(probs=probs, strategy="epsilon_greedy")


def rank_weight_distribution(ordered_ids: Sequence[str],
                             weights: RankWeights) -> ExplorationDistribution:
    """Normalize per-rank weights over the available actions.

    The first position must carry the incumbent policy's choice; ranked
    probabilities are weight(rank) / sum of weights over available ranks.
    """
    if not ordered_ids:
        raise ValueError("empty action set")
    if len(set(ordered_ids)) != len(ordered_ids):
        raise ValueError("duplicate action ids")
    applicable = [weights.weight(k) for k in range(len(ordered_ids))]
    total = sum(applicable)
    if total <= 0.0:
        raise ValueError("all applicable rank weights are zero")
    probs = {aid: applicable[k] / total for k, aid in enumerate(ordered_ids)}
    return ExplorationDistribution(probs=probs, strategy="rank_weight")


def softmax_probs(scores: Mapping[str, float], temperature: float) -> dict[str, float]:
    """Boltzmann probabilities with max-subtraction, iterated in sorted id order.

    Shared by exploration and by policy evaluation so that recomputed
    probabilities match logged ones bit for bit.
    """
    _check_scores(scores)
    if not temperature > 0.0:
        raise ValueError("temperature must be positive")
    ids = sorted(scores)
    peak = max(scores[aid] for aid in ids)
    exps = [math.exp((scores[aid] - peak) / temperature) for aid in ids]
    total = sum(exps)
    return {aid: e / total for aid, e in zip(ids, exps)}


def softmax_distribution(scores: Mapping[str, float],
                         temperature: float) -> ExplorationDistribution:
    return ExplorationDistribution(
        probs=softmax_probs(scores, temperature), strategy="softmax"
    )


def cap_new_actions(dist: ExplorationDistribution, newly_legal: frozenset[str] | set[str],
                    p_max: float) -> ExplorationDistribution:
    """Cap newly-legalized actions at p_max, rescaling the rest proportionally.

    Keeps relative ratios of non-capped actions intact so the underlying
    policy's preferences survive the safety cap.
    """
    if not 0.0 < p_max < 1.0:
        raise ValueError("p_max must be in (0,1)")
    newly_legal = set(newly_legal)
    unknown = newly_legal - set(dist.probs)
    if unknown:
        raise ValueError(f"newly legal ids outside distribution support: {sorted(unknown)}")
    if not newly_legal:
        return dist

    capped = {aid for aid in newly_legal if dist.probs[aid] > p_max}
    if not capped:
        return dist
    capped_mass = sum(min(dist.probs[aid], p_max) for aid in newly_legal)
    if capped_mass >= 1.0:
        raise ValueError("capped probabilities already exhaust the distribution")
    rest_mass = sum(p for aid, p in dist.probs.items() if aid not in newly_legal)
    if rest_mass <= 0.0:
        raise ValueError("no remaining actions can absorb the capped mass")

    scale = (1.0 - capped_mass) / rest_mass
    probs = {}
    for aid in sorted(dist.probs):
        p = dist.probs[aid]
        probs[aid] = min(p, p_max) if aid in newly_legal else p * scale
    return ExplorationDistribution(
        probs=probs, strategy=dist.strategy,
        capped_ids=dist.capped_ids | frozenset(capped),
    )


def seed_material(user_id: str, query: str) -> str:
    return user_id + SEED_SEPARATOR + query


def seed_from(user_id: str, query: str) -> int:
    """64-bit sampling seed from the user id and query.

    The separator byte prevents concatenation collisions; empty components
    are allowed here and flagged downstream by the randomization diagnostic.
    """
    return fnv1a64(user_id.encode() + b"\x1f" + query.encode())


def sample(dist: ExplorationDistribution, seed: int) -> tuple[str, float]:
    """Inverse-CDF draw over actions in sorted id order; pure in (dist, seed)."""
    ids = sorted(dist.probs)
    if not ids:
        raise ValueError("empty distribution")
    u = uniform01(seed, 0)
    acc = 0.0
    chosen = None
    for aid in ids:
        p = dist.probs[aid]
        if p <= 0.0:
            continue
        acc += p
        chosen = aid
        if u < acc:
            break
    if chosen is None:
        raise ValueError("distribution has no positive-probability action")
    return chosen, dist.probs[chosen]


def rank_ordering(candidates, incumbent_id: str) -> list[str]:
    """Heuristic ordering feeding the rank weights.

    Incumbent first, then descending retrieval score, ties by lexicographic
    id; actions without a score rank below scored ones.
    """
    rest = [c for c in candidates if c.action_id != incumbent_id]
    rest.sort(key=lambda c: (
        -(c.retrieval_score if c.retrieval_score is not None else -math.inf),
        c.action_id,
    ))
    return [incumbent_id] + [c.action_id for c in rest]
