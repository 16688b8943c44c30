"""Counterfactual policy evaluation.

Importance-weighted estimators over joined logs, the effective-sample-size
diagnostic, percentile-bootstrap confidence intervals, and a chi-square
randomization health check that catches broken sampling seeds.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple, Optional, Sequence, Union

import numpy as np
from scipy import stats

from banditd._kernels import splitmix64
from banditd.core import DecisionRecord, JoinedExample, RewardSpec, scalar_reward
from banditd.exploration import SEED_SEPARATOR
from banditd.policy import Scorer, policy_probs


class WeightedSample(NamedTuple):
    w: float
    r: float


class WeightedSamples:
    """A batch of (importance weight, reward) pairs backed by arrays."""

    def __init__(self, w, r):
        self.w = np.asarray(w, dtype=np.float64)
        self.r = np.asarray(r, dtype=np.float64)
        if self.w.shape != self.r.shape:
            raise ValueError("weight and reward arrays differ in length")
        if np.any(self.w < 0.0) or not np.all(np.isfinite(self.w)):
            raise ValueError("weights must be finite and non-negative")

    def __len__(self) -> int:
        return int(self.w.shape[0])

    def __iter__(self):
        for w, r in zip(self.w, self.r):
            yield WeightedSample(float(w), float(r))


SampleLike = Union[WeightedSamples, Sequence[WeightedSample]]


def _as_arrays(samples: SampleLike) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(samples, WeightedSamples):
        return samples.w, samples.r
    ws = list(samples)
    return (np.array([s.w for s in ws], dtype=np.float64),
            np.array([s.r for s in ws], dtype=np.float64))


class LoggedTarget:
    """Pseudo-policy that replays each record's logged distribution.

    Evaluating it is the on-policy identity: every weight is exactly 1.
    """

    version = "logging"


def target_probs(target, record: DecisionRecord,
                 temperature: Optional[float] = None) -> dict[str, float]:
    if isinstance(target, LoggedTarget):
        return dict(record.distribution.probs)
    return policy_probs(target, record.context,
                        record.action_sets.legal_actions(), temperature)


def importance_weights(examples: Iterable[JoinedExample],
                       target: Union[Scorer, LoggedTarget],
                       reward_spec: RewardSpec,
                       temperature: Optional[float] = None) -> WeightedSamples:
    """w_i = target probability of the logged action / logged probability."""
    w = []
    r = []
    for ex in examples:
        record = ex.decision
        if not record.chosen_prob > 0.0:
            raise ValueError(f"record {record.event_id} logged a zero probability")
        probs = target_probs(target, record, temperature)
        reward = scalar_reward(ex, reward_spec)
        if reward is None:
            continue
        w.append(probs.get(record.chosen_id, 0.0) / record.chosen_prob)
        r.append(reward)
    return WeightedSamples(w, r)


def effective_sample_size(weights) -> float:
    """(sum w)^2 / sum w^2: how many full-information examples the
    off-policy data is worth. Scale-invariant in the weights."""
    w = weights.w if isinstance(weights, WeightedSamples) else np.asarray(weights, dtype=np.float64)
    if w.size == 0:
        raise ValueError("no weights")
    if np.any(w < 0.0):
        raise ValueError("weights must be non-negative")
    sq = float(np.dot(w, w))
    if sq == 0.0:
        raise ValueError("no overlap: all importance weights are zero")
    total = float(w.sum())
    return total * total / sq


def ips(samples: SampleLike) -> float:
    w, r = _as_arrays(samples)
    if w.size == 0:
        raise ValueError("no samples")
    return float(np.mean(w * r))


def capped_ips(samples: SampleLike, cap: float) -> float:
    if not cap > 0.0:
        raise ValueError("cap must be positive")
    w, r = _as_arrays(samples)
    if w.size == 0:
        raise ValueError("no samples")
    return float(np.mean(np.minimum(w, cap) * r))


def snips(samples: SampleLike) -> float:
    w, r = _as_arrays(samples)
    total = float(np.sum(w))
    if total <= 0.0:
        raise ValueError("no overlap: total importance weight is zero")
    # np.sum keeps the same pairwise reduction as np.mean, so the on-policy
    # identity (all weights exactly 1) holds bitwise against ips().
    return float(np.sum(w * r) / total)


def bootstrap_ci(samples: SampleLike, estimator: Callable[[WeightedSamples], float],
                 level: float = 0.90, n_replicates: int = 1000,
                 seed: int = 0) -> tuple[float, float]:
    """Percentile bootstrap interval, deterministic given the seed.

    Replicate b draws its indices from a generator keyed by (seed, b)
    through the counter-based mixer, so replicates could be computed in
    parallel (in any order) without changing the result.
    """
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0,1)")
    if n_replicates < 100:
        raise ValueError("need at least 100 bootstrap replicates")
    w, r = _as_arrays(samples)
    n = w.size
    if n < 2:
        raise ValueError("need at least 2 samples")
    estimates = np.empty(n_replicates)
    for b in range(n_replicates):
        rng = np.random.default_rng(splitmix64(seed, b))
        idx = rng.integers(0, n, n)
        estimates[b] = estimator(WeightedSamples(w[idx], r[idx]))
    alpha = (1.0 - level) / 2.0
    low, high = np.quantile(estimates, [alpha, 1.0 - alpha], method="linear")
    return float(low), float(high)


def _chosen_rank(record: DecisionRecord, max_rank: int) -> int:
    """0-based probability rank of the chosen action, pooled at max_rank-1."""
    ranked = sorted(record.distribution.probs.items(), key=lambda kv: (-kv[1], kv[0]))
    for pos, (aid, _) in enumerate(ranked):
        if aid == record.chosen_id:
            return min(pos, max_rank - 1)
    raise ValueError(f"record {record.event_id} chose an action outside its distribution")


def randomization_diagnostic(decisions: Sequence[DecisionRecord],
                             max_rank: int = 10,
                             min_records: int = 100) -> dict:
    """Chi-square test that logged picks follow the logged probabilities.

    Records are bucketed by the probability rank of the chosen action (the
    tail pooled past ``max_rank``); observed pick counts per rank are tested
    against the summed logged probability mass per rank. Also reports the
    fraction of records whose sampling seed had an empty user-id component,
    the failure mode this diagnostic exists to catch.
    """
    decisions = list(decisions)
    if len(decisions) < min_records:
        raise ValueError(f"need at least {min_records} records, got {len(decisions)}")

    observed = np.zeros(max_rank)
    expected = np.zeros(max_rank)
    degenerate = 0
    for record in decisions:
        observed[_chosen_rank(record, max_rank)] += 1.0
        ranked = sorted(record.distribution.probs.items(), key=lambda kv: (-kv[1], kv[0]))
        for pos, (_, p) in enumerate(ranked):
            expected[min(pos, max_rank - 1)] += p
        if record.seed_material.split(SEED_SEPARATOR)[0] == "":
            degenerate += 1

    # Pool adjacent rank buckets until each pooled bucket expects >= 5 picks,
    # the usual validity floor for the chi-square approximation.
    pooled_obs: list[float] = []
    pooled_exp: list[float] = []
    acc_o = acc_e = 0.0
    for o, e in zip(observed, expected):
        acc_o += o
        acc_e += e
        if acc_e >= 5.0:
            pooled_obs.append(acc_o)
            pooled_exp.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0.0:
        if pooled_exp:
            pooled_obs[-1] += acc_o
            pooled_exp[-1] += acc_e
        else:
            pooled_obs.append(acc_o)
            pooled_exp.append(acc_e)

    if len(pooled_exp) < 2:
        p_value = 1.0
        statistic = 0.0
    else:
        obs = np.asarray(pooled_obs)
        exp = np.asarray(pooled_exp)
        statistic = float(np.sum((obs - exp) ** 2 / exp))
        p_value = float(stats.chi2.sf(statistic, df=len(pooled_exp) - 1))

    return {
        "p_value": p_value,
        "statistic": statistic,
        "n_buckets": len(pooled_exp),
        "degenerate_seed_fraction": degenerate / len(decisions),
        "n": len(decisions),
    }


@dataclass
class EvalConfig:
    cap: float = 10.0
    ci_level: float = 0.90
    bootstrap_replicates: int = 1000
    seed: int = 0
    ess_floor_fraction: float = 0.01
    diagnostic_min_records: int = 100


@dataclass
class EvaluationReport:
    policy_version: str
    reward_spec: str
    n: int
    estimates: dict = field(default_factory=dict)
    ess: float = 0.0
    ci: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    baseline_delta: float = 0.0
    logging_mean_reward: float = 0.0

    def to_obj(self) -> dict:
        return {
            "policy_version": self.policy_version,
            "reward_spec": self.reward_spec,
            "n": self.n,
            "estimates": dict(self.estimates),
            "ess": self.ess,
            "ci": dict(self.ci),
            "diagnostics": dict(self.diagnostics),
            "baseline_delta": self.baseline_delta,
            "logging_mean_reward": self.logging_mean_reward,
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "EvaluationReport":
        return cls(**{k: obj[k] for k in (
            "policy_version", "reward_spec", "n", "estimates", "ess", "ci",
            "diagnostics", "baseline_delta", "logging_mean_reward")})


def evaluate(examples: Sequence[JoinedExample],
             targets: Sequence[Union[Scorer, LoggedTarget]],
             reward_specs: Sequence[RewardSpec],
             config: Optional[EvalConfig] = None) -> list[EvaluationReport]:
    """One report per (target, reward spec) pair.

    The decision estimator is capped importance sampling at config.cap; the
    plain and self-normalized estimates are always reported beside it, and
    baseline_delta positions the estimate against the logging policy's
    empirical mean reward on the same logs.
    """
    if not examples:
        raise ValueError("no examples to evaluate")
    config = config or EvalConfig()

    records = [ex.decision for ex in examples]
    try:
        diag = randomization_diagnostic(records, min_records=config.diagnostic_min_records)
    except ValueError:
        diag = {"p_value": None, "degenerate_seed_fraction": None,
                "n": len(records), "note": "too few records for the randomization test"}

    reports = []
    for spec in reward_specs:
        rewards = [scalar_reward(ex, spec) for ex in examples]
        resolved = [r for r in rewards if r is not None]
        logging_mean = float(np.mean(resolved)) if resolved else 0.0
        for target in targets:
            samples = importance_weights(examples, target, spec)
            estimate = capped_ips(samples, config.cap)
            ess = effective_sample_size(samples)
            low, high = bootstrap_ci(
                samples, lambda s: capped_ips(s, config.cap),
                level=config.ci_level, n_replicates=config.bootstrap_replicates,
                seed=config.seed)
            n = len(samples)
            report = EvaluationReport(
                policy_version=getattr(target, "version", "unknown"),
                reward_spec=spec.name,
                n=n,
                estimates={
                    "ips": ips(samples),
                    "capped_ips": estimate,
                    "snips": snips(samples) if samples.w.sum() > 0 else None,
                    "cap": config.cap,
                },
                ess=ess,
                ci={"low": low, "high": high, "level": config.ci_level,
                    "estimator": "capped_ips"},
                diagnostics={
                    **diag,
                    "low_ess": bool(ess < config.ess_floor_fraction * n),
                    "ess_floor_fraction": config.ess_floor_fraction,
                },
                baseline_delta=estimate - logging_mean,
                logging_mean_reward=logging_mean,
            )
            reports.append(report)
    return reports
