"""Policy models, off-policy training with divergence regularization,
imitation warm-start, and reward imputation.

The model is a hashed linear scorer: (context, action) pairs map to signed
buckets of a 2^b weight vector, and action probabilities are a softmax over
scores restricted to the legal set. Training is full-batch gradient ascent
over a sparse matrix of all (example, legal action) feature rows.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Optional, Protocol, Sequence

import numpy as np
import scipy.sparse as sp

from banditd._kernels import fnv1a64, hash_terms
from banditd.core import (
    ActionCandidate,
    DecisionRecord,
    FeatureVector,
    JoinedExample,
    RewardSpec,
    scalar_reward,
)
from banditd.exploration import softmax_probs

DEFAULT_BITS = 18
DIVERGENCES = ("kl_pi_mu", "kl_mu_pi", "total_variation")

_KEY_SEP = b"\x1f"


def feature_terms(context: FeatureVector,
                  action: ActionCandidate) -> tuple[list[bytes], list[float]]:
    """Hashable (key, value) terms for one (context, action) pair.

    Terms, in deterministic order: each action feature; each cross pair of
    (context feature, action feature) with product value; each (context tag,
    action id) indicator. Pure context features are omitted because they
    shift every action's score equally.
    """
    keys: list[bytes] = []
    values: list[float] = []
    act_items = sorted(action.features.features.items())
    for name, value in act_items:
        keys.append(b"a" + _KEY_SEP + name.encode())
        values.append(value)
    for cname in sorted(context.features):
        cval = context.features[cname]
        for aname, aval in act_items:
            keys.append(b"x" + _KEY_SEP + cname.encode() + _KEY_SEP + aname.encode())
            values.append(cval * aval)
    aid = action.action_id.encode()
    for tag in sorted(context.tags):
        keys.append(b"t" + _KEY_SEP + tag.encode() + _KEY_SEP + aid)
        values.append(1.0)
    return keys, values


_PHI_CACHE: dict[tuple[int, int, int], tuple[np.ndarray, np.ndarray]] = {}
_PHI_CACHE_MAX = 1 << 16


def hashed_features(context: FeatureVector, action: ActionCandidate,
                    bits: int = DEFAULT_BITS) -> tuple[np.ndarray, np.ndarray]:
    """Signed hashed feature rows for (context, action), content-cached."""
    key = (context.fingerprint, action.fingerprint, bits)
    hit = _PHI_CACHE.get(key)
    if hit is not None:
        return hit
    keys, values = feature_terms(context, action)
    idx, val = hash_terms(keys, values, 1 << bits)
    if len(_PHI_CACHE) >= _PHI_CACHE_MAX:
        _PHI_CACHE.clear()
    _PHI_CACHE[key] = (idx, val)
    return idx, val


class Scorer(Protocol):
    """Anything servable as a policy: versioned scorer over (context, action)."""

    version: str
    rules_version: str
    temperature: float

    def score_actions(self, context: FeatureVector,
                      actions: Sequence[ActionCandidate]) -> dict[str, float]:
        ...


@dataclass
class HashedLinearPolicy:
    theta: np.ndarray
    version: str
    bits: int = DEFAULT_BITS
    temperature: float = 1.0
    rules_version: str = ""

    @classmethod
    def zeros(cls, version: str, bits: int = DEFAULT_BITS, temperature: float = 1.0,
              rules_version: str = "") -> "HashedLinearPolicy":
        return cls(theta=np.zeros(1 << bits), version=version, bits=bits,
                   temperature=temperature, rules_version=rules_version)

    def score_actions(self, context: FeatureVector,
                      actions: Sequence[ActionCandidate]) -> dict[str, float]:
        out = {}
        for action in actions:
            idx, val = hashed_features(context, action, self.bits)
            out[action.action_id] = float(np.dot(self.theta[idx], val))
        return out


@dataclass
class ColdStartScorer:
    """Rule-based cold-start policy: prefers actions from listed sources.

    Stands in for the legacy deterministic policy until a trained model is
    promoted; scores are 1 for preferred sources, 0 otherwise.
    """

    version: str = "coldstart-v0"
    rules_version: str = ""
    temperature: float = 1.0
    preferred_sources: tuple[str, ...] = ("dialog",)

    def score_actions(self, context: FeatureVector,
                      actions: Sequence[ActionCandidate]) -> dict[str, float]:
        return {
            a.action_id: 1.0 if a.source in self.preferred_sources else 0.0
            for a in actions
        }


def score(policy: Scorer, context: FeatureVector,
          actions: Sequence[ActionCandidate]) -> dict[str, float]:
    if not actions:
        raise ValueError("no actions to score")
    return policy.score_actions(context, actions)


def policy_probs(policy: Scorer, context: FeatureVector,
                 legal: Sequence[ActionCandidate],
                 temperature: Optional[float] = None) -> dict[str, float]:
    """Softmax action probabilities restricted to the legal actions."""
    if not legal:
        raise ValueError("no legal actions")
    t = policy.temperature if temperature is None else temperature
    return softmax_probs(score(policy, context, legal), t)


def divergence(p: Mapping[str, float], q: Mapping[str, float], kind: str) -> float:
    """Divergence between two distributions on the same support."""
    if kind not in DIVERGENCES:
        raise ValueError(f"unknown divergence {kind!r}")
    if set(p) != set(q):
        raise ValueError("distribution supports differ")
    if kind == "total_variation":
        return 0.5 * sum(abs(p[a] - q[a]) for a in p)
    first, second = (p, q) if kind == "kl_pi_mu" else (q, p)
    total = 0.0
    for a in p:
        fa = first[a]
        if fa == 0.0:
            continue
        sa = second[a]
        if sa <= 0.0:
            raise ValueError(f"zero denominator entry for action {a!r} in KL")
        total += fa * math.log(fa / sa)
    return total


# ---------------------------------------------------------------------------
# Batched training machinery


@dataclass
class ExampleBatch:
    """All (example, legal action) feature rows of a training set, as CSR."""

    X: sp.csr_matrix
    seg_starts: np.ndarray      # (n+1,) row boundaries per example
    seg_ids: np.ndarray         # (rows,) example index per row
    chosen_rows: np.ndarray     # (n,) absolute row of the logged action
    mu_rows: np.ndarray         # (rows,) logged probability per action
    mu_chosen: np.ndarray       # (n,) logged probability of the chosen action
    rewards: np.ndarray         # (n,)
    examples: list[JoinedExample]

    @property
    def n(self) -> int:
        return len(self.rewards)


def build_batch(examples: Iterable[JoinedExample], reward_spec: RewardSpec,
                bits: int = DEFAULT_BITS) -> ExampleBatch:
    """Assemble the sparse design matrix; examples without a resolvable
    reward under the spec are dropped."""
    data: list[np.ndarray] = []
    indices: list[np.ndarray] = []
    indptr = [0]
    seg_starts = [0]
    seg_ids: list[int] = []
    chosen_rows: list[int] = []
    mu_rows: list[float] = []
    mu_chosen: list[float] = []
    rewards: list[float] = []
    kept: list[JoinedExample] = []

    row = 0
    nnz = 0
    for ex in examples:
        r = scalar_reward(ex, reward_spec)
        if r is None:
            continue
        record = ex.decision
        legal = record.action_sets.legal_actions()
        if not legal:
            continue
        i = len(kept)
        chosen_row = None
        for action in legal:
            idx, val = hashed_features(record.context, action, bits)
            indices.append(idx)
            data.append(val)
            nnz += len(idx)
            indptr.append(nnz)
            mu_rows.append(record.distribution.probs.get(action.action_id, 0.0))
            seg_ids.append(i)
            if action.action_id == record.chosen_id:
                chosen_row = row
            row += 1
        if chosen_row is None:
            raise ValueError(f"record {record.event_id} chose an action outside its legal set")
        kept.append(ex)
        seg_starts.append(row)
        chosen_rows.append(chosen_row)
        mu_chosen.append(record.chosen_prob)
        rewards.append(r)

    d = 1 << bits
    if row == 0:
        X = sp.csr_matrix((0, d))
    else:
        X = sp.csr_matrix(
            (np.concatenate(data), np.concatenate(indices), np.asarray(indptr)),
            shape=(row, d),
        )
    return ExampleBatch(
        X=X,
        seg_starts=np.asarray(seg_starts, dtype=np.int64),
        seg_ids=np.asarray(seg_ids, dtype=np.int64),
        chosen_rows=np.asarray(chosen_rows, dtype=np.int64),
        mu_rows=np.asarray(mu_rows),
        mu_chosen=np.asarray(mu_chosen),
        rewards=np.asarray(rewards),
        examples=kept,
    )


def batch_probs(batch: ExampleBatch, theta: np.ndarray,
                temperature: float) -> np.ndarray:
    """Per-row softmax probabilities within each example segment."""
    scores = batch.X @ theta
    starts = batch.seg_starts[:-1]
    peak = np.maximum.reduceat(scores, starts)
    e = np.exp((scores - peak[batch.seg_ids]) / temperature)
    z = np.add.reduceat(e, starts)
    return e / z[batch.seg_ids]


def batch_weights(batch: ExampleBatch, theta: np.ndarray,
                  temperature: float) -> np.ndarray:
    """Importance weights of the policy against the logged probabilities."""
    p = batch_probs(batch, theta, temperature)
    return p[batch.chosen_rows] / batch.mu_chosen


def _divergence_terms(batch: ExampleBatch, p: np.ndarray, kind: str,
                      temperature: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-example divergence values and per-row gradient coefficients."""
    starts = batch.seg_starts[:-1]
    mu = batch.mu_rows
    t = temperature
    if kind == "kl_pi_mu":
        if np.any(mu <= 0.0):
            raise ValueError(
                "kl_pi_mu requires a full logged distribution with positive entries"
            )
        ell = np.log(p / mu)
        per_example = np.add.reduceat(p * ell, starts)
        coef = (p / t) * (ell - per_example[batch.seg_ids])
        return per_example, coef
    if kind == "kl_mu_pi":
        terms = np.where(mu > 0.0, mu * (np.log(np.where(mu > 0.0, mu, 1.0)) - np.log(p)), 0.0)
        per_example = np.add.reduceat(terms, starts)
        coef = -(mu - p) / t
        return per_example, coef
    if kind == "total_variation":
        diff = p - mu
        per_example = 0.5 * np.add.reduceat(np.abs(diff), starts)
        sgn = np.sign(diff)
        sbar = np.add.reduceat(p * sgn, starts)
        coef = (p / (2.0 * t)) * (sgn - sbar[batch.seg_ids])
        return per_example, coef
    raise ValueError(f"unknown divergence {kind!r}")


def objective_and_gradient(batch: ExampleBatch, theta: np.ndarray,
                           reg_lambda: float, kind: str, temperature: float,
                           weight_cap: float) -> tuple[float, np.ndarray]:
    """Value and gradient of the capped-importance objective with a
    divergence penalty toward the logged distribution."""
    n = batch.n
    p = batch_probs(batch, theta, temperature)
    pc = p[batch.chosen_rows]
    w = pc / batch.mu_chosen
    capped_w = np.minimum(w, weight_cap)
    value = float(np.mean(capped_w * batch.rewards))

    active = w < weight_cap
    g = np.where(active, batch.rewards / batch.mu_chosen, 0.0) * (pc / temperature)
    coef = -(g)[batch.seg_ids] * p
    np.add.at(coef, batch.chosen_rows, g)

    if reg_lambda > 0.0:
        div_values, div_coef = _divergence_terms(batch, p, kind, temperature)
        value -= reg_lambda * float(np.mean(div_values))
        coef = coef - reg_lambda * div_coef

    grad = np.asarray(batch.X.T @ (coef / n)).ravel()
    return value, grad


@dataclass(frozen=True)
class TrainingConfig:
    reg_lambda: float = 1.0
    divergence: str = "kl_pi_mu"
    temperature: float = 1.0
    learning_rate: float = 0.1
    epochs: int = 200
    weight_cap: float = 10.0
    heldout_fraction: float = 0.25
    bits: int = DEFAULT_BITS
    seed: int = 0

    def __post_init__(self):
        if self.reg_lambda < 0.0:
            raise ValueError("reg_lambda must be >= 0")
        if self.divergence not in DIVERGENCES:
            raise ValueError(f"unknown divergence {self.divergence!r}")
        if not 0.0 < self.heldout_fraction < 1.0:
            raise ValueError("heldout_fraction must be in (0,1)")
        if not self.weight_cap > 0.0:
            raise ValueError("weight_cap must be positive")


@dataclass
class TrainingReport:
    n_train: int
    n_heldout: int
    objective_first: float
    objective_last: float
    ess_before: float
    ess_after: float
    heldout_value_before: float
    heldout_value_after: float
    heldout_divergence_after: float

    def to_obj(self) -> dict:
        return dict(self.__dict__)


def _split_examples(examples: list[JoinedExample], heldout_fraction: float,
                    seed: int) -> tuple[list[JoinedExample], list[JoinedExample]]:
    order = np.random.default_rng(seed).permutation(len(examples))
    n_heldout = max(1, int(round(len(examples) * heldout_fraction)))
    if n_heldout >= len(examples):
        n_heldout = len(examples) - 1
    heldout_idx = set(order[:n_heldout].tolist())
    train = [ex for i, ex in enumerate(examples) if i not in heldout_idx]
    heldout = [ex for i, ex in enumerate(examples) if i in heldout_idx]
    return train, heldout


def _heldout_stats(batch: ExampleBatch, theta: np.ndarray, temperature: float,
                   weight_cap: float) -> tuple[float, float]:
    """(effective sample size, capped importance estimate) on a batch."""
    w = batch_weights(batch, theta, temperature)
    total = w.sum()
    sq = float(np.dot(w, w))
    ess = 0.0 if sq == 0.0 else float(total * total / sq)
    value = float(np.mean(np.minimum(w, weight_cap) * batch.rewards))
    return ess, value


def offpolicy_train(examples: Iterable[JoinedExample], reward_spec: RewardSpec,
                    config: TrainingConfig,
                    init: Optional[HashedLinearPolicy] = None,
                    version: Optional[str] = None,
                    rules_version: str = "",
                    ) -> tuple[HashedLinearPolicy, TrainingReport]:
    """Maximize capped importance-weighted reward minus a divergence penalty
    toward the logging distribution, by full-batch gradient ascent.

    The gradient step is scaled by 1/(1+reg_lambda) so large penalties stay
    numerically stable; in the large-lambda limit the trained policy matches
    the logging policy on every context.
    """
    examples = list(examples)
    if init is not None and init.bits != config.bits:
        raise ValueError("init policy bit width differs from config")
    train, heldout = _split_examples(examples, config.heldout_fraction, config.seed)
    batch = build_batch(train, reward_spec, config.bits)
    held_batch = build_batch(heldout, reward_spec, config.bits)
    if batch.n == 0:
        raise ValueError("no trainable examples (rewards unresolvable)")
    if np.any(batch.mu_chosen <= 0.0):
        raise ValueError("logged chosen probability must be positive")

    theta = (init.theta.copy() if init is not None
             else np.zeros(1 << config.bits))
    step = config.learning_rate / (1.0 + config.reg_lambda)

    ess_before, value_before = _heldout_stats(
        held_batch, theta, config.temperature, config.weight_cap)

    first_value = None
    value = 0.0
    for _ in range(config.epochs):
        value, grad = objective_and_gradient(
            batch, theta, config.reg_lambda, config.divergence,
            config.temperature, config.weight_cap)
        if first_value is None:
            first_value = value
        theta = theta + step * grad
    if first_value is None:
        first_value, _ = objective_and_gradient(
            batch, theta, config.reg_lambda, config.divergence,
            config.temperature, config.weight_cap)
        value = first_value

    ess_after, value_after = _heldout_stats(
        held_batch, theta, config.temperature, config.weight_cap)
    p_after = batch_probs(held_batch, theta, config.temperature)
    div_after, _ = _divergence_terms(
        held_batch, p_after, config.divergence, config.temperature)

    if version is None:
        version = f"pol-{fnv1a64(theta.tobytes()) % 16**8:08x}"
    policy = HashedLinearPolicy(theta=theta, version=version, bits=config.bits,
                                temperature=config.temperature,
                                rules_version=rules_version)
    report = TrainingReport(
        n_train=batch.n,
        n_heldout=held_batch.n,
        objective_first=float(first_value),
        objective_last=float(value),
        ess_before=ess_before,
        ess_after=ess_after,
        heldout_value_before=value_before,
        heldout_value_after=value_after,
        heldout_divergence_after=float(np.mean(div_after)) if held_batch.n else 0.0,
    )
    return policy, report


def imitation_train(examples: Iterable[JoinedExample], reward_spec: RewardSpec,
                    threshold: float, config: TrainingConfig,
                    version: Optional[str] = None,
                    rules_version: str = "",
                    ) -> tuple[HashedLinearPolicy, TrainingReport]:
    """Supervised warm start: fit the policy to reproduce logged choices on
    examples where the logging policy earned at least ``threshold`` reward."""
    qualifying = []
    for ex in examples:
        r = scalar_reward(ex, reward_spec)
        if r is not None and r >= threshold:
            qualifying.append(ex)
    if not qualifying:
        raise ValueError("no examples with reward at or above the imitation threshold")

    if len(qualifying) == 1:
        train, heldout = qualifying, []
    else:
        train, heldout = _split_examples(qualifying, config.heldout_fraction, config.seed)
    batch = build_batch(train, reward_spec, config.bits)
    held_batch = build_batch(heldout, reward_spec, config.bits)

    theta = np.zeros(1 << config.bits)
    t = config.temperature
    n = batch.n
    first_ll = None
    ll = 0.0
    for _ in range(config.epochs):
        p = batch_probs(batch, theta, t)
        ll = float(np.mean(np.log(p[batch.chosen_rows])))
        if first_ll is None:
            first_ll = ll
        coef = -p / t
        np.add.at(coef, batch.chosen_rows, 1.0 / t)
        grad = np.asarray(batch.X.T @ (coef / n)).ravel()
        theta = theta + config.learning_rate * grad

    held_ll = 0.0
    if held_batch.n:
        p_h = batch_probs(held_batch, theta, t)
        held_ll = float(np.mean(np.log(p_h[held_batch.chosen_rows])))

    if version is None:
        version = f"imit-{fnv1a64(theta.tobytes()) % 16**8:08x}"
    policy = HashedLinearPolicy(theta=theta, version=version, bits=config.bits,
                                temperature=t, rules_version=rules_version)
    report = TrainingReport(
        n_train=batch.n,
        n_heldout=held_batch.n,
        objective_first=float(first_ll if first_ll is not None else 0.0),
        objective_last=float(ll),
        ess_before=0.0,
        ess_after=0.0,
        heldout_value_before=0.0,
        heldout_value_after=held_ll,
        heldout_divergence_after=0.0,
    )
    return policy, report


# ---------------------------------------------------------------------------
# Policy serialization

_MAGIC = b"BNDP"
_FORMAT_VERSION = 1


def save_policy(policy: HashedLinearPolicy, path: str) -> None:
    """Versioned binary format: header plus little-endian float64 weights.

    The header records the rules version the model was last trained under,
    which the serving pipeline compares against the active rules version to
    cap newly-legalized actions.
    """
    version_b = policy.version.encode()
    rules_b = policy.rules_version.encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _FORMAT_VERSION, policy.bits))
        fh.write(struct.pack("<d", policy.temperature))
        fh.write(struct.pack("<H", len(version_b)) + version_b)
        fh.write(struct.pack("<H", len(rules_b)) + rules_b)
        fh.write(np.ascontiguousarray(policy.theta, dtype="<f8").tobytes())


def load_policy(path: str) -> HashedLinearPolicy:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError(f"{path}: not a policy file")
        fmt, bits = struct.unpack("<II", fh.read(8))
        if fmt != _FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported policy format {fmt}")
        (temperature,) = struct.unpack("<d", fh.read(8))
        (vlen,) = struct.unpack("<H", fh.read(2))
        version = fh.read(vlen).decode()
        (rlen,) = struct.unpack("<H", fh.read(2))
        rules_version = fh.read(rlen).decode()
        theta = np.frombuffer(fh.read(), dtype="<f8").copy()
    if theta.shape[0] != 1 << bits:
        raise ValueError(f"{path}: weight count does not match bit width")
    return HashedLinearPolicy(theta=theta, version=version, bits=bits,
                              temperature=temperature, rules_version=rules_version)


# ---------------------------------------------------------------------------
# Reward imputation

BANNED_IMPUTATION_FEATURES = frozenset({"escalation"})


def imputation_feature(example: JoinedExample, name: str) -> float:
    """Causally-safe feature extraction for the imputation model.

    Supported names: reward signals by name ("click", "escalation"),
    "source:<s>" / "action_tag:<t>" indicators of the chosen action,
    "action:<f>" and "context:<f>" numeric features, "context_tag:<t>".
    """
    record = example.decision
    if name in ("click", "escalation", "resolution"):
        return float(example.rewards.get(name, 0.0))
    kind, _, arg = name.partition(":")
    chosen = next(a for a in record.action_sets.potential
                  if a.action_id == record.chosen_id)
    if kind == "source":
        return 1.0 if chosen.source == arg else 0.0
    if kind == "action_tag":
        return 1.0 if arg in chosen.features.tags else 0.0
    if kind == "action":
        return float(chosen.features.features.get(arg, 0.0))
    if kind == "context":
        return float(record.context.features.get(arg, 0.0))
    if kind == "context_tag":
        return 1.0 if arg in record.context.tags else 0.0
    raise ValueError(f"unknown imputation feature {name!r}")


@dataclass
class ImputationModel:
    """Logistic model over an allowlisted feature set."""

    feature_names: tuple[str, ...]
    weights: np.ndarray
    intercept: float
    heldout_logloss: float = math.nan
    banned_features: frozenset[str] = BANNED_IMPUTATION_FEATURES

    def predict(self, example: JoinedExample) -> float:
        x = np.array([imputation_feature(example, f) for f in self.feature_names])
        z = float(np.dot(self.weights, x) + self.intercept)
        return 1.0 / (1.0 + math.exp(-max(min(z, 35.0), -35.0)))


def fit_imputation(examples: Iterable[JoinedExample], allowlist: Sequence[str],
                   banned: frozenset[str] = BANNED_IMPUTATION_FEATURES,
                   learning_rate: float = 0.5, epochs: int = 400,
                   heldout_fraction: float = 0.2, seed: int = 0) -> ImputationModel:
    """Fit a logistic model of the resolution response on examples where
    users answered, using only allowlisted (causally safe) features."""
    bad = sorted(set(allowlist) & banned)
    if bad:
        raise ValueError(f"causally dubious feature not allowed: {bad[0]!r}")
    observed = [ex for ex in examples if "resolution" in ex.rewards]
    labels = np.array([ex.rewards["resolution"] for ex in observed])
    if len(observed) == 0 or labels.min() == labels.max():
        raise ValueError("need at least one positive and one negative observed resolution")

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(observed))
    n_heldout = max(1, int(round(len(observed) * heldout_fraction)))
    held_idx = set(order[:n_heldout].tolist())

    X = np.array([[imputation_feature(ex, f) for f in allowlist] for ex in observed])
    y = labels
    mask = np.array([i not in held_idx for i in range(len(observed))])
    Xtr, ytr = X[mask], y[mask]
    Xhe, yhe = X[~mask], y[~mask]
    if len(ytr) == 0 or ytr.min() == ytr.max():
        Xtr, ytr = X, y

    w = np.zeros(X.shape[1])
    b = 0.0
    for _ in range(epochs):
        z = Xtr @ w + b
        pred = 1.0 / (1.0 + np.exp(-np.clip(z, -35, 35)))
        err = pred - ytr
        w -= learning_rate * (Xtr.T @ err) / len(ytr)
        b -= learning_rate * float(err.mean())

    logloss = math.nan
    if len(yhe):
        z = np.clip(Xhe @ w + b, -35, 35)
        pred = 1.0 / (1.0 + np.exp(-z))
        eps = 1e-12
        logloss = float(-np.mean(yhe * np.log(pred + eps)
                                 + (1 - yhe) * np.log(1 - pred + eps)))
    return ImputationModel(feature_names=tuple(allowlist), weights=w, intercept=b,
                           heldout_logloss=logloss, banned_features=banned)


def impute(model: ImputationModel,
           examples: Iterable[JoinedExample]) -> list[JoinedExample]:
    """Fill imputed_resolution for missing-resolution examples only;
    observed values are never overwritten."""
    out = []
    for ex in examples:
        if "resolution" in ex.rewards:
            out.append(ex)
        else:
            out.append(replace(ex, imputed_resolution=model.predict(ex)))
    return out
