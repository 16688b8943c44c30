import json
import math
import os

import numpy as np
import pytest

from banditd.core import (
    ActionCandidate,
    FeatureVector,
    JoinedExample,
    RewardSpec,
)
from banditd.exploration import ExplorationConfig
from banditd.policy import (
    ColdStartScorer,
    HashedLinearPolicy,
    TrainingConfig,
    build_batch,
    divergence,
    feature_terms,
    fit_imputation,
    hashed_features,
    imitation_train,
    impute,
    imputation_feature,
    load_policy,
    objective_and_gradient,
    offpolicy_train,
    policy_probs,
    save_policy,
    score,
)
from banditd.simenv import SyntheticEnvironment, synthesize_examples
from tests.conftest import make_example, make_record

GOLDEN = json.load(open(os.path.join(os.path.dirname(__file__),
                                     "golden", "feature_hash_golden.json")))

CTX = FeatureVector(features={"severity": 0.4},
                    tags=frozenset({"seg:0", "requested_human"}))
ACTION = ActionCandidate(action_id="a1",
                         features=FeatureVector(features={"quality": 0.9,
                                                          "freshness": 0.2}),
                         source="dialog")


class TestFeatureHashing:
    def test_terms_match_golden_keys(self):
        keys, values = feature_terms(CTX, ACTION)
        assert [k.decode() for k in keys] == [r["key"] for r in GOLDEN["rows"]]

    def test_buckets_and_signs_match_golden(self):
        idx, val = hashed_features(CTX, ACTION, GOLDEN["bits"])
        assert idx.tolist() == [r["bucket"] for r in GOLDEN["rows"]]
        assert val.tolist() == pytest.approx([r["value"] for r in GOLDEN["rows"]])

    def test_score_equals_sum_of_signed_theta_entries(self):
        # derived oracle: buckets computed with an inline reference hash
        def fnv(data):
            h = 0xCBF29CE484222325
            for b in data:
                h = ((h ^ b) * 0x100000001B3) % 2**64
            return h

        bits = 18
        theta = np.random.default_rng(5).normal(size=1 << bits)
        policy = HashedLinearPolicy(theta=theta, version="t", bits=bits)
        expected = 0.0
        for row in GOLDEN["rows"]:
            h = fnv(row["key"].encode())
            assert h % (1 << bits) == row["bucket"]
            expected += theta[row["bucket"]] * row["value"]
        got = score(policy, CTX, [ACTION])["a1"]
        assert got == pytest.approx(expected, rel=1e-12)

    def test_phi_is_content_cached_not_identity_cached(self):
        ctx_copy = FeatureVector(features={"severity": 0.4},
                                 tags=frozenset({"seg:0", "requested_human"}))
        i1, v1 = hashed_features(CTX, ACTION)
        i2, v2 = hashed_features(ctx_copy, ACTION)
        assert (i1 == i2).all() and (v1 == v2).all()


class TestScoringAndProbs:
    def test_zero_theta_scores_zero(self):
        policy = HashedLinearPolicy.zeros("z")
        assert score(policy, CTX, [ACTION]) == {"a1": 0.0}

    def test_zero_theta_uniform_probs(self):
        policy = HashedLinearPolicy.zeros("z")
        actions = [ACTION,
                   ActionCandidate(action_id="a2", features=FeatureVector(), source="d"),
                   ActionCandidate(action_id="a3", features=FeatureVector(), source="d")]
        probs = policy_probs(policy, CTX, actions)
        assert all(p == pytest.approx(1 / 3) for p in probs.values())

    def test_single_action_gets_probability_one(self):
        policy = HashedLinearPolicy.zeros("z")
        assert policy_probs(policy, CTX, [ACTION]) == {"a1": 1.0}

    def test_probs_invariant_to_action_order(self, rng):
        theta = rng.normal(size=1 << 18)
        policy = HashedLinearPolicy(theta=theta, version="t")
        actions = [ActionCandidate(action_id=f"a{i}",
                                   features=FeatureVector(features={"quality": 0.2 * i}),
                                   source="d") for i in range(5)]
        forward = policy_probs(policy, CTX, actions)
        backward = policy_probs(policy, CTX, list(reversed(actions)))
        assert forward == backward

    def test_restriction_renormalizes_proportionally(self, rng):
        theta = rng.normal(size=1 << 18)
        policy = HashedLinearPolicy(theta=theta, version="t")
        actions = [ActionCandidate(action_id=f"a{i}",
                                   features=FeatureVector(features={"quality": 0.3 * i}),
                                   source="d") for i in range(4)]
        full = policy_probs(policy, CTX, actions)
        sub = policy_probs(policy, CTX, actions[:3])
        kept = sum(full[f"a{i}"] for i in range(3))
        for i in range(3):
            assert sub[f"a{i}"] == pytest.approx(full[f"a{i}"] / kept, rel=1e-9)


class TestDivergence:
    def test_identical_distributions_are_zero(self):
        p = {"a": 0.5, "b": 0.5}
        for kind in ("kl_pi_mu", "kl_mu_pi", "total_variation"):
            assert divergence(p, dict(p), kind) == 0.0

    def test_total_variation_arithmetic(self):
        assert divergence({"a": 0.6, "b": 0.4}, {"a": 0.4, "b": 0.6},
                          "total_variation") == pytest.approx(0.2, abs=1e-12)

    def test_kl_arithmetic(self):
        got = divergence({"a": 0.5, "b": 0.5}, {"a": 0.25, "b": 0.75}, "kl_pi_mu")
        expected = 0.5 * math.log(2) + 0.5 * math.log(2 / 3)
        assert got == pytest.approx(expected, abs=1e-12)
        assert got == pytest.approx(0.14384, abs=1e-5)

    def test_support_mismatch_errors(self):
        with pytest.raises(ValueError, match="support"):
            divergence({"a": 1.0}, {"a": 0.5, "b": 0.5}, "kl_pi_mu")

    def test_kl_zero_denominator_errors(self):
        with pytest.raises(ValueError, match="denominator"):
            divergence({"a": 0.5, "b": 0.5}, {"a": 1.0, "b": 0.0}, "kl_pi_mu")

    def test_kl_mu_pi_ignores_zero_numerator_entries(self):
        assert divergence({"a": 1.0, "b": 0.0}, {"a": 1.0, "b": 0.0},
                          "kl_mu_pi") == 0.0


def synthetic_batch(n=50, seed=3):
    env = SyntheticEnvironment(seed=seed)
    cold = ColdStartScorer(rules_version="rules-v1")
    explo = ExplorationConfig(strategy="softmax", temperature=1.0)
    examples = synthesize_examples(env, cold, explo, n, seed=seed)
    spec = RewardSpec("resolution", {"resolution": 1.0}, default=0.0)
    return build_batch(examples, spec, 18)


class TestGradient:
    @pytest.mark.parametrize("kind", ["kl_pi_mu", "kl_mu_pi", "total_variation"])
    def test_matches_central_finite_differences(self, kind):
        batch = synthetic_batch()
        rng = np.random.default_rng(0)
        theta = rng.normal(0, 0.3, 1 << 18)
        value, grad = objective_and_gradient(batch, theta, 0.7, kind, 1.0, 2.0)
        coords = rng.choice(np.unique(batch.X.indices), 10, replace=False)
        h = 1e-6
        for c in coords:
            up, down = theta.copy(), theta.copy()
            up[c] += h
            down[c] -= h
            vu, _ = objective_and_gradient(batch, up, 0.7, kind, 1.0, 2.0)
            vd, _ = objective_and_gradient(batch, down, 0.7, kind, 1.0, 2.0)
            fd = (vu - vd) / (2 * h)
            denom = max(abs(fd), abs(grad[c]), 1e-8)
            assert abs(fd - grad[c]) / denom < 1e-4

    def test_lambda_zero_uncapped_objective_is_plain_ips(self):
        batch = synthetic_batch()
        theta = np.random.default_rng(1).normal(0, 0.2, 1 << 18)
        value, _ = objective_and_gradient(batch, theta, 0.0, "kl_pi_mu", 1.0,
                                          math.inf)
        from banditd.policy import batch_weights

        w = batch_weights(batch, theta, 1.0)
        assert value == pytest.approx(float(np.mean(w * batch.rewards)), rel=1e-12)


class TestOffpolicyTrain:
    spec = RewardSpec("resolution", {"resolution": 1.0}, default=0.0)

    def _examples(self, n=400, seed=2):
        env = SyntheticEnvironment(seed=seed)
        cold = ColdStartScorer(rules_version="rules-v1")
        explo = ExplorationConfig(strategy="softmax", temperature=1.0)
        return synthesize_examples(env, cold, explo, n, seed=seed)

    def test_huge_lambda_recovers_logging_policy(self):
        examples = self._examples(600)
        config = TrainingConfig(reg_lambda=1e6, epochs=300, learning_rate=0.5,
                                divergence="kl_pi_mu", seed=0)
        policy, report = offpolicy_train(examples, self.spec, config)
        # on every held-out context the trained policy sits on the logged
        # distribution within total variation 0.01
        seen = set()
        worst = 0.0
        for ex in examples[-150:]:
            record = ex.decision
            key = record.context.fingerprint
            if key in seen:
                continue
            seen.add(key)
            probs = policy_probs(policy, record.context,
                                 record.action_sets.legal_actions())
            logged = record.distribution.probs
            tv = 0.5 * sum(abs(probs[a] - logged[a]) for a in probs)
            worst = max(worst, tv)
        assert worst <= 0.01

    def test_learning_rate_zero_is_identity(self):
        examples = self._examples(100)
        init = HashedLinearPolicy(
            theta=np.random.default_rng(3).normal(size=1 << 18), version="init")
        config = TrainingConfig(epochs=1, learning_rate=0.0, seed=0)
        policy, _ = offpolicy_train(examples, self.spec, config, init=init)
        assert (policy.theta == init.theta).all()

    def test_requires_positive_logged_probabilities(self):
        examples = self._examples(60)
        record = examples[0].decision
        bad = type(record)(**{**record.__dict__, "chosen_prob": 0.0})
        examples[0] = JoinedExample(decision=bad, rewards={})
        with pytest.raises(ValueError, match="positive"):
            offpolicy_train(examples, self.spec, TrainingConfig(seed=0))

    def test_report_makes_sense(self):
        policy, report = offpolicy_train(self._examples(500), self.spec,
                                         TrainingConfig(epochs=60, seed=0))
        assert report.n_train + report.n_heldout == 500
        assert report.objective_last >= report.objective_first
        assert report.ess_after > 0

    def test_version_stamping(self):
        policy, _ = offpolicy_train(
            self._examples(100), self.spec, TrainingConfig(epochs=2, seed=0),
            version="cand-7", rules_version="rules-v9")
        assert policy.version == "cand-7"
        assert policy.rules_version == "rules-v9"


class TestImitation:
    spec = RewardSpec("resolution", {"resolution": 1.0}, default=0.0)

    def test_imitates_rewarded_choices_on_separable_data(self):
        # logs always choose action "good" and it is always rewarded
        pool = tuple(ActionCandidate(action_id=a, features=FeatureVector(),
                                     source="dialog") for a in ("bad1", "bad2", "good"))
        examples = []
        for i in range(60):
            ctx = FeatureVector(tags=frozenset({f"seg:{i % 3}"}))
            record = make_record(event_id=f"{i:032x}", context=ctx,
                                 candidates=pool,
                                 probs={"bad1": 0.25, "bad2": 0.25, "good": 0.5},
                                 chosen="good")
            examples.append(JoinedExample(decision=record, rewards={"resolution": 1.0}))
        config = TrainingConfig(epochs=300, learning_rate=1.0, seed=0)
        policy, report = imitation_train(examples, self.spec, 0.5, config)
        for i in range(3):
            ctx = FeatureVector(tags=frozenset({f"seg:{i}"}))
            probs = policy_probs(policy, ctx, list(pool))
            assert probs["good"] >= 0.9
        assert report.heldout_value_after > math.log(0.5)

    def test_threshold_above_all_rewards_errors(self):
        examples = [make_example(rewards={"resolution": 0.0})]
        with pytest.raises(ValueError, match="threshold"):
            imitation_train(examples, self.spec, 0.5, TrainingConfig(seed=0))


class TestImputation:
    def test_banned_feature_errors_by_name(self):
        with pytest.raises(ValueError, match="escalation"):
            fit_imputation([], ["click", "escalation"])

    def test_perfectly_predictive_feature(self, rng):
        examples = []
        for i in range(200):
            responded = i % 2 == 0
            label = 1.0 if i % 4 == 0 else 0.0
            rewards = {"click": label}
            if responded:
                rewards["resolution"] = label
            examples.append(make_example(event_id=f"{i:032x}", rewards=rewards))
        model = fit_imputation(examples, ["click"], seed=0)
        correct = 0
        observed = [ex for ex in examples if "resolution" in ex.rewards]
        for ex in observed:
            pred = model.predict(ex)
            correct += (pred >= 0.5) == (ex.rewards["resolution"] >= 0.5)
        assert correct / len(observed) >= 0.95

    def test_constant_labels_error(self):
        examples = [make_example(event_id=f"{i:032x}",
                                 rewards={"resolution": 1.0}) for i in range(10)]
        with pytest.raises(ValueError, match="negative"):
            fit_imputation(examples, ["click"])

    def test_impute_fills_only_missing(self):
        examples = [
            make_example(event_id="0" * 32, rewards={"resolution": 0.0}),
            make_example(event_id="1" * 32, rewards={"click": 1.0}),
        ]
        train = [make_example(event_id=f"{i+2:032x}",
                              rewards={"resolution": float(i % 2), "click": float(i % 2)})
                 for i in range(40)]
        model = fit_imputation(train, ["click"], seed=0)
        out = impute(model, examples)
        assert out[0].imputed_resolution is None
        assert out[0].rewards["resolution"] == 0.0
        assert out[1].imputed_resolution is not None
        assert 0.0 <= out[1].imputed_resolution <= 1.0

    def test_feature_extractors(self):
        ex = make_example(rewards={"click": 1.0})
        assert imputation_feature(ex, "click") == 1.0
        assert imputation_feature(ex, "escalation") == 0.0
        assert imputation_feature(ex, "source:dialog") == 1.0
        assert imputation_feature(ex, "source:web_article") == 0.0
        assert imputation_feature(ex, "context:severity") == 0.4
        with pytest.raises(ValueError):
            imputation_feature(ex, "nonsense~")


class TestSerialization:
    def test_round_trip(self, tmp_path, rng):
        policy = HashedLinearPolicy(theta=rng.normal(size=1 << 18),
                                    version="pol-x", bits=18, temperature=0.7,
                                    rules_version="rules-v3")
        path = str(tmp_path / "policy-pol-x.bin")
        save_policy(policy, path)
        loaded = load_policy(path)
        assert loaded.version == "pol-x"
        assert loaded.rules_version == "rules-v3"
        assert loaded.temperature == 0.7
        assert loaded.bits == 18
        assert (loaded.theta == policy.theta).all()

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "nope.bin"
        path.write_bytes(b"WHAT" + b"\x00" * 64)
        with pytest.raises(ValueError, match="not a policy file"):
            load_policy(str(path))
