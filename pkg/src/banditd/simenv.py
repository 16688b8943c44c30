"""Synthetic environment and the guard-railed closed training loop.

The environment has a finite context set (segment x topic, with a small
rate of explicit human-escalation requests) and a per-topic action pool of
dialog scripts, web articles, and an escalation action. True expected
rewards live in a table, so the exact value of any serving policy is
computable in closed form and every estimator can be checked against truth.
Survey responses are sparse and response probability is correlated with the
realized reward, which is exactly the regime reward imputation targets.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from banditd import logchannel, ope
from banditd.core import (
    ActionCandidate,
    ActionSets,
    DecisionRecord,
    ExplorationDistribution,
    FeatureVector,
    JoinedExample,
    RewardEvent,
    RewardSpec,
    scalar_reward,
)
from banditd.exploration import ExplorationConfig
from banditd.logchannel import JoinWindow, SegmentWriter, join, segment_name
from banditd.ope import EvalConfig, EvaluationReport, evaluate
from banditd.pipeline import (
    DecisionPipeline,
    DecisionRequest,
    GuardRails,
    PolicyRegistry,
    PromotionRejected,
    build_distribution,
)
from banditd.policy import (
    ColdStartScorer,
    HashedLinearPolicy,
    Scorer,
    TrainingConfig,
    fit_imputation,
    impute,
    imitation_train,
    offpolicy_train,
)
from banditd.rules import Rule, RuleFactory, RuleSetVersion

ESCALATE_ID = "escalate"

# Click behavior is unbiased across action types, so a pooled click model
# corrects the per-type survey-response skew. Source indicators are kept out
# of the default: they would re-learn the skew instead of removing it.
DEFAULT_IMPUTATION_ALLOWLIST = ("click",)


def standard_rules(version: str = "rules-v1",
                   extra: Sequence[Rule] = ()) -> RuleSetVersion:
    """The baseline business rules: an explicit request for a human support
    agent admits only escalation actions."""
    rules = [
        Rule(rule_id="human-request", kind="require_only", priority=0,
             when=({"tag": "requested_human"},),
             match=({"source_in": ["escalation"]},)),
    ]
    rules.extend(extra)
    return RuleSetVersion(version=version, rules=tuple(rules))


@dataclass(frozen=True)
class ContextAtom:
    segment: int
    topic: int
    requested_human: bool
    probability: float
    features: FeatureVector


@dataclass
class SyntheticEnvironment:
    seed: int = 0
    n_segments: int = 4
    n_topics: int = 5
    n_dialogs: int = 5
    n_articles: int = 4
    response_rate: float = 0.3          # survey response probability scale
    missingness_bias: float = 0.5       # responders skew toward good outcomes
    # Survey exposure differs by experience: dialog flows ask more often and
    # their responders skew far more positive, articles rarely prompt and
    # respond evenly. Missingness is therefore not at random across action
    # types, which is the regime that makes imputation worth it.
    response_rate_by_source: dict = field(default_factory=lambda: {
        "dialog": 1.5, "web_article": 0.4, "escalation": 1.0})
    bias_by_source: dict = field(default_factory=lambda: {
        "dialog": 1.8, "web_article": 0.0, "escalation": 1.0})
    article_fraction: float = 0.4       # fraction of contexts where articles win
    requested_human_rate: float = 0.02
    preference_gap: float = 0.35        # reward edge of the best action
    atoms: list[ContextAtom] = field(init=False)
    _pools: dict[int, tuple[ActionCandidate, ...]] = field(init=False)
    _reward: dict[tuple[int, int, str], float] = field(init=False)

    def __post_init__(self):
        rng = np.random.default_rng(self.seed)
        self._pools = {}
        self._reward = {}
        self.atoms = []

        for topic in range(self.n_topics):
            pool = []
            for i in range(self.n_dialogs):
                pool.append(ActionCandidate(
                    action_id=f"d{i}",
                    features=FeatureVector(features={"quality": float(rng.uniform(0.2, 1.0))}),
                    retrieval_score=float(rng.uniform(0.0, 1.0)),
                    source="dialog"))
            for i in range(self.n_articles):
                pool.append(ActionCandidate(
                    action_id=f"w{i}",
                    features=FeatureVector(features={"quality": float(rng.uniform(0.2, 1.0))}),
                    retrieval_score=float(rng.uniform(0.0, 1.0)),
                    source="web_article"))
            pool.append(ActionCandidate(
                action_id=ESCALATE_ID,
                features=FeatureVector(features={"quality": 0.5}),
                retrieval_score=0.0,
                source="escalation"))
            self._pools[topic] = tuple(pool)

        base_prob = 1.0 / (self.n_segments * self.n_topics)
        for segment in range(self.n_segments):
            for topic in range(self.n_topics):
                prefers_articles = bool(rng.random() < self.article_fraction)
                preferred = "web_article" if prefers_articles else "dialog"
                candidates = [a for a in self._pools[topic] if a.source == preferred]
                best = candidates[int(rng.integers(len(candidates)))].action_id
                for action in self._pools[topic]:
                    base = float(rng.uniform(0.08, 0.28))
                    if action.action_id == best:
                        base += self.preference_gap
                    elif action.source == preferred:
                        base += 0.08
                    if action.action_id == ESCALATE_ID:
                        base = 0.06
                    self._reward[(segment, topic, action.action_id)] = float(
                        np.clip(base, 0.02, 0.95))

                severity = float(rng.uniform(0.0, 1.0))
                for human in (False, True):
                    tags = {f"seg:{segment}", f"topic:{topic}", f"ctx:{segment}-{topic}"}
                    if human:
                        tags.add("requested_human")
                    p = base_prob * (self.requested_human_rate if human
                                     else 1.0 - self.requested_human_rate)
                    self.atoms.append(ContextAtom(
                        segment=segment, topic=topic, requested_human=human,
                        probability=p,
                        features=FeatureVector(features={"severity": severity},
                                               tags=frozenset(tags))))
        cdf = np.cumsum([a.probability for a in self.atoms])
        self._atom_cdf = np.minimum(cdf / cdf[-1], 1.0)

    # -- structure

    def pool(self, topic: int) -> tuple[ActionCandidate, ...]:
        return self._pools[topic]

    def true_reward(self, atom: ContextAtom, action_id: str) -> float:
        return self._reward[(atom.segment, atom.topic, action_id)]

    def best_value(self) -> float:
        """Value of the omniscient policy under the standard rules."""
        total = 0.0
        for atom in self.atoms:
            if atom.requested_human:
                total += atom.probability * self.true_reward(atom, ESCALATE_ID)
            else:
                total += atom.probability * max(
                    self.true_reward(atom, a.action_id) for a in self.pool(atom.topic))
        return total

    def request_for(self, atom: ContextAtom, user_id: str) -> DecisionRequest:
        return DecisionRequest(
            user_id=user_id,
            query=f"q:{atom.segment}:{atom.topic}",
            context=atom.features,
            candidates=self.pool(atom.topic),
        )

    def sample_atom(self, rng: np.random.Generator) -> ContextAtom:
        return self.atoms[int(np.searchsorted(self._atom_cdf, rng.random(), side="right"))]

    # -- outcome generation

    def source_of(self, topic: int, action_id: str) -> str:
        for action in self._pools[topic]:
            if action.action_id == action_id:
                return action.source
        raise KeyError(action_id)

    def outcome(self, atom: ContextAtom, action_id: str,
                rng: np.random.Generator) -> dict:
        """Realized binary signals plus whether the survey was answered."""
        r_true = self.true_reward(atom, action_id)
        resolved = float(rng.random() < r_true)
        click = float(rng.random() < (0.92 if resolved else 0.03))
        escalated = float(rng.random() < np.clip(0.45 - 0.4 * r_true, 0.02, 0.95))
        source = self.source_of(atom.topic, action_id)
        rate = self.response_rate * self.response_rate_by_source.get(source, 1.0)
        bias = min(1.0, self.missingness_bias * self.bias_by_source.get(source, 1.0))
        respond_p = float(np.clip(rate * (1.0 + bias * (2.0 * resolved - 1.0)),
                                  0.05, 1.0))
        responded = bool(rng.random() < respond_p)
        return {"resolution": resolved, "click": click,
                "escalation": escalated, "responded": responded}

    def reward_events(self, event_id: str, ts_ms: int, outcome: dict,
                      rng: np.random.Generator) -> list[RewardEvent]:
        """Click observed when it happens, escalation only on occurrence,
        resolution only when the user answers the survey; all delayed."""
        events = []
        if outcome["click"]:
            events.append(RewardEvent(event_id, "click", 1.0,
                                      ts_ms + int(rng.integers(100, 5_000))))
        if outcome["escalation"]:
            events.append(RewardEvent(event_id, "escalation", 1.0,
                                      ts_ms + int(rng.integers(1_000, 60_000))))
        if outcome["responded"]:
            events.append(RewardEvent(event_id, "resolution", outcome["resolution"],
                                      ts_ms + int(rng.integers(5_000, 120_000))))
        return events


# ---------------------------------------------------------------------------
# Closed-form oracle and vectorized rollouts


def atom_distributions(env: SyntheticEnvironment, policy: Scorer,
                       exploration_config: Optional[ExplorationConfig],
                       active: RuleSetVersion,
                       stamped: Optional[RuleSetVersion] = None) -> list[dict[str, float]]:
    """Serving distribution per context atom, via the same pure function the
    pipeline uses. ``exploration_config=None`` evaluates the bare policy
    softmax (still under the rules)."""
    from banditd.policy import policy_probs
    from banditd.rules import compute_legal

    out = []
    for atom in env.atoms:
        candidates = env.pool(atom.topic)
        if exploration_config is None:
            legal_ids = compute_legal(active, atom.features, candidates)
            legal = sorted((c for c in candidates if c.action_id in legal_ids),
                           key=lambda c: c.action_id)
            out.append(policy_probs(policy, atom.features, legal))
        else:
            dist, _ = build_distribution(policy, active, stamped,
                                         exploration_config, None,
                                         atom.features, candidates)
            out.append(dict(dist.probs))
    return out


def env_decide_oracle(env: SyntheticEnvironment, policy: Scorer,
                      exploration_config: Optional[ExplorationConfig] = None,
                      active: Optional[RuleSetVersion] = None,
                      stamped: Optional[RuleSetVersion] = None) -> float:
    """Exact expected reward of serving ``policy`` on this environment."""
    active = active or standard_rules()
    dists = atom_distributions(env, policy, exploration_config, active, stamped)
    total = 0.0
    for atom, dist in zip(env.atoms, dists):
        total += atom.probability * sum(
            p * env.true_reward(atom, aid) for aid, p in dist.items())
    return total


@dataclass
class BatchRollout:
    """Vectorized logged data for estimator checks: index arrays plus the
    aligned probability tables."""

    atom_idx: np.ndarray
    action_ids: list[list[str]]          # per atom, aligned with prob rows
    logged_probs: np.ndarray             # (n,) probability of the chosen action
    chosen_pos: np.ndarray               # (n,) position within the atom's id list
    rewards: np.ndarray                  # (n,) realized resolution
    dist_rows: list[np.ndarray]          # per atom, logging probabilities


def batch_rollout(env: SyntheticEnvironment, policy: Scorer,
                  exploration_config: Optional[ExplorationConfig],
                  n: int, seed: int,
                  active: Optional[RuleSetVersion] = None,
                  stamped: Optional[RuleSetVersion] = None) -> BatchRollout:
    """Simulate n logged events without the serving pipeline (fast path for
    large-n statistical checks; the pipeline path is exercised separately)."""
    active = active or standard_rules()
    dists = atom_distributions(env, policy, exploration_config, active, stamped)
    ids_per_atom = [sorted(d) for d in dists]
    rows = [np.array([d[a] for a in ids]) for d, ids in zip(dists, ids_per_atom)]
    reward_rows = [
        np.array([env.true_reward(atom, a) for a in ids])
        for atom, ids in zip(env.atoms, ids_per_atom)
    ]

    rng = np.random.default_rng(seed)
    atom_probs = np.array([a.probability for a in env.atoms])
    atom_idx = rng.choice(len(env.atoms), size=n, p=atom_probs)
    chosen_pos = np.empty(n, dtype=np.int64)
    logged = np.empty(n)
    rewards = np.empty(n)
    u_action = rng.random(n)
    u_reward = rng.random(n)
    for k, row in enumerate(rows):
        mask = atom_idx == k
        if not mask.any():
            continue
        cdf = np.cumsum(row)
        pos = np.searchsorted(cdf, u_action[mask], side="right")
        pos = np.minimum(pos, len(row) - 1)
        chosen_pos[mask] = pos
        logged[mask] = row[pos]
        rewards[mask] = (u_reward[mask] < reward_rows[k][pos]).astype(float)
    return BatchRollout(atom_idx=atom_idx, action_ids=ids_per_atom,
                        logged_probs=logged, chosen_pos=chosen_pos,
                        rewards=rewards, dist_rows=rows)


def synthesize_examples(env: SyntheticEnvironment, policy: Scorer,
                        exploration_config: Optional[ExplorationConfig],
                        n: int, seed: int,
                        active: Optional[RuleSetVersion] = None,
                        stamped: Optional[RuleSetVersion] = None,
                        arm: str = "treatment",
                        empty_user_ids: bool = False) -> list[JoinedExample]:
    """In-memory joined examples with the same content the pipeline would
    log, minus the file round trip. Sampling uses the deterministic seeded
    draw, so randomization diagnostics behave as in serving."""
    from banditd.exploration import sample, seed_from, seed_material

    active = active or standard_rules()
    rng = np.random.default_rng(seed)
    dists = atom_distributions(env, policy, exploration_config, active, stamped)
    strategy = exploration_config.strategy if exploration_config else "softmax"
    dist_objs = [ExplorationDistribution(probs=probs, strategy=strategy)
                 for probs in dists]
    legal_sets = [frozenset(probs) for probs in dists]

    out = []
    ts = _SYNTH_T0_MS
    for i in range(n):
        k = int(np.searchsorted(env._atom_cdf, rng.random(), side="right"))
        atom = env.atoms[k]
        user_id = "" if empty_user_ids else f"u{seed}-{i}"
        query = f"q:{atom.segment}:{atom.topic}"
        dist = dist_objs[k]
        chosen_id, chosen_prob = sample(dist, seed_from(user_id, query))
        outcome = env.outcome(atom, chosen_id, rng)
        rewards = {}
        if outcome["click"]:
            rewards["click"] = 1.0
        if outcome["escalation"]:
            rewards["escalation"] = 1.0
        if outcome["responded"]:
            rewards["resolution"] = outcome["resolution"]
        record = DecisionRecord(
            event_id=f"{seed:08x}{i:024x}",
            timestamp_ms=ts + i,
            context=atom.features,
            action_sets=ActionSets(potential=env.pool(atom.topic),
                                   legal_ids=legal_sets[k]),
            chosen_id=chosen_id,
            chosen_prob=chosen_prob,
            distribution=dist,
            policy_version=policy.version,
            rules_version=active.version,
            arm=arm,
            seed_material=seed_material(user_id, query),
        )
        out.append(JoinedExample(decision=record, rewards=rewards))
    return out


def rollout_weights(rollout: BatchRollout,
                    target_rows: list[np.ndarray]) -> ope.WeightedSamples:
    """Importance weights of a target distribution table against a rollout."""
    target_p = np.empty(len(rollout.atom_idx))
    for k, row in enumerate(target_rows):
        mask = rollout.atom_idx == k
        if mask.any():
            target_p[mask] = row[rollout.chosen_pos[mask]]
    return ope.WeightedSamples(target_p / rollout.logged_probs, rollout.rewards)


# ---------------------------------------------------------------------------
# The closed loop


@dataclass(frozen=True)
class LoopConfig:
    epochs: int = 20
    requests_per_epoch: int = 5000
    control_fraction: float = 0.5
    train_on: str = "treatment_only"     # or "all"
    exploration: ExplorationConfig = field(
        default_factory=lambda: ExplorationConfig(strategy="softmax", temperature=1.0))
    training: TrainingConfig = field(
        default_factory=lambda: TrainingConfig(reg_lambda=0.3, epochs=250,
                                               learning_rate=2.0))
    # The loop promotes on parity-or-better evidence: the margin absorbs one
    # confidence-interval width of estimator noise so early candidates are
    # not starved, while the oracle-value sanity checks stay enforced.
    rails: GuardRails = field(default_factory=lambda: GuardRails(required_margin=0.05))
    reward_spec_name: str = "resolution"
    use_imputation: bool = True
    imputation_allowlist: tuple[str, ...] = DEFAULT_IMPUTATION_ALLOWLIST
    training_window_epochs: int = 5
    eval_fraction: float = 0.2
    bootstrap_replicates: int = 500
    imitation_threshold: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.control_fraction <= 1.0:
            raise ValueError("control_fraction must be in [0,1]")
        if self.train_on not in ("treatment_only", "all"):
            raise ValueError("train_on must be treatment_only or all")


@dataclass
class EpochStats:
    epoch: int
    serving_version: str
    candidate_version: Optional[str]
    promoted: bool
    rejection_reason: Optional[str]
    offline_estimate: Optional[float]
    ci_low: Optional[float]
    ci_high: Optional[float]
    ess: Optional[float]
    n_eval: int
    true_value_serving: float
    true_value_candidate: Optional[float]
    true_value_control: float
    n_treatment: int
    n_control: int

    def to_obj(self) -> dict:
        return dict(self.__dict__)


@dataclass
class LoopResult:
    config: LoopConfig
    epochs: list[EpochStats]
    initial_version: str
    final_version: str
    true_value_initial: float
    true_value_final: float
    treatment_examples: list[JoinedExample]
    control_examples: list[JoinedExample]
    trainer_input_arms: list[str]
    final_policy: Scorer
    out_dir: Optional[str]

    def to_obj(self) -> dict:
        return {
            "initial_version": self.initial_version,
            "final_version": self.final_version,
            "true_value_initial": self.true_value_initial,
            "true_value_final": self.true_value_final,
            "epochs": [e.to_obj() for e in self.epochs],
        }


_SYNTH_T0_MS = 1_700_000_000_000  # fixed origin for the synthetic clock


def run_closed_loop(env: SyntheticEnvironment, config: LoopConfig,
                    out_dir: Optional[str] = None) -> LoopResult:
    """Serve -> log -> join -> impute -> train -> evaluate -> guard-railed
    promote, repeated for the configured number of epochs.

    The control arm stays on the frozen initial champion; training data is
    restricted to the treatment arm unless configured otherwise.
    """
    rng = np.random.default_rng(config.seed)
    factory_dir = os.path.join(out_dir, "rules") if out_dir else None
    if factory_dir is None:
        import tempfile

        factory_dir = tempfile.mkdtemp(prefix="banditd-rules-")
    factory = RuleFactory(factory_dir)
    ruleset = standard_rules()
    factory.publish(ruleset)

    cold = ColdStartScorer(version="coldstart-v0", rules_version=ruleset.version)
    registry = PolicyRegistry(
        champion=cold, rule_factory=factory,
        active_rules_version=ruleset.version,
        exploration_config=config.exploration, rails=config.rails)
    control_registry = PolicyRegistry(
        champion=cold, rule_factory=factory,
        active_rules_version=ruleset.version,
        exploration_config=config.exploration, rails=config.rails)

    reward_spec = RewardSpec(name=config.reward_spec_name,
                             weights={"resolution": 1.0},
                             allow_imputed=config.use_imputation, default=0.0)

    true_initial = env_decide_oracle(env, cold, config.exploration, ruleset)
    epochs: list[EpochStats] = []
    per_epoch_treatment: list[list[JoinedExample]] = []
    treatment_all: list[JoinedExample] = []
    control_all: list[JoinedExample] = []
    trainer_input_arms: list[str] = []
    log_dir = os.path.join(out_dir, "logs") if out_dir else None
    if log_dir is None:
        import tempfile

        log_dir = tempfile.mkdtemp(prefix="banditd-logs-")
    os.makedirs(log_dir, exist_ok=True)

    user_counter = 0
    for epoch in range(config.epochs):
        epoch_t0 = _SYNTH_T0_MS + epoch * 3_600_000
        tick = max(1, 600_000 // max(1, config.requests_per_epoch))
        dec_path = os.path.join(log_dir, segment_name("decision", epoch_t0))
        rew_path = os.path.join(log_dir, segment_name("reward", epoch_t0))
        dec_writer = SegmentWriter(dec_path, "decision", durable=False)
        rew_writer = SegmentWriter(rew_path, "reward", durable=False)
        now = {"ms": epoch_t0}
        pipeline = DecisionPipeline(registry, dec_writer, clock=lambda: now["ms"])
        control_pipeline = DecisionPipeline(control_registry, dec_writer,
                                            clock=lambda: now["ms"])

        serving_version = registry.champion_version
        n_treatment = n_control = 0
        for i in range(config.requests_per_epoch):
            now["ms"] = epoch_t0 + i * tick
            atom = env.sample_atom(rng)
            user_counter += 1
            request = env.request_for(atom, f"u{user_counter}")
            if rng.random() < config.control_fraction:
                arm = "control"
                _, event_id, record = control_pipeline.decide(request, arm=arm)
                n_control += 1
            else:
                arm = "treatment"
                _, event_id, record = pipeline.decide(request, arm=arm)
                n_treatment += 1
            outcome = env.outcome(atom, record.chosen_id, rng)
            for event in env.reward_events(event_id, record.timestamp_ms, outcome, rng):
                rew_writer.append_reward(event)
        dec_writer.close()
        rew_writer.close()

        joined = join([dec_path], [rew_path], JoinWindow()).examples
        epoch_treatment = [ex for ex in joined if ex.decision.arm == "treatment"]
        epoch_control = [ex for ex in joined if ex.decision.arm == "control"]
        per_epoch_treatment.append(epoch_treatment)
        treatment_all.extend(epoch_treatment)
        control_all.extend(epoch_control)

        if config.train_on == "treatment_only":
            window = per_epoch_treatment[-config.training_window_epochs:]
            train_pool = [ex for epoch_exs in window for ex in epoch_exs]
        else:
            train_pool = (treatment_all + control_all)[-(
                config.training_window_epochs * config.requests_per_epoch):]
        trainer_input_arms.extend({ex.decision.arm for ex in train_pool})

        candidate = None
        report: Optional[EvaluationReport] = None
        promoted = False
        reason: Optional[str] = None
        true_candidate = None
        if len(train_pool) >= 50:
            if config.use_imputation:
                observed = [ex for ex in train_pool if "resolution" in ex.rewards]
                labels = {ex.rewards["resolution"] for ex in observed}
                if len(labels) == 2:
                    model = fit_imputation(train_pool, config.imputation_allowlist,
                                           seed=config.seed + epoch)
                    train_pool = impute(model, train_pool)

            split = np.random.default_rng(config.seed * 1000 + epoch).permutation(len(train_pool))
            n_eval = max(20, int(len(train_pool) * config.eval_fraction))
            eval_idx = set(split[:n_eval].tolist())
            train_exs = [ex for i, ex in enumerate(train_pool) if i not in eval_idx]
            eval_exs = [ex for i, ex in enumerate(train_pool) if i in eval_idx]

            champion = registry.champion()
            version = f"loop-{epoch:03d}"
            if isinstance(champion, HashedLinearPolicy):
                init = champion
            else:
                init, _ = imitation_train(
                    train_exs, reward_spec, config.imitation_threshold,
                    config.training, version=version + "-warmstart",
                    rules_version=registry.active_rules_version)
            candidate, _ = offpolicy_train(
                train_exs, reward_spec, config.training, init=init,
                version=version, rules_version=registry.active_rules_version)
            registry.register(candidate)

            eval_config = EvalConfig(
                bootstrap_replicates=config.bootstrap_replicates,
                ci_level=config.rails.ci_level,
                ess_floor_fraction=config.rails.min_ess_fraction,
                seed=config.seed + epoch,
                diagnostic_min_records=100)
            report = evaluate(eval_exs, [candidate], [reward_spec], eval_config)[0]
            true_candidate = env_decide_oracle(env, candidate, config.exploration, ruleset)
            try:
                registry.promote(candidate.version, evaluation=report, mode="auto")
                promoted = True
            except PromotionRejected as exc:
                reason = str(exc)

        epochs.append(EpochStats(
            epoch=epoch,
            serving_version=serving_version,
            candidate_version=candidate.version if candidate else None,
            promoted=promoted,
            rejection_reason=reason,
            offline_estimate=report.estimates["capped_ips"] if report else None,
            ci_low=report.ci["low"] if report else None,
            ci_high=report.ci["high"] if report else None,
            ess=report.ess if report else None,
            n_eval=report.n if report else 0,
            true_value_serving=env_decide_oracle(
                env, registry.get(serving_version), config.exploration, ruleset),
            true_value_candidate=true_candidate,
            true_value_control=env_decide_oracle(
                env, control_registry.champion(), config.exploration, ruleset),
            n_treatment=n_treatment,
            n_control=n_control,
        ))

    final = registry.champion()
    result = LoopResult(
        config=config,
        epochs=epochs,
        initial_version=cold.version,
        final_version=final.version,
        true_value_initial=true_initial,
        true_value_final=env_decide_oracle(env, final, config.exploration, ruleset),
        treatment_examples=treatment_all,
        control_examples=control_all,
        trainer_input_arms=sorted(set(trainer_input_arms)),
        final_policy=final,
        out_dir=out_dir,
    )
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "loop-summary.json"), "w", encoding="utf-8") as fh:
            fh.write(logchannel.canonical_json(result.to_obj()) + "\n")
    return result


def ab_report(result: LoopResult, level: float = 0.90,
              n_replicates: int = 1000, seed: int = 0) -> dict:
    """Arm-level comparison plus a cross-validation of the offline estimator:
    the final treatment champion is evaluated on control-arm logs, whose
    logging policy it never influenced."""
    spec = RewardSpec(name="resolution", weights={"resolution": 1.0}, default=0.0)

    def arm_summary(examples: list[JoinedExample]) -> Optional[dict]:
        if not examples:
            return None
        rewards = np.array([scalar_reward(ex, spec) for ex in examples])
        rng_local = np.random.default_rng(seed)
        n = len(rewards)
        means = np.array([
            rewards[rng_local.integers(0, n, n)].mean() for _ in range(n_replicates)
        ])
        alpha = (1.0 - level) / 2.0
        low, high = np.quantile(means, [alpha, 1.0 - alpha])
        return {"n": n, "mean_reward": float(rewards.mean()),
                "ci": {"low": float(low), "high": float(high), "level": level}}

    out = {
        "control": arm_summary(result.control_examples),
        "treatment": arm_summary(result.treatment_examples),
        "final_version": result.final_version,
    }
    if not result.control_examples or not result.treatment_examples:
        out["note"] = "A/B comparison unavailable: loop ran without a control split"
        return out

    samples = ope.importance_weights(result.control_examples, result.final_policy, spec)
    estimate = ope.capped_ips(samples, 10.0)
    low, high = ope.bootstrap_ci(samples, lambda s: ope.capped_ips(s, 10.0),
                                 level=level, n_replicates=n_replicates, seed=seed)
    out["treatment_policy_on_control_logs"] = {
        "estimate": estimate,
        "ci": {"low": low, "high": high, "level": level},
        "ess": ope.effective_sample_size(samples),
    }
    return out
