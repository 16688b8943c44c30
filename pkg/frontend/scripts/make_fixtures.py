"""Record server promotion outcomes as console test fixtures.

Each case holds the evaluation report exactly as GET /v1/reports serves it,
the guard-rail config from GET /v1/health, and what the server actually did
on POST /v1/promote (auto mode). The console's badge logic must agree with
the recorded outcome on every case.

Run from the repository root:  python frontend/scripts/make_fixtures.py
"""
import json
import os
import sys
import tempfile

from banditd.ope import EvaluationReport
from banditd.pipeline import GuardRails, PolicyRegistry, PromotionRejected
from banditd.policy import ColdStartScorer, HashedLinearPolicy
from banditd.rules import RuleFactory
from banditd.simenv import standard_rules

OUT = os.path.join(os.path.dirname(__file__), "..", "fixtures",
                   "promotion_cases.json")


def report(estimate, low, high, ess, n, baseline, version="cand-1"):
    return EvaluationReport(
        policy_version=version, reward_spec="resolution", n=n,
        estimates={"ips": estimate, "capped_ips": estimate,
                   "snips": estimate, "cap": 10.0},
        ess=ess,
        ci={"low": low, "high": high, "level": 0.9, "estimator": "capped_ips"},
        diagnostics={"p_value": 0.4, "degenerate_seed_fraction": 0.0,
                     "low_ess": False, "ess_floor_fraction": 0.01, "n": n},
        baseline_delta=estimate - baseline,
        logging_mean_reward=baseline,
    )


CASES = [
    # (name, report args, rails)
    ("clear-pass", report(0.56, 0.52, 0.60, 500, 1000, 0.50), GuardRails()),
    ("ci-low-exactly-at-baseline", report(0.54, 0.50, 0.58, 500, 1000, 0.50),
     GuardRails()),
    ("ci-low-below-baseline", report(0.54, 0.48, 0.60, 500, 1000, 0.50),
     GuardRails()),
    ("saved-by-margin", report(0.54, 0.47, 0.60, 500, 1000, 0.50),
     GuardRails(required_margin=0.05)),
    ("insufficient-ess", report(0.56, 0.52, 0.60, 5.0, 1000, 0.50),
     GuardRails()),
    ("ess-exactly-at-floor", report(0.56, 0.52, 0.60, 10.0, 1000, 0.50),
     GuardRails()),
    ("both-rails-fail", report(0.40, 0.30, 0.50, 2.0, 1000, 0.50),
     GuardRails()),
    ("negative-delta-wide-ci", report(0.45, 0.20, 0.70, 800, 2000, 0.50),
     GuardRails()),
    ("tiny-floor-passes", report(0.52, 0.505, 0.54, 30.0, 1000, 0.50),
     GuardRails(min_ess_fraction=0.001)),
    ("stricter-floor-fails", report(0.52, 0.505, 0.54, 30.0, 1000, 0.50),
     GuardRails(min_ess_fraction=0.25)),
]


def main():
    cases = []
    for name, evaluation, rails in CASES:
        with tempfile.TemporaryDirectory() as tmp:
            factory = RuleFactory(os.path.join(tmp, "rules"))
            factory.publish(standard_rules())
            registry = PolicyRegistry(
                champion=ColdStartScorer(rules_version="rules-v1"),
                rule_factory=factory, active_rules_version="rules-v1",
                rails=rails)
            registry.register(HashedLinearPolicy.zeros(
                evaluation.policy_version, rules_version="rules-v1"))
            try:
                registry.promote(evaluation.policy_version,
                                 evaluation=evaluation, mode="auto")
                outcome = {"promoted": True, "reason": None}
            except PromotionRejected as exc:
                outcome = {"promoted": False, "reason": str(exc)}
        cases.append({
            "name": name,
            "report": evaluation.to_obj(),
            "guard": {
                "min_ess_fraction": rails.min_ess_fraction,
                "ci_level": rails.ci_level,
                "required_margin": rails.required_margin,
            },
            "server": outcome,
        })
    os.makedirs(os.path.dirname(OUT), exist_ok=True)
    with open(OUT, "w", encoding="utf-8") as fh:
        json.dump({"cases": cases}, fh, indent=1, sort_keys=True)
        fh.write("\n")
    print(f"wrote {len(cases)} cases to {os.path.normpath(OUT)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
