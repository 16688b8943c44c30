"""Batch command-line front end.

Each verb is a thin wrapper over one module operation. Exit codes: 0 on
success, 1 on a domain error (bad data, failed guard rail), 2 on usage
errors (argparse's default).
"""
from __future__ import annotations

import argparse
import glob
import json
import os
import sys
from typing import Optional, Sequence

from banditd import ope
from banditd.config import load_service_config, write_config_template
from banditd.core import parse_reward_spec
from banditd.logchannel import (
    JoinWindow,
    canonical_json,
    join,
    read_joined,
    write_joined,
)
from banditd.policy import (
    HashedLinearPolicy,
    TrainingConfig,
    load_policy,
    offpolicy_train,
    save_policy,
)
from banditd.rules import RuleFactory, analyze_rule_change
from banditd.simenv import LoopConfig, SyntheticEnvironment, ab_report, run_closed_loop


def _expand(paths: Sequence[str], pattern: str) -> list[str]:
    out = []
    for p in paths:
        if os.path.isdir(p):
            out.extend(sorted(glob.glob(os.path.join(p, pattern))))
        else:
            out.append(p)
    return out


def _cmd_serve(args) -> int:
    from banditd.service import serve

    config = load_service_config(args.config)
    serve(config)
    return 0


def _cmd_join(args) -> int:
    decisions = _expand(args.decisions, "decisions-*.log")
    rewards = _expand(args.rewards, "rewards-*.log")
    if not decisions:
        print("join: no decision segments found", file=sys.stderr)
        return 1
    result = join(decisions, rewards, JoinWindow(duration_ms=args.window_ms))
    write_joined(result.examples, args.out)
    print(canonical_json(result.to_obj()))
    return 0


def _cmd_train(args) -> int:
    examples = read_joined(args.logs)
    spec = parse_reward_spec(args.reward, allow_imputed=args.allow_imputed)
    config = TrainingConfig(
        reg_lambda=args.reg_lambda,
        divergence=args.divergence,
        temperature=args.temperature,
        learning_rate=args.learning_rate,
        epochs=args.epochs,
        weight_cap=args.weight_cap,
        heldout_fraction=args.heldout_fraction,
        seed=args.seed,
    )
    init = load_policy(args.init) if args.init else None
    policy, report = offpolicy_train(
        examples, spec, config, init=init, version=args.version,
        rules_version=args.rules_version)
    out = args.out or f"policy-{policy.version}.bin"
    save_policy(policy, out)
    print(canonical_json({"policy": out, "version": policy.version,
                          **report.to_obj()}))
    return 0


def _cmd_evaluate(args) -> int:
    examples = read_joined(args.logs)
    targets = [load_policy(p) for p in args.policy]
    specs = [parse_reward_spec(r) for r in args.reward]
    config = ope.EvalConfig(cap=args.cap, ci_level=args.ci_level,
                            bootstrap_replicates=args.replicates, seed=args.seed)
    reports = ope.evaluate(examples, targets, specs, config)
    payload = [r.to_obj() for r in reports]
    if args.out:
        os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(canonical_json(payload) + "\n")
    print(canonical_json(payload))
    return 0


def _cmd_simulate(args) -> int:
    env = SyntheticEnvironment(seed=args.env_seed)
    config = LoopConfig(
        epochs=args.epochs,
        requests_per_epoch=args.requests,
        control_fraction=args.control_fraction,
        seed=args.seed,
    )
    result = run_closed_loop(env, config, out_dir=args.out)
    report = ab_report(result)
    with open(os.path.join(args.out, "ab-report.json"), "w", encoding="utf-8") as fh:
        fh.write(canonical_json(report) + "\n")
    if args.plot:
        chart = []
        for stats in result.epochs:
            if stats.offline_estimate is None:
                continue
            chart.append({
                "system": stats.candidate_version,
                "estimate": stats.offline_estimate,
                "low": stats.ci_low,
                "high": stats.ci_high,
                "baseline_delta_axis": True,
            })
        with open(os.path.join(args.out, "chart-data.json"), "w", encoding="utf-8") as fh:
            fh.write(canonical_json(chart) + "\n")
    print(canonical_json({
        "initial_version": result.initial_version,
        "final_version": result.final_version,
        "true_value_initial": result.true_value_initial,
        "true_value_final": result.true_value_final,
        "out": args.out,
    }))
    return 0


def _cmd_rules_diff(args) -> int:
    factory = RuleFactory(args.rules_dir)
    old = factory.build(args.old)
    new = factory.build(args.new)
    examples = read_joined(args.logs)
    policy = load_policy(args.policy)
    spec = parse_reward_spec(args.reward)
    report = analyze_rule_change(examples, old, new, policy, spec)
    payload = report.to_obj()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(canonical_json(payload) + "\n")
    print(canonical_json(payload))
    return 0


def _cmd_diagnose(args) -> int:
    decisions = []
    for path in _expand(args.logs, "decisions-*.log"):
        from banditd.logchannel import read_lines, decode_line
        from banditd.core import DecisionRecord

        for _, text in read_lines(path):
            try:
                record = decode_line(text)
            except ValueError:
                continue
            if isinstance(record, DecisionRecord):
                decisions.append(record)
    result = ope.randomization_diagnostic(decisions)
    print(canonical_json(result))
    healthy = result["p_value"] > 0.01 and result["degenerate_seed_fraction"] < 0.01
    return 0 if healthy else 1


def _cmd_promote(args) -> int:
    import httpx

    evaluation = None
    if args.evaluation:
        with open(args.evaluation, encoding="utf-8") as fh:
            payload = json.load(fh)
        evaluation = payload[0] if isinstance(payload, list) else payload
    headers = {}
    if args.token:
        headers["Authorization"] = f"Bearer {args.token}"
    body = {"version": args.version, "mode": args.mode}
    if args.operator:
        body["operator"] = args.operator
    if evaluation is not None:
        body["evaluation"] = evaluation
    response = httpx.post(f"{args.server}/v1/promote", json=body, headers=headers)
    print(response.text)
    return 0 if response.status_code == 200 else 1


def _cmd_init_config(args) -> int:
    write_config_template(args.out)
    print(args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="banditd")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("serve", help="run the decision service")
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_serve)

    p = sub.add_parser("join", help="join decision and reward segments")
    p.add_argument("--decisions", nargs="+", required=True)
    p.add_argument("--rewards", nargs="+", required=True)
    p.add_argument("--window-ms", type=int, default=86_400_000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_join)

    p = sub.add_parser("train", help="off-policy training from joined logs")
    p.add_argument("--logs", required=True)
    p.add_argument("--reward", default="resolution")
    p.add_argument("--allow-imputed", action="store_true")
    p.add_argument("--lambda", dest="reg_lambda", type=float, default=1.0)
    p.add_argument("--divergence", default="kl_pi_mu",
                   choices=["kl_pi_mu", "kl_mu_pi", "total_variation"])
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--learning-rate", type=float, default=0.1)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--weight-cap", type=float, default=10.0)
    p.add_argument("--heldout-fraction", type=float, default=0.25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init", default=None)
    p.add_argument("--version", default=None)
    p.add_argument("--rules-version", default="")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="counterfactual evaluation reports")
    p.add_argument("--logs", required=True)
    p.add_argument("--policy", nargs="+", required=True)
    p.add_argument("--reward", nargs="+", default=["resolution"])
    p.add_argument("--cap", type=float, default=10.0)
    p.add_argument("--ci-level", type=float, default=0.90)
    p.add_argument("--replicates", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("simulate", help="closed training loop on the synthetic environment")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--requests", type=int, default=5000)
    p.add_argument("--control-fraction", type=float, default=0.5)
    p.add_argument("--env-seed", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--plot", action="store_true",
                   help="also write error-bar chart data per trained system")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("rules-diff", help="offline impact of a rules change")
    p.add_argument("--old", required=True)
    p.add_argument("--new", required=True)
    p.add_argument("--rules-dir", default="./banditd-data/rules")
    p.add_argument("--logs", required=True)
    p.add_argument("--policy", required=True)
    p.add_argument("--reward", default="resolution")
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_rules_diff)

    p = sub.add_parser("diagnose", help="randomization health check on decision logs")
    p.add_argument("--logs", nargs="+", required=True)
    p.set_defaults(func=_cmd_diagnose)

    p = sub.add_parser("promote", help="promote a policy via a running service")
    p.add_argument("--server", default="http://127.0.0.1:8787")
    p.add_argument("--version", required=True)
    p.add_argument("--mode", default="manual", choices=["manual", "auto"])
    p.add_argument("--operator", default=None)
    p.add_argument("--evaluation", default=None,
                   help="path to an evaluation report (required for auto mode)")
    p.add_argument("--token", default=None)
    p.set_defaults(func=_cmd_promote)

    p = sub.add_parser("init-config", help="write a documented config template")
    p.add_argument("--out", default="banditd.conf")
    p.set_defaults(func=_cmd_init_config)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, FileNotFoundError) as exc:
        print(f"banditd {args.verb}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
