"""Service configuration: a flat key = value file with environment
overrides.

Keys use dotted names; the override variable for a key replaces dots with
underscores and upper-cases it under the ``BANDITD_`` prefix, so
``exploration.temperature`` is overridden by ``BANDITD_EXPLORATION_TEMPERATURE``.
Lines starting with ``#`` are comments.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Optional

from banditd.core import ActionCandidate, FeatureVector, RewardSpec, parse_reward_spec
from banditd.exploration import ExplorationConfig, RankWeights
from banditd.pipeline import GuardRails

ENV_PREFIX = "BANDITD_"


def read_config_file(path: str) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{line_no}: expected key = value")
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def apply_env_overrides(values: dict[str, str],
                        environ: Optional[dict] = None) -> dict[str, str]:
    environ = os.environ if environ is None else environ
    out = dict(values)
    for key, value in environ.items():
        if key.startswith(ENV_PREFIX):
            config_key = key[len(ENV_PREFIX):].lower().replace("_", ".")
            out[config_key] = value
    return out


@dataclass
class ServiceConfig:
    listen: str = "127.0.0.1:8787"
    log_dir: str = "./banditd-data/logs"
    rules_dir: str = "./banditd-data/rules"
    policy_dir: str = "./banditd-data/policies"
    reports_dir: str = "./banditd-data/reports"
    rules_version: str = "rules-v1"
    champion: str = "coldstart-v0"
    fallback_action_id: str = "fallback-editorial"
    fallback_source: str = "editorial"
    join_window_ms: int = 86_400_000
    auth_token: str = ""
    console_dir: str = ""
    exploration: ExplorationConfig = field(default_factory=ExplorationConfig)
    rails: GuardRails = field(default_factory=GuardRails)
    reward_specs: tuple[RewardSpec, ...] = ()

    @property
    def host(self) -> str:
        return self.listen.rsplit(":", 1)[0]

    @property
    def port(self) -> int:
        return int(self.listen.rsplit(":", 1)[1])

    def fallback_candidate(self) -> ActionCandidate:
        return ActionCandidate(action_id=self.fallback_action_id,
                               features=FeatureVector(),
                               source=self.fallback_source)


_CONFIG_DOC = """\
# banditd service configuration. key = value, one per line.
# Every key can be overridden by BANDITD_<KEY> with dots as underscores.
#
# listen = 127.0.0.1:8787
# log_dir / rules_dir / policy_dir / reports_dir = data directories
# rules_version = active business-rules version (must exist in rules_dir)
# champion = policy version served at startup: coldstart-v0,
#            coldstart:<source>[,<source>...], or a policy file basename
# fallback_action_id / fallback_source = action served when no action is legal
# join_window_ms = reward attachment window
# auth_token = static bearer token required on promote/rollback
# console_dir = optional static directory served at /console
# exploration.strategy = epsilon_greedy | rank_weight | softmax
# exploration.epsilon / exploration.temperature / exploration.new_action_cap
# exploration.rank_weights = comma floats, non-increasing (e.g. 8,4,2,1)
# exploration.flat_from = 1-based rank where the weights go flat
# guard.min_ess_fraction / guard.ci_level / guard.required_margin
# reward_specs = semicolon-separated reward expressions
#                (e.g. resolution; resolution-0.5*escalation)
"""


def parse_service_config(values: dict[str, str]) -> ServiceConfig:
    config = ServiceConfig()

    def get(key: str, default):
        return values.get(key, default)

    config.listen = get("listen", config.listen)
    config.log_dir = get("log_dir", config.log_dir)
    config.rules_dir = get("rules_dir", config.rules_dir)
    config.policy_dir = get("policy_dir", config.policy_dir)
    config.reports_dir = get("reports_dir", config.reports_dir)
    config.rules_version = get("rules_version", config.rules_version)
    config.champion = get("champion", config.champion)
    config.fallback_action_id = get("fallback_action_id", config.fallback_action_id)
    config.fallback_source = get("fallback_source", config.fallback_source)
    config.join_window_ms = int(get("join_window_ms", config.join_window_ms))
    config.auth_token = get("auth_token", config.auth_token)
    config.console_dir = get("console_dir", config.console_dir)

    weights = RankWeights()
    if "exploration.rank_weights" in values:
        u = tuple(float(x) for x in values["exploration.rank_weights"].split(","))
        flat_from = int(values.get("exploration.flat_from", len(u)))
        weights = RankWeights(u=u, flat_from=flat_from)
    config.exploration = ExplorationConfig(
        strategy=get("exploration.strategy", "softmax"),
        epsilon=float(get("exploration.epsilon", 0.1)),
        temperature=float(get("exploration.temperature", 1.0)),
        rank_weights=weights,
        new_action_cap=float(get("exploration.new_action_cap", 0.05)),
    )
    config.rails = GuardRails(
        min_ess_fraction=float(get("guard.min_ess_fraction", 0.01)),
        ci_level=float(get("guard.ci_level", 0.90)),
        required_margin=float(get("guard.required_margin", 0.0)),
    )
    specs = get("reward_specs", "resolution")
    config.reward_specs = tuple(
        parse_reward_spec(s.strip()) for s in specs.split(";") if s.strip()
    )
    return config


def load_service_config(path: Optional[str] = None,
                        environ: Optional[dict] = None) -> ServiceConfig:
    values = read_config_file(path) if path else {}
    return parse_service_config(apply_env_overrides(values, environ))


def write_config_template(path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_CONFIG_DOC)
