/** Payload shapes of the banditd HTTP API, mirrored verbatim. */

export interface ConfidenceInterval {
  low: number;
  high: number;
  level: number;
  estimator?: string;
}

export interface Diagnostics {
  p_value: number | null;
  degenerate_seed_fraction: number | null;
  low_ess?: boolean;
  ess_floor_fraction?: number;
  n?: number;
  note?: string;
}

export interface EvaluationReport {
  policy_version: string;
  reward_spec: string;
  n: number;
  estimates: {
    ips: number;
    capped_ips: number;
    snips: number | null;
    cap: number;
  };
  ess: number;
  ci: ConfidenceInterval;
  diagnostics: Diagnostics;
  baseline_delta: number;
  logging_mean_reward: number;
}

export interface GuardConfig {
  min_ess_fraction: number;
  ci_level: number;
  required_margin: number;
}

export interface Health {
  status: string;
  champion: string;
  rules_version: string;
  guard: GuardConfig;
}

export interface PromotionEntry {
  ts: number;
  action: "promote" | "rollback";
  version: string;
  mode: string;
  operator: string | null;
  previous: string | null;
}

export interface PolicyInfo {
  version: string;
  champion: boolean;
}
