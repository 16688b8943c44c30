/**
 * Guard-rail badge logic.
 *
 * This mirrors the server's auto-promotion rule so the operator sees the
 * verdict before clicking promote, but it is display only: the server
 * remains authoritative and the fixture test pins 100% agreement with
 * recorded server outcomes.
 */
import type { EvaluationReport, GuardConfig } from "./types.js";

export interface Badge {
  pass: boolean;
  reasons: string[];
}

/** Champion baseline the server compares against: the logging policy's
 * mean reward on the same logs (estimate minus baseline_delta). */
export function championEstimate(report: EvaluationReport): number {
  return report.estimates.capped_ips - report.baseline_delta;
}

export function guardRailBadge(report: EvaluationReport, guard: GuardConfig): Badge {
  const reasons: string[] = [];
  const baseline = championEstimate(report);
  if (report.ci.low < baseline - guard.required_margin) {
    reasons.push("confidence lower bound below champion estimate minus margin");
  }
  if (report.ess < guard.min_ess_fraction * report.n) {
    reasons.push("insufficient effective sample size");
  }
  return { pass: reasons.length === 0, reasons };
}

/** A report is actionable when its interval excludes a zero baseline
 * delta, i.e. the evidence points one way. */
export function isActionable(report: EvaluationReport): boolean {
  const baseline = championEstimate(report);
  return report.ci.low > baseline || report.ci.high < baseline;
}
