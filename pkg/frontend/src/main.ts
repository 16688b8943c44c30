/**
 * Console entry point: poll the service, render reports with guard-rail
 * badges, and perform manual promote/rollback after confirmation.
 */
import { fetchHealth, fetchHistory, fetchReports, promotePolicy, rollbackPolicy } from "./api.js";
import { guardRailBadge } from "./badge.js";
import { errorBars, errorBarSvg, essGauge, gaugeSvg, escapeXml } from "./charts.js";
import { renderNumber, renderTimestamp } from "./format.js";
import type { EvaluationReport, GuardConfig, Health, PromotionEntry } from "./types.js";

const POLL_MS = 10_000;

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

function token(): string {
  return (el("token") as HTMLInputElement).value;
}

function operator(): string {
  return (el("operator") as HTMLInputElement).value || "console";
}

function toast(text: string, ok: boolean): void {
  const box = el("toast");
  box.textContent = text;
  box.className = ok ? "toast ok" : "toast err";
  setTimeout(() => { box.className = "toast hidden"; }, 6000);
}

function badgeHtml(report: EvaluationReport, guard: GuardConfig): string {
  const badge = guardRailBadge(report, guard);
  if (badge.pass) {
    return `<span class="badge pass">rails pass</span>`;
  }
  return badge.reasons
    .map((r) => `<span class="badge fail">${escapeXml(r)}</span>`)
    .join(" ");
}

function reportRow(report: EvaluationReport, guard: GuardConfig): string {
  const gauge = essGauge(report.ess, report.n, guard.min_ess_fraction);
  const diag = report.diagnostics;
  return `
    <tr>
      <td class="mono">${escapeXml(report.policy_version)}</td>
      <td class="mono">${escapeXml(report.reward_spec)}</td>
      <td class="mono">${renderNumber(report.estimates.capped_ips)}</td>
      <td class="mono">[${renderNumber(report.ci.low)}, ${renderNumber(report.ci.high)}]</td>
      <td class="mono">${renderNumber(report.baseline_delta)}</td>
      <td>${gaugeSvg(gauge, `ESS ${renderNumber(report.ess)} of ${report.n}`)}</td>
      <td>${badgeHtml(report, guard)}</td>
      <td>
        <button class="promote" data-version="${escapeXml(report.policy_version)}"
                data-pass="${guardRailBadge(report, guard).pass}">promote…</button>
      </td>
    </tr>
    <tr class="diag-row"><td colspan="8" class="diag">
      randomization p-value ${renderNumber(diag.p_value)} ·
      degenerate seeds ${renderNumber(diag.degenerate_seed_fraction)}
      ${diag.low_ess ? '· <span class="badge fail">low effective sample size</span>' : ""}
    </td></tr>`;
}

function historyRow(entry: PromotionEntry): string {
  return `
    <li class="${entry.action}">
      <span class="mono">${renderTimestamp(entry.ts)}</span>
      <strong>${entry.action}</strong>
      <span class="mono">${escapeXml(entry.version)}</span>
      <em>${escapeXml(entry.mode)}</em>
      ${entry.operator ? `by ${escapeXml(entry.operator)}` : ""}
      <button class="rollback" data-version="${escapeXml(entry.version)}">roll back to…</button>
    </li>`;
}

async function refresh(): Promise<void> {
  let health: Health;
  try {
    health = await fetchHealth();
  } catch (error) {
    el("status").textContent = `service unreachable: ${String(error)}`;
    return;
  }
  el("status").textContent =
    `champion ${health.champion} · rules ${health.rules_version}`;

  const [reports, history] = await Promise.all([fetchReports(), fetchHistory()]);
  const guard = health.guard;

  el("chart").innerHTML = errorBarSvg(errorBars(reports));
  el("reports").innerHTML = reports.length
    ? reports.map((r) => reportRow(r, guard)).join("")
    : `<tr><td colspan="8" class="empty">no evaluation reports yet</td></tr>`;
  el("history").innerHTML = history.slice().reverse().map(historyRow).join("");

  document.querySelectorAll<HTMLButtonElement>("button.promote").forEach((button) => {
    button.onclick = async () => {
      const version = button.dataset.version ?? "";
      const railNote = button.dataset.pass === "true"
        ? "Guard rails PASS for this report."
        : "Guard rails FAIL for this report; manual promotion overrides them.";
      if (!window.confirm(`Promote ${version} to champion?\n\n${railNote}`)) {
        return;
      }
      const result = await promotePolicy(version, operator(), token());
      toast(result.ok ? `promoted ${version}` : result.detail, result.ok);
      await refresh();
    };
  });
  document.querySelectorAll<HTMLButtonElement>("button.rollback").forEach((button) => {
    button.onclick = async () => {
      const version = button.dataset.version ?? "";
      if (!window.confirm(`Roll back champion to ${version}?`)) {
        return;
      }
      const result = await rollbackPolicy(version, operator(), token());
      toast(result.ok ? `rolled back to ${version}` : result.detail, result.ok);
      await refresh();
    };
  });
}

export function start(): void {
  void refresh();
  setInterval(() => void refresh(), POLL_MS);
}

if (typeof document !== "undefined" && document.getElementById("reports")) {
  start();
}
