/**
 * Pure chart geometry: error bars on a baseline-delta axis and the
 * effective-sample-size gauge. Functions return data or SVG strings so
 * they are testable without a DOM.
 */
import type { EvaluationReport } from "./types.js";
import { renderNumber } from "./format.js";

export interface ErrorBar {
  label: string;
  /** displayed values, verbatim from the payload */
  estimate: number;
  low: number;
  high: number;
  /** deltas against the logging baseline, used for geometry only */
  deltaMid: number;
  deltaLow: number;
  deltaHigh: number;
  actionable: boolean;
}

export function errorBars(reports: EvaluationReport[]): ErrorBar[] {
  return reports.map((r) => {
    const baseline = r.estimates.capped_ips - r.baseline_delta;
    return {
      label: `${r.policy_version} / ${r.reward_spec}`,
      estimate: r.estimates.capped_ips,
      low: r.ci.low,
      high: r.ci.high,
      deltaMid: r.baseline_delta,
      deltaLow: r.ci.low - baseline,
      deltaHigh: r.ci.high - baseline,
      actionable: r.ci.low > baseline || r.ci.high < baseline,
    };
  });
}

export interface GaugeGeometry {
  fraction: number;       // ess / n, clamped to [0, 1]
  railFraction: number;   // the guard-rail floor, same scale
  belowRail: boolean;
}

export function essGauge(ess: number, n: number, minEssFraction: number): GaugeGeometry {
  const fraction = Math.max(0, Math.min(1, n > 0 ? ess / n : 0));
  return {
    fraction,
    railFraction: Math.max(0, Math.min(1, minEssFraction)),
    belowRail: ess < minEssFraction * n,
  };
}

const WIDTH = 560;
const BAR_AREA_HEIGHT = 180;
const MARGIN = { top: 16, bottom: 42, left: 54, right: 12 };

function scale(value: number, lo: number, hi: number): number {
  const span = hi - lo || 1;
  return MARGIN.top + BAR_AREA_HEIGHT * (1 - (value - lo) / span);
}

/** SVG error-bar chart over the baseline-delta axis (zero line = the
 * logging policy), one bar per report, matching the classic two-system
 * comparison layout. */
export function errorBarSvg(bars: ErrorBar[]): string {
  if (bars.length === 0) {
    return `<svg class="chart" viewBox="0 0 ${WIDTH} 60"><text x="10" y="30">no reports yet</text></svg>`;
  }
  const values = bars.flatMap((b) => [b.deltaLow, b.deltaHigh, 0]);
  const lo = Math.min(...values);
  const hi = Math.max(...values);
  const pad = 0.1 * (hi - lo || 1);
  const [axisLo, axisHi] = [lo - pad, hi + pad];
  const slot = (WIDTH - MARGIN.left - MARGIN.right) / bars.length;
  const height = MARGIN.top + BAR_AREA_HEIGHT + MARGIN.bottom;

  const zeroY = scale(0, axisLo, axisHi);
  const parts: string[] = [];
  parts.push(`<svg class="chart" viewBox="0 0 ${WIDTH} ${height}" role="img">`);
  parts.push(`<line class="axis" x1="${MARGIN.left}" y1="${zeroY}" x2="${WIDTH - MARGIN.right}" y2="${zeroY}"/>`);
  parts.push(`<text class="axis-label" x="${MARGIN.left - 6}" y="${zeroY + 4}" text-anchor="end">0</text>`);
  bars.forEach((bar, i) => {
    const x = MARGIN.left + slot * (i + 0.5);
    const yMid = scale(bar.deltaMid, axisLo, axisHi);
    const yLow = scale(bar.deltaLow, axisLo, axisHi);
    const yHigh = scale(bar.deltaHigh, axisLo, axisHi);
    const cls = bar.actionable ? "bar actionable" : "bar";
    const barTop = Math.min(yMid, zeroY);
    const barHeight = Math.abs(zeroY - yMid) || 1;
    parts.push(`<rect class="${cls}" x="${x - slot * 0.22}" y="${barTop}" width="${slot * 0.44}" height="${barHeight}"/>`);
    parts.push(`<line class="whisker" x1="${x}" y1="${yLow}" x2="${x}" y2="${yHigh}"/>`);
    parts.push(`<line class="whisker" x1="${x - 8}" y1="${yLow}" x2="${x + 8}" y2="${yLow}"/>`);
    parts.push(`<line class="whisker" x1="${x - 8}" y1="${yHigh}" x2="${x + 8}" y2="${yHigh}"/>`);
    parts.push(`<text class="bar-label" x="${x}" y="${MARGIN.top + BAR_AREA_HEIGHT + 16}" text-anchor="middle">${escapeXml(bar.label)}</text>`);
    parts.push(`<text class="bar-value" x="${x}" y="${MARGIN.top + BAR_AREA_HEIGHT + 32}" text-anchor="middle">${renderNumber(bar.estimate)}</text>`);
  });
  parts.push("</svg>");
  return parts.join("");
}

export function gaugeSvg(gauge: GaugeGeometry, label: string): string {
  const width = 220;
  const barWidth = width - 20;
  const x = 10;
  const fillWidth = barWidth * gauge.fraction;
  const railX = x + barWidth * gauge.railFraction;
  const cls = gauge.belowRail ? "gauge-fill low" : "gauge-fill";
  return [
    `<svg class="gauge" viewBox="0 0 ${width} 46" role="img">`,
    `<rect class="gauge-track" x="${x}" y="10" width="${barWidth}" height="14"/>`,
    `<rect class="${cls}" x="${x}" y="10" width="${fillWidth}" height="14"/>`,
    `<line class="gauge-rail" x1="${railX}" y1="4" x2="${railX}" y2="30"/>`,
    `<text class="gauge-label" x="${x}" y="42">${escapeXml(label)}</text>`,
    "</svg>",
  ].join("");
}

export function escapeXml(text: string): string {
  return text.replace(/[<>&"']/g, (c) => ({
    "<": "&lt;", ">": "&gt;", "&": "&amp;", '"': "&quot;", "'": "&#39;",
  })[c] as string);
}
