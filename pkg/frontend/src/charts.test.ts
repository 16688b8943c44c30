import { describe, expect, it } from "vitest";
import { errorBars, errorBarSvg, essGauge, gaugeSvg } from "./charts.js";
import type { EvaluationReport } from "./types.js";
import fixtures from "../fixtures/promotion_cases.json";

const reports = (fixtures as { cases: { report: EvaluationReport }[] })
  .cases.map((c) => c.report);

describe("error bars", () => {
  it("produces one bar per report with verbatim payload values", () => {
    const bars = errorBars(reports);
    expect(bars).toHaveLength(reports.length);
    bars.forEach((bar, i) => {
      expect(bar.estimate).toBe(reports[i].estimates.capped_ips);
      expect(bar.low).toBe(reports[i].ci.low);
      expect(bar.high).toBe(reports[i].ci.high);
      expect(bar.deltaMid).toBe(reports[i].baseline_delta);
      expect(bar.deltaHigh).toBeGreaterThanOrEqual(bar.deltaLow);
    });
  });

  it("marks intervals excluding the baseline as actionable", () => {
    const bars = errorBars(reports);
    const byName = Object.fromEntries(bars.map((b, i) => [i, b]));
    // fixture 0 (clear-pass) has ci.low above the baseline
    expect(byName[0].actionable).toBe(true);
  });

  it("renders svg with a whisker pair and a bar per report", () => {
    const svg = errorBarSvg(errorBars(reports.slice(0, 3)));
    expect(svg.startsWith("<svg")).toBe(true);
    expect(svg.match(/<rect class="bar/g)).toHaveLength(3);
    expect((svg.match(/<line class="whisker"/g) ?? []).length).toBe(9);
  });

  it("renders an empty state", () => {
    expect(errorBarSvg([])).toContain("no reports yet");
  });
});

describe("ess gauge", () => {
  it("positions the rail and flags below-floor values", () => {
    const low = essGauge(5, 1000, 0.01);
    expect(low.belowRail).toBe(true);
    expect(low.fraction).toBeCloseTo(0.005, 12);
    expect(low.railFraction).toBeCloseTo(0.01, 12);

    const fine = essGauge(500, 1000, 0.01);
    expect(fine.belowRail).toBe(false);
    expect(fine.fraction).toBeCloseTo(0.5, 12);
  });

  it("clamps to the track", () => {
    expect(essGauge(5000, 100, 0.01).fraction).toBe(1);
    expect(essGauge(0, 0, 0.01).fraction).toBe(0);
  });

  it("renders the rail marker", () => {
    const svg = gaugeSvg(essGauge(50, 1000, 0.01), "ESS 50 of 1000");
    expect(svg).toContain("gauge-rail");
    expect(svg).toContain("ESS 50 of 1000");
  });
});
