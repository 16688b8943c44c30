/**
 * End-to-end test against a real service instance: the console's API layer
 * must round-trip manual promotions into the promotion history, surface
 * server rejections verbatim, and read reports exactly as written.
 */
import { spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, writeFileSync, mkdirSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import {
  configureApiBase,
  fetchHealth,
  fetchHistory,
  fetchPolicies,
  fetchReports,
  promotePolicy,
  rollbackPolicy,
} from "./api.js";

const PORT = 8961;
const BASE = `http://127.0.0.1:${PORT}`;
let service: ChildProcess | null = null;

const REPORT = {
  policy_version: "cand-9",
  reward_spec: "resolution",
  n: 1000,
  estimates: { ips: 0.56, capped_ips: 0.56, snips: 0.56, cap: 10.0 },
  ess: 500.0,
  ci: { low: 0.52, high: 0.6, level: 0.9, estimator: "capped_ips" },
  diagnostics: { p_value: 0.4, degenerate_seed_fraction: 0.0 },
  baseline_delta: 0.06,
  logging_mean_reward: 0.5,
};

async function waitForHealth(timeoutMs: number): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  for (;;) {
    try {
      const health = await fetchHealth();
      if (health.status === "ok") return;
    } catch {
      // not up yet
    }
    if (Date.now() > deadline) {
      throw new Error("service did not come up");
    }
    await new Promise((resolve) => setTimeout(resolve, 250));
  }
}

beforeAll(async () => {
  const dir = mkdtempSync(join(tmpdir(), "banditd-console-"));
  const reportsDir = join(dir, "reports");
  mkdirSync(reportsDir, { recursive: true });
  writeFileSync(join(reportsDir, "run1.json"), JSON.stringify([REPORT]));
  writeFileSync(join(dir, "banditd.conf"), [
    `listen = 127.0.0.1:${PORT}`,
    `log_dir = ${join(dir, "logs")}`,
    `rules_dir = ${join(dir, "rules")}`,
    `policy_dir = ${join(dir, "policies")}`,
    `reports_dir = ${reportsDir}`,
    "champion = coldstart:dialog",
    "auth_token = console-test-token",
    "",
  ].join("\n"));

  service = spawn("python3", ["-m", "banditd.cli", "serve", "--config",
                              join(dir, "banditd.conf")],
                  { stdio: "ignore" });
  configureApiBase(BASE);
  await waitForHealth(20_000);
}, 30_000);

afterAll(() => {
  service?.kill();
});

describe("console against a live service", () => {
  it("reads reports exactly as the service publishes them", async () => {
    const reports = await fetchReports();
    expect(reports).toEqual([REPORT]);
  });

  it("manual promote round-trips and appears in history", async () => {
    const health = await fetchHealth();
    const champion = health.champion;
    const before = (await fetchHistory()).length;

    const result = await promotePolicy(champion, "consuela", "console-test-token");
    expect(result.ok).toBe(true);

    const history = await fetchHistory();
    expect(history.length).toBe(before + 1);
    const last = history[history.length - 1];
    expect(last.action).toBe("promote");
    expect(last.mode).toBe("manual");
    expect(last.operator).toBe("consuela");
    expect(last.version).toBe(champion);

    const policies = await fetchPolicies();
    expect(policies.find((p) => p.version === champion)?.champion).toBe(true);
  });

  it("surfaces server rejections verbatim without state changes", async () => {
    const before = (await fetchHistory()).length;
    const result = await promotePolicy("no-such-version", "consuela",
                                       "console-test-token");
    expect(result.ok).toBe(false);
    expect(result.status).toBe(404);
    expect(result.detail).toContain("no-such-version");
    expect((await fetchHistory()).length).toBe(before);
  });

  it("rejects mutations without the bearer token", async () => {
    const health = await fetchHealth();
    const result = await promotePolicy(health.champion, "consuela", "");
    expect(result.ok).toBe(false);
    expect(result.status).toBe(401);
  });

  it("rolls back through the api", async () => {
    const health = await fetchHealth();
    const result = await rollbackPolicy(health.champion, "consuela",
                                        "console-test-token");
    expect(result.ok).toBe(true);
    const history = await fetchHistory();
    expect(history[history.length - 1].action).toBe("rollback");
  });
});
