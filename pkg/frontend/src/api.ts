/** Thin fetch wrappers; every mutation round-trips through the server. */
import type { EvaluationReport, Health, PolicyInfo, PromotionEntry } from "./types.js";

// Same-origin by default; the integration tests point this at a spawned
// service instance.
let BASE = "";

export function configureApiBase(base: string): void {
  BASE = base;
}

async function getJson<T>(path: string): Promise<T> {
  const response = await fetch(BASE + path);
  if (!response.ok) {
    throw new Error(`${path}: ${response.status}`);
  }
  return (await response.json()) as T;
}

export function fetchReports(): Promise<EvaluationReport[]> {
  return getJson<EvaluationReport[]>("/v1/reports");
}

export function fetchHealth(): Promise<Health> {
  return getJson<Health>("/v1/health");
}

export function fetchHistory(): Promise<PromotionEntry[]> {
  return getJson<PromotionEntry[]>("/v1/history");
}

export function fetchPolicies(): Promise<PolicyInfo[]> {
  return getJson<PolicyInfo[]>("/v1/policies");
}

export interface MutationResult {
  ok: boolean;
  status: number;
  detail: string;
}

async function post(path: string, body: unknown, token: string): Promise<MutationResult> {
  const headers: Record<string, string> = { "Content-Type": "application/json" };
  if (token) {
    headers["Authorization"] = `Bearer ${token}`;
  }
  const response = await fetch(BASE + path, {
    method: "POST",
    headers,
    body: JSON.stringify(body),
  });
  let detail = "";
  try {
    const payload = await response.json();
    detail = typeof payload === "object" && payload !== null && "detail" in payload
      ? String((payload as { detail: unknown }).detail)
      : JSON.stringify(payload);
  } catch {
    detail = response.statusText;
  }
  return { ok: response.ok, status: response.status, detail };
}

export function promotePolicy(version: string, operator: string,
                              token: string): Promise<MutationResult> {
  return post("/v1/promote", { version, mode: "manual", operator }, token);
}

export function rollbackPolicy(version: string, operator: string,
                               token: string): Promise<MutationResult> {
  return post("/v1/rollback", { version, operator }, token);
}
