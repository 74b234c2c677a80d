// In-memory mock of the service REST surface, with controllable response
// timing so tests can observe the in-flight state of a decision.

import type { FetchLike } from "../src/api.js";
import type { WorkflowRecord } from "../src/types.js";

export interface Deferred<T> {
  promise: Promise<T>;
  resolve: (value: T) => void;
  reject: (error: unknown) => void;
}

export function deferred<T>(): Deferred<T> {
  let resolve!: (value: T) => void;
  let reject!: (error: unknown) => void;
  const promise = new Promise<T>((res, rej) => {
    resolve = res;
    reject = rej;
  });
  return { promise, resolve, reject };
}

export function workflowFixture(overrides: Partial<WorkflowRecord> = {}): WorkflowRecord {
  return {
    workflow_id: "wf-test00000001",
    tenant: "default",
    phase: "Awaiting_Classification_Review",
    detection: { label: "Exploitation", confidence: 0.95 },
    classification: { narrative: "Likely exploitation of the SSH service", priority: "high" },
    proposed_rules: [],
    deployed_rule_ids: [],
    event_log: [
      { timestamp: "2026-02-23T05:00:00Z", kind: "phase", message: "classify threat" },
      { timestamp: "2026-02-23T05:00:01Z", kind: "guardrail_warn",
        message: "analyze_log[out]: Credential in output" },
    ],
    human_decisions: [],
    ...overrides,
  };
}

type Route = (url: URL, body: unknown) => { status?: number; body: unknown } | Promise<{ status?: number; body: unknown }>;

export class MockService {
  routes = new Map<string, Route>();
  calls: Array<{ method: string; path: string; body: unknown }> = [];

  on(method: string, path: string, handler: Route): void {
    this.routes.set(`${method} ${path}`, handler);
  }

  fetch: FetchLike = async (rawUrl, init) => {
    const url = new URL(rawUrl, "http://mock.test");
    const method = (init?.method ?? "GET").toUpperCase();
    const body = init?.body ? JSON.parse(String(init.body)) : undefined;
    this.calls.push({ method, path: url.pathname, body });
    const handler = this.routes.get(`${method} ${url.pathname}`);
    if (!handler) {
      return new Response(JSON.stringify({ detail: `no mock for ${method} ${url.pathname}` }), {
        status: 404,
        headers: { "content-type": "application/json" },
      });
    }
    const result = await handler(url, body);
    return new Response(JSON.stringify(result.body), {
      status: result.status ?? 200,
      headers: { "content-type": "application/json" },
    });
  };
}

export async function flushMicrotasks(times = 4): Promise<void> {
  for (let i = 0; i < times; i++) {
    await Promise.resolve();
  }
}
