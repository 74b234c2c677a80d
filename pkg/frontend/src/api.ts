// Typed client for the service's REST routes. All domain state changes go
// through here; the UI layer holds no authority of its own.

import type {
  AuditRecord,
  ComparisonView,
  Decision,
  GraphDocument,
  GuardrailStats,
  IncidentDetail,
  IncidentRow,
  ScenarioRecord,
  Session,
  WorkflowRecord,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    private baseUrl: string,
    private session: Session,
    private fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const sep = path.includes("?") ? "&" : "?";
    const url = `${this.baseUrl}${path}${sep}tenant=${encodeURIComponent(this.session.tenant)}`;
    const headers: Record<string, string> = { "content-type": "application/json" };
    if (this.session.token) {
      headers["authorization"] = `Bearer ${this.session.token}`;
    }
    const response = await this.fetchImpl(url, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) {
      let detail = `${response.status}`;
      try {
        const data = await response.json();
        detail = data.detail ?? JSON.stringify(data);
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  listIncidents(params: { severity?: string; sort?: string } = {}): Promise<{ incidents: IncidentRow[] }> {
    const query = new URLSearchParams();
    if (params.severity) query.set("severity", params.severity);
    if (params.sort) query.set("sort", params.sort);
    const suffix = query.toString() ? `?${query.toString()}` : "";
    return this.request("GET", `/api/v1/incidents${suffix}`);
  }

  incidentDetail(incidentId: string): Promise<IncidentDetail> {
    return this.request("GET", `/api/v1/incidents/${encodeURIComponent(incidentId)}`);
  }

  pivot(key: string): Promise<{ incident_ids: string[] }> {
    return this.request("GET", `/api/v1/incidents/pivot?key=${encodeURIComponent(key)}`);
  }

  listWorkflows(): Promise<{ workflows: WorkflowRecord[] }> {
    return this.request("GET", "/api/v1/workflows");
  }

  workflow(workflowId: string): Promise<{ workflow: WorkflowRecord }> {
    return this.request("GET", `/api/v1/workflows/${encodeURIComponent(workflowId)}`);
  }

  startWorkflow(features: Record<string, unknown>, logs: unknown[] = []): Promise<{ workflow: WorkflowRecord }> {
    return this.request("POST", "/api/v1/workflows", { features, logs });
  }

  decide(
    workflowId: string,
    checkpoint: 1 | 2,
    decision: Decision,
    payload?: Record<string, unknown>,
  ): Promise<{ workflow: WorkflowRecord }> {
    return this.request("POST", `/api/v1/workflows/${encodeURIComponent(workflowId)}/decide`, {
      checkpoint,
      decision,
      payload,
    });
  }

  listScenarios(): Promise<{ scenarios: ScenarioRecord[] }> {
    return this.request("GET", "/api/v1/scenarios");
  }

  scenario(scenarioId: string): Promise<{ scenario: ScenarioRecord }> {
    return this.request("GET", `/api/v1/scenarios/${encodeURIComponent(scenarioId)}`);
  }

  scenarioGraph(scenarioId: string): Promise<{ graph: GraphDocument }> {
    return this.request("GET", `/api/v1/scenarios/${encodeURIComponent(scenarioId)}/graph`);
  }

  setValidation(
    scenarioId: string,
    status: "Validated" | "Invalidated" | "Pending",
    notes: string,
  ): Promise<{ scenario: ScenarioRecord; history: unknown[] }> {
    return this.request("POST", `/api/v1/scenarios/${encodeURIComponent(scenarioId)}/validation`, {
      status,
      notes,
    });
  }

  compare(a: string, b: string): Promise<ComparisonView> {
    return this.request(
      "GET",
      `/api/v1/scenarios/${encodeURIComponent(a)}/compare/${encodeURIComponent(b)}`,
    );
  }

  stixUrl(scenarioId: string): string {
    return `${this.baseUrl}/api/v1/scenarios/${encodeURIComponent(scenarioId)}/stix?tenant=${encodeURIComponent(this.session.tenant)}`;
  }

  audit(params: { status?: string; tool_name?: string } = {}): Promise<{ records: AuditRecord[] }> {
    const query = new URLSearchParams(params as Record<string, string>);
    const suffix = query.toString() ? `?${query.toString()}` : "";
    return this.request("GET", `/api/v1/audit${suffix}`);
  }

  guardrailStats(): Promise<GuardrailStats> {
    return this.request("GET", "/api/v1/guardrail/stats");
  }
}

export async function login(
  baseUrl: string,
  username: string,
  password: string,
  tenant: string,
  fetchImpl: FetchLike = (url, init) => fetch(url, init),
): Promise<Session> {
  const response = await fetchImpl(`${baseUrl}/api/v1/auth/login`, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify({ username, password }),
  });
  if (!response.ok) {
    throw new ApiError(response.status, "login failed");
  }
  const data = await response.json();
  return { username: data.username, role: data.role, token: data.token, tenant };
}
