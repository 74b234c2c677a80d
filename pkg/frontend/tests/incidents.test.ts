import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import type { IncidentRow, Session } from "../src/types.js";
import { createIncidentExplorer } from "../src/views/incidents.js";
import { createPolicyDashboard } from "../src/views/policy.js";
import { MockService } from "./mock_service.js";

const SESSION: Session = { username: "op", role: "Operator", token: "t", tenant: "default" };

function incidentFixture(id: string, score: number, severity: IncidentRow["severity"]): IncidentRow {
  return {
    incident_id: id,
    triage_score: score,
    severity,
    status: "new",
    kill_chain_phase: "Delivery",
    iocs: [{ value: "198.51.100.77" }],
    ioas: [],
    alerts: [{}],
    updated_at: "2026-02-23T05:00:00Z",
  };
}

describe("incident explorer", () => {
  it("renders server-sorted rows and forwards sort/filter params", async () => {
    const mock = new MockService();
    mock.on("GET", "/api/v1/incidents", (url) => {
      const rows = [incidentFixture("u-high", 88, "Critical"), incidentFixture("u-low", 12, "Low")];
      const filtered = url.searchParams.get("severity") === "Critical" ? rows.slice(0, 1) : rows;
      return { body: { incidents: filtered } };
    });
    const api = new ApiClient("http://mock.test", SESSION, mock.fetch);
    const explorer = createIncidentExplorer(api);
    document.body.append(explorer.root);

    await explorer.refresh({ sort: "triage_score" });
    let rows = [...explorer.root.querySelectorAll("tbody tr")];
    expect(rows.map((r) => r.getAttribute("data-incident-id"))).toEqual(["u-high", "u-low"]);

    await explorer.refresh({ severity: "Critical" });
    rows = [...explorer.root.querySelectorAll("tbody tr")];
    expect(rows).toHaveLength(1);
    const call = mock.calls.at(-1)!;
    expect(call.path).toBe("/api/v1/incidents");
  });

  it("opens a detail drawer with timeline and pivots on an IoC click", async () => {
    const mock = new MockService();
    mock.on("GET", "/api/v1/incidents/u-1", () => ({
      body: {
        incident: { ...incidentFixture("u-1", 50, "Medium") },
        timeline: [
          { timestamp: "2026-02-23T05:00:00Z", kind: "log", summary: "[error] brute force" },
          { timestamp: "2026-02-23T05:00:30Z", kind: "flow", summary: "tcp 10.0.0.5 -> x" },
        ],
        summary: "Incident u-1: severity Medium, triage score 50.00.",
      },
    }));
    mock.on("GET", "/api/v1/incidents/pivot", () => ({
      body: { incident_ids: ["u-1", "u-7"] },
    }));
    const api = new ApiClient("http://mock.test", SESSION, mock.fetch);
    const explorer = createIncidentExplorer(api);
    document.body.append(explorer.root);

    await explorer.openDetail("u-1");
    expect(explorer.root.querySelectorAll(".timeline li")).toHaveLength(2);
    expect(explorer.root.querySelector(".summary")!.textContent).toContain("Medium");

    const ids = await explorer.pivot("198.51.100.77");
    expect(ids).toEqual(["u-1", "u-7"]);
    expect(explorer.root.querySelector(".pivot-results h4")!.textContent).toContain("198.51.100.77");
  });
});

describe("policy dashboard", () => {
  it("shows violation counts by action and tool", async () => {
    const mock = new MockService();
    mock.on("GET", "/api/v1/guardrail/stats", () => ({
      body: {
        engine: { alert_counts: { "Block:prompt_injection": 4, "Warn:credential_leak": 2 } },
        audit: {
          total: 25,
          blocked: 4,
          by_status: { ok: 20, blocked: 4, error: 1 },
          by_tool: { generate_rule: 4, analyze_log: 21 },
        },
      },
    }));
    const api = new ApiClient("http://mock.test", SESSION, mock.fetch);
    const dashboard = createPolicyDashboard(api);
    document.body.append(dashboard.root);
    await dashboard.refresh();
    expect(dashboard.root.querySelector(".totals")!.textContent).toContain("blocked: 4");
    const actions = [...dashboard.root.querySelectorAll(".by-action li")];
    expect(actions.map((a) => a.getAttribute("data-key"))).toContain("Block:prompt_injection");
    const tools = [...dashboard.root.querySelectorAll(".by-tool li")];
    expect(tools.map((t) => t.getAttribute("data-tool"))).toContain("generate_rule");
  });
});
