import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { renderGraphDocument } from "../src/graph.js";
import type { ComparisonView, GraphDocument, ScenarioRecord, Session } from "../src/types.js";
import { createScenarioView, renderComparison } from "../src/views/scenario.js";
import { MockService, flushMicrotasks } from "./mock_service.js";

const OPERATOR: Session = { username: "op", role: "Operator", token: "t", tenant: "default" };
const VIEWER: Session = { username: "ro", role: "Viewer", token: "t", tenant: "default" };

function scenarioFixture(overrides: Partial<ScenarioRecord> = {}): ScenarioRecord {
  return {
    scenario_id: "scn-aaa",
    cluster_events: ["e1", "e2", "e3"],
    chain: [
      { event_id: "e1", phase: "Reconnaissance", timestamp: "2026-02-23T05:00:00Z", technique: "T1046" },
      { event_id: "e2", phase: "Delivery", timestamp: "2026-02-23T05:01:00Z", technique: null },
      { event_id: "e3", phase: "Exploitation", timestamp: "2026-02-23T05:02:00Z", technique: "T1110.001" },
    ],
    narrative: "scan then brute force",
    confidence: 0.8,
    bayesian_score: 0.64,
    sophistication: "moderate",
    validation: "Pending",
    operator_notes: "",
    ...overrides,
  };
}

const GRAPH: GraphDocument = {
  layout: "chain",
  nodes: [
    { id: "e1", label: "Reconnaissance: e1", phase_color: "#1f77b4", tooltip: "t1" },
    { id: "e2", label: "Delivery: e2", phase_color: "#ff7f0e", tooltip: "t2" },
    { id: "e3", label: "Exploitation: e3", phase_color: "#d62728", tooltip: "t3" },
  ],
  edges: [
    { a: "e1", b: "e2", thickness: 3.0, opacity: 0.7, tooltip: "composite=0.5" },
    { a: "e2", b: "e3", thickness: 2.0, opacity: 0.5, tooltip: "composite=0.3" },
  ],
};

const COMPARISON: ComparisonView = {
  scenario_a: "scn-aaa",
  scenario_b: "scn-bbb",
  shared: ["e2", "e3"],
  a_only: ["e1"],
  b_only: ["e9"],
  legend: { shared: "#2ca02c", a_only: "#d62728", b_only: "#1f77b4" },
};

function setup(session: Session = OPERATOR) {
  const mock = new MockService();
  mock.on("GET", "/api/v1/scenarios/scn-aaa", () => ({ body: { scenario: scenarioFixture() } }));
  mock.on("GET", "/api/v1/scenarios/scn-aaa/graph", () => ({ body: { graph: GRAPH } }));
  mock.on("GET", "/api/v1/scenarios/scn-aaa/compare/scn-bbb", () => ({ body: COMPARISON }));
  const api = new ApiClient("http://mock.test", session, mock.fetch);
  const view = createScenarioView(api, session);
  document.body.append(view.root);
  return { mock, api, view };
}

describe("scenario graph rendering", () => {
  it("renders one SVG node per chain event and edges from the document", async () => {
    const { view } = setup();
    await view.load("scn-aaa");
    const svg = view.root.querySelector("svg.scenario-graph")!;
    expect(svg.querySelectorAll("g[data-node-id]")).toHaveLength(3);
    expect(svg.querySelectorAll("line")).toHaveLength(2);
    const firstRect = svg.querySelector("g[data-node-id='e1'] rect")!;
    expect(firstRect.getAttribute("fill")).toBe("#1f77b4");
  });

  it("standalone document render honours palette colors", () => {
    const svg = renderGraphDocument(GRAPH);
    const fills = [...svg.querySelectorAll("rect")].map((r) => r.getAttribute("fill"));
    expect(fills).toEqual(["#1f77b4", "#ff7f0e", "#d62728"]);
  });
});

describe("validation controls", () => {
  it("flips the status chip only after the server confirms", async () => {
    const { mock, view } = setup();
    await view.load("scn-aaa");
    mock.on("POST", "/api/v1/scenarios/scn-aaa/validation", (_url, body) => ({
      body: {
        scenario: scenarioFixture({
          validation: (body as { status: "Validated" }).status,
          operator_notes: (body as { notes: string }).notes,
        }),
        history: [],
      },
    }));
    const notes = view.root.querySelector<HTMLTextAreaElement>("textarea.notes-input")!;
    notes.value = "confirmed by analyst";
    view.root.querySelector<HTMLButtonElement>("button.validate-validated")!.click();
    await flushMicrotasks(8);
    expect(view.root.querySelector(".badge")!.textContent).toBe("Validated");
    const call = mock.calls.find((c) => c.path.endsWith("/validation"))!;
    expect(call.body).toMatchObject({ status: "Validated", notes: "confirmed by analyst" });
  });

  it("viewer gets disabled validation controls", async () => {
    const { view } = setup(VIEWER);
    await view.load("scn-aaa");
    const buttons = [...view.root.querySelectorAll<HTMLButtonElement>("footer button")];
    expect(buttons).toHaveLength(2);
    expect(buttons.every((b) => b.disabled)).toBe(true);
  });

  it("exposes a STIX download link", async () => {
    const { view } = setup();
    await view.load("scn-aaa");
    const link = view.root.querySelector<HTMLAnchorElement>(".downloads a")!;
    expect(link.getAttribute("href")).toContain("/api/v1/scenarios/scn-aaa/stix");
  });
});

describe("comparison view", () => {
  it("legend shows the shared / A-only / B-only tri-color partition", async () => {
    const { view } = setup();
    await view.load("scn-aaa");
    await view.compareWith("scn-bbb");
    const legend = view.root.querySelectorAll(".comparison-legend li");
    expect(legend).toHaveLength(3);
    const byKey = new Map(
      [...legend].map((item) => [item.getAttribute("data-legend"), item]),
    );
    const sharedSwatch = byKey.get("shared")!.querySelector<HTMLElement>(".legend-swatch")!;
    const aSwatch = byKey.get("a_only")!.querySelector<HTMLElement>(".legend-swatch")!;
    const bSwatch = byKey.get("b_only")!.querySelector<HTMLElement>(".legend-swatch")!;
    expect(sharedSwatch.style.backgroundColor).toBe("#2ca02c"); // green
    expect(aSwatch.style.backgroundColor).toBe("#d62728"); // red
    expect(bSwatch.style.backgroundColor).toBe("#1f77b4"); // blue
    expect(byKey.get("shared")!.textContent).toContain("(2)");
  });

  it("partitions members disjointly", () => {
    const panel = renderComparison(COMPARISON);
    const shared = [...panel.querySelectorAll(".members-shared li")].map((n) => n.textContent);
    const aOnly = [...panel.querySelectorAll(".members-a_only li")].map((n) => n.textContent);
    const bOnly = [...panel.querySelectorAll(".members-b_only li")].map((n) => n.textContent);
    expect(shared).toEqual(["e2", "e3"]);
    expect(aOnly).toEqual(["e1"]);
    expect(bOnly).toEqual(["e9"]);
    const all = [...shared, ...aOnly, ...bOnly];
    expect(new Set(all).size).toBe(all.length);
  });
});
