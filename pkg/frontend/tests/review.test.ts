import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import type { Session, WorkflowRecord } from "../src/types.js";
import { createReviewCard } from "../src/views/review.js";
import { MockService, deferred, flushMicrotasks, workflowFixture } from "./mock_service.js";

const OPERATOR: Session = { username: "op", role: "Operator", token: "t", tenant: "default" };
const VIEWER: Session = { username: "ro", role: "Viewer", token: "t", tenant: "default" };

function setup(workflow: WorkflowRecord, session: Session = OPERATOR) {
  const mock = new MockService();
  const api = new ApiClient("http://mock.test", session, mock.fetch);
  const card = createReviewCard(api, session, workflow);
  document.body.append(card.root);
  return { mock, api, card };
}

describe("checkpoint decisions await server confirmation", () => {
  it("does not change the rendered phase before the server responds", async () => {
    const workflow = workflowFixture();
    const { mock, card } = setup(workflow);
    const gate = deferred<{ status?: number; body: unknown }>();
    mock.on("POST", `/api/v1/workflows/${workflow.workflow_id}/decide`, () => gate.promise);

    const approve = card.root.querySelector<HTMLButtonElement>("button.decision-approve")!;
    approve.click();
    await flushMicrotasks();

    // request is in flight: phase must still be the server's last word and
    // the controls must be locked (no optimistic transition)
    expect(card.root.dataset.phase).toBe("Awaiting_Classification_Review");
    const buttons = [...card.root.querySelectorAll<HTMLButtonElement>("button")];
    expect(buttons.length).toBeGreaterThan(0);
    expect(buttons.every((b) => b.disabled)).toBe(true);

    gate.resolve({
      body: { workflow: workflowFixture({ phase: "Awaiting_Rule_Review" }) },
    });
    await flushMicrotasks(8);
    expect(card.root.dataset.phase).toBe("Awaiting_Rule_Review");
  });

  it("re-enables controls and keeps state when the server rejects", async () => {
    const workflow = workflowFixture();
    const { mock, card } = setup(workflow);
    let stale = "";
    const api = new ApiClient("http://mock.test", OPERATOR, mock.fetch);
    const observed = createReviewCard(api, OPERATOR, workflow, undefined, (msg) => {
      stale = msg;
    });
    document.body.append(observed.root);
    mock.on("POST", `/api/v1/workflows/${workflow.workflow_id}/decide`, () => ({
      status: 409,
      body: { detail: "phase advanced elsewhere" },
    }));
    observed.root.querySelector<HTMLButtonElement>("button.decision-reject")!.click();
    await flushMicrotasks(8);
    expect(observed.root.dataset.phase).toBe("Awaiting_Classification_Review");
    expect(stale).toContain("reload");
    const buttons = [...observed.root.querySelectorAll<HTMLButtonElement>("button")];
    expect(buttons.every((b) => !b.disabled)).toBe(true);
  });

  it("sends the decision to the service exactly once per click", async () => {
    const workflow = workflowFixture();
    const { mock, card } = setup(workflow);
    mock.on("POST", `/api/v1/workflows/${workflow.workflow_id}/decide`, () => ({
      body: { workflow: workflowFixture({ phase: "Aborted" }) },
    }));
    card.root.querySelector<HTMLButtonElement>("button.decision-reject")!.click();
    await flushMicrotasks(8);
    const decideCalls = mock.calls.filter((c) => c.path.endsWith("/decide"));
    expect(decideCalls).toHaveLength(1);
    expect(decideCalls[0].body).toMatchObject({ checkpoint: 1, decision: "reject" });
  });
});

describe("viewer sessions are read-only", () => {
  it("renders no enabled mutation controls for a Viewer", () => {
    const { card } = setup(workflowFixture(), VIEWER);
    const buttons = [...card.root.querySelectorAll<HTMLButtonElement>("button")];
    expect(buttons.length).toBeGreaterThan(0);
    expect(buttons.every((b) => b.disabled)).toBe(true);
    expect(card.root.querySelector(".readonly-note")).not.toBeNull();
  });

  it("viewer clicks never reach the service", async () => {
    const workflow = workflowFixture();
    const { mock, card } = setup(workflow, VIEWER);
    const approve = card.root.querySelector<HTMLButtonElement>("button.decision-approve")!;
    approve.click();
    await flushMicrotasks();
    expect(mock.calls.filter((c) => c.method === "POST")).toHaveLength(0);
  });
});

describe("guardrail warnings surface on the card", () => {
  it("lists warn-level events from the run", () => {
    const { card } = setup(workflowFixture());
    const warnings = [...card.root.querySelectorAll(".guardrail-warnings li")];
    expect(warnings.map((w) => w.textContent)).toContain(
      "analyze_log[out]: Credential in output",
    );
  });
});

describe("checkpoint 2 rule review", () => {
  it("shows proposed rules with their findings and blocks empty edits inline", async () => {
    const workflow = workflowFixture({
      phase: "Awaiting_Rule_Review",
      proposed_rules: [
        {
          rule: { format: "suricata", text: "alert tcp any any -> any 80 (...)" },
          report: { valid: true, findings: [] },
        },
      ],
    });
    const { mock, card } = setup(workflow);
    expect(card.root.querySelectorAll(".proposed-rules li")).toHaveLength(1);
    // modify with no editor content: inline finding, nothing submitted
    card.root.querySelector<HTMLButtonElement>("button.decision-modify")!.click();
    await flushMicrotasks(8);
    expect(card.root.querySelector(".inline-finding")).not.toBeNull();
    expect(mock.calls.filter((c) => c.method === "POST")).toHaveLength(0);
  });
});
