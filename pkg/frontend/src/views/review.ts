// Checkpoint review card. Decisions are never optimistic: controls lock
// while the request is in flight and the card re-renders only from the
// server's response. Warn-level guardrail events from the run are surfaced
// on the card.

import { ApiClient } from "../api.js";
import { badge, clear, el } from "../dom.js";
import type { Decision, Session, WorkflowRecord } from "../types.js";

const MUTATING_ROLES = new Set(["Admin", "Operator"]);

export interface ReviewCardHandle {
  root: HTMLElement;
  refresh(workflow: WorkflowRecord): void;
}

function checkpointFor(workflow: WorkflowRecord): 1 | 2 | null {
  if (workflow.phase === "Awaiting_Classification_Review") return 1;
  if (workflow.phase === "Awaiting_Rule_Review") return 2;
  return null;
}

export function createReviewCard(
  api: ApiClient,
  session: Session,
  workflow: WorkflowRecord,
  onUpdate?: (workflow: WorkflowRecord) => void,
  onStale?: (message: string) => void,
): ReviewCardHandle {
  const root = el("article", {
    class: "review-card",
    "data-workflow-id": workflow.workflow_id,
  });
  let current = workflow;
  let pending = false;

  function render(): void {
    clear(root);
    const checkpoint = checkpointFor(current);
    root.append(
      el("header", {}, [
        el("strong", {}, [current.workflow_id]),
        " ",
        badge(current.phase, checkpoint ? "#1f77b4" : "#7f7f7f"),
      ]),
    );
    root.dataset.phase = current.phase;

    if (current.detection) {
      root.append(
        el("p", { class: "detection" }, [
          `Detection: ${current.detection.label} ` +
            `(confidence ${current.detection.confidence.toFixed(2)})`,
        ]),
      );
    }
    if (checkpoint === 1 && current.classification) {
      root.append(
        el("p", { class: "classification" }, [current.classification.narrative ?? ""]),
      );
    }
    if (checkpoint === 2) {
      const list = el("ul", { class: "proposed-rules" });
      for (const proposal of current.proposed_rules) {
        const findings = proposal.report.findings
          .map((f) => `[${f.severity}] ${f.message}`)
          .join("; ");
        list.append(
          el("li", {}, [
            el("code", {}, [proposal.rule.text]),
            findings ? el("small", { class: "findings" }, [findings]) : "",
          ]),
        );
      }
      root.append(list);
    }

    const warns = current.event_log.filter((e) => e.kind === "guardrail_warn");
    if (warns.length > 0) {
      const list = el("ul", { class: "guardrail-warnings" });
      for (const warn of warns) {
        list.append(el("li", {}, [warn.message]));
      }
      root.append(el("section", { class: "warnings" }, ["Guardrail warnings:", list]));
    }

    if (checkpoint !== null) {
      root.append(buildControls(checkpoint));
    }
  }

  function buildControls(checkpoint: 1 | 2): HTMLElement {
    const controls = el("footer", { class: "decision-controls" });
    const canMutate = MUTATING_ROLES.has(session.role);
    const editor = el("textarea", {
      class: "modify-input",
      placeholder: checkpoint === 1 ? "edited classification narrative" : "edited rule text",
    });
    editor.disabled = !canMutate || pending;
    controls.append(editor);
    for (const decision of ["approve", "reject", "modify"] as Decision[]) {
      const button = el("button", { class: `decision-${decision}` }, [decision]);
      // role gating mirrors the server verdict: a denied action is never
      // rendered enabled for that role
      button.disabled = !canMutate || pending;
      if (canMutate) {
        button.addEventListener("click", () => submit(checkpoint, decision));
      }
      controls.append(button);
    }
    if (!canMutate) {
      controls.append(el("small", { class: "readonly-note" }, ["read-only session"]));
    }
    return controls;
  }

  async function submit(checkpoint: 1 | 2, decision: Decision): Promise<void> {
    if (pending) return;
    let payload: Record<string, unknown> | undefined;
    if (decision === "modify") {
      payload = collectModifyPayload(checkpoint);
      if (payload === undefined) {
        renderInlineFinding("edited rule text is empty");
        return; // inline validation failed; nothing submitted
      }
    }
    pending = true;
    render(); // lock the controls; the phase shown is still the server's
    try {
      const response = await api.decide(current.workflow_id, checkpoint, decision, payload);
      current = response.workflow; // state changes only from the server echo
      onUpdate?.(current);
    } catch (error) {
      const status = (error as { status?: number }).status;
      if (status === 409) {
        onStale?.("workflow advanced elsewhere; reload required");
      } else {
        onStale?.(String(error));
      }
    } finally {
      pending = false;
      render();
    }
  }

  function collectModifyPayload(checkpoint: 1 | 2): Record<string, unknown> | undefined {
    const editor = root.querySelector<HTMLTextAreaElement>("textarea.modify-input");
    const raw = editor?.value ?? "";
    if (checkpoint === 1) {
      return { narrative: raw || "analyst edit" };
    }
    if (!raw.trim()) {
      return undefined;
    }
    return { rules: [{ format: "suricata", text: raw }] };
  }

  function renderInlineFinding(message: string): void {
    const existing = root.querySelector(".inline-finding");
    existing?.remove();
    root.append(el("p", { class: "inline-finding" }, [message]));
  }

  render();
  return {
    root,
    refresh(workflow: WorkflowRecord) {
      current = workflow;
      render();
    },
  };
}
