// Application shell: wires the panels together, keeps the checkpoint queue
// in sync with the SSE stream, and holds the session. No domain logic
// lives here; every state change round-trips through the service API.

import { ApiClient } from "./api.js";
import { clear, el } from "./dom.js";
import { SseClient } from "./sse.js";
import type { Session, WorkflowRecord } from "./types.js";
import { createIncidentExplorer } from "./views/incidents.js";
import { createPolicyDashboard } from "./views/policy.js";
import { createReviewCard, ReviewCardHandle } from "./views/review.js";
import { createScenarioView } from "./views/scenario.js";

export interface AppHandle {
  root: HTMLElement;
  refreshQueue(): Promise<void>;
  handleEvent(data: string): void;
  stop(): void;
}

const AWAITING_PHASES = new Set(["Awaiting_Classification_Review", "Awaiting_Rule_Review"]);

export function createApp(api: ApiClient, session: Session, baseUrl: string): AppHandle {
  const root = el("main", { class: "soc-app" });
  const queue = el("section", { class: "checkpoint-queue" });
  const incidents = createIncidentExplorer(api);
  const scenario = createScenarioView(api, session);
  const policy = createPolicyDashboard(api);
  const status = el("footer", { class: "stream-status" }, ["stream: idle"]);
  root.append(
    el("h1", {}, [`SOC console (${session.username}, ${session.role})`]),
    queue,
    incidents.root,
    scenario.root,
    policy.root,
    status,
  );

  const cards = new Map<string, ReviewCardHandle>();

  async function refreshQueue(): Promise<void> {
    const { workflows } = await api.listWorkflows();
    clear(queue);
    cards.clear();
    queue.append(el("h2", {}, ["Awaiting review"]));
    for (const workflow of workflows.filter((w) => AWAITING_PHASES.has(w.phase))) {
      const card = createReviewCard(api, session, workflow, undefined, () => {
        void refreshQueue();
      });
      cards.set(workflow.workflow_id, card);
      queue.append(card.root);
    }
  }

  function handleEvent(data: string): void {
    let event: { type?: string; workflow_id?: string; phase?: string };
    try {
      event = JSON.parse(data);
    } catch {
      return;
    }
    if (event.type !== "workflow_phase" || !event.workflow_id) return;
    // the queue reflects server phase within one event of a change
    void (async () => {
      const card = cards.get(event.workflow_id!);
      if (card) {
        const { workflow } = await api.workflow(event.workflow_id!);
        card.refresh(workflow as WorkflowRecord);
        if (!AWAITING_PHASES.has(workflow.phase)) {
          await refreshQueue();
        }
      } else if (event.phase && AWAITING_PHASES.has(event.phase)) {
        await refreshQueue();
      }
    })();
  }

  const sse = new SseClient(`${baseUrl}/api/v1/events`, {
    onEvent: handleEvent,
    onStateChange: (state) => {
      status.textContent = `stream: ${state}`;
    },
  });
  void sse.run();

  return {
    root,
    refreshQueue,
    handleEvent,
    stop: () => sse.close(),
  };
}
