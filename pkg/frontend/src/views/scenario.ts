// Scenario review: graph render, validate/invalidate with notes, the
// tri-colour A/B comparison view, and STIX/JSON download links.

import { ApiClient } from "../api.js";
import { badge, clear, el } from "../dom.js";
import { renderGraphDocument } from "../graph.js";
import type { ComparisonView, ScenarioRecord, Session } from "../types.js";

const VALIDATION_COLORS: Record<string, string> = {
  Pending: "#7f7f7f",
  Validated: "#2ca02c",
  Invalidated: "#d62728",
};

export interface ScenarioViewHandle {
  root: HTMLElement;
  load(scenarioId: string): Promise<void>;
  compareWith(otherId: string): Promise<void>;
}

export function createScenarioView(api: ApiClient, session: Session): ScenarioViewHandle {
  const root = el("section", { class: "scenario-view" });
  let current: ScenarioRecord | null = null;
  let pending = false;

  function render(): void {
    clear(root);
    if (!current) {
      root.append(el("p", {}, ["no scenario loaded"]));
      return;
    }
    root.append(
      el("header", {}, [
        el("strong", {}, [current.scenario_id]),
        " ",
        badge(current.validation, VALIDATION_COLORS[current.validation]),
        el("span", { class: "score" }, [
          ` score ${current.bayesian_score.toFixed(3)}, ${current.sophistication}`,
        ]),
      ]),
      el("p", { class: "narrative" }, [current.narrative]),
      el("div", { class: "graph-slot" }),
      el("p", { class: "downloads" }, [
        el("a", { href: api.stixUrl(current.scenario_id), download: "" }, ["STIX bundle"]),
      ]),
      buildValidationControls(),
      el("div", { class: "comparison-slot" }),
    );
  }

  function buildValidationControls(): HTMLElement {
    const controls = el("footer", { class: "validation-controls" });
    const notes = el("textarea", { class: "notes-input", placeholder: "operator notes" });
    controls.append(notes);
    const canMutate = session.role === "Admin" || session.role === "Operator";
    for (const status of ["Validated", "Invalidated"] as const) {
      const button = el("button", { class: `validate-${status.toLowerCase()}` }, [status]);
      button.disabled = !canMutate || pending;
      if (canMutate) {
        button.addEventListener("click", async () => {
          if (!current || pending) return;
          pending = true;
          render();
          try {
            const response = await api.setValidation(current.scenario_id, status, notes.value);
            current = response.scenario; // status chip flips on the echo
          } finally {
            pending = false;
            render();
          }
        });
      }
      controls.append(button);
    }
    return controls;
  }

  async function load(scenarioId: string): Promise<void> {
    const [{ scenario }, { graph }] = await Promise.all([
      api.scenario(scenarioId),
      api.scenarioGraph(scenarioId),
    ]);
    current = scenario;
    render();
    const slot = root.querySelector(".graph-slot");
    slot?.append(renderGraphDocument(graph));
  }

  async function compareWith(otherId: string): Promise<void> {
    if (!current) return;
    const view = await api.compare(current.scenario_id, otherId);
    const slot = root.querySelector(".comparison-slot");
    if (!slot) return;
    clear(slot as HTMLElement);
    slot.append(renderComparison(view));
  }

  render();
  return { root, load, compareWith };
}

export function renderComparison(view: ComparisonView): HTMLElement {
  const panel = el("section", { class: "comparison-view" });
  panel.append(
    el("h3", {}, [`${view.scenario_a} vs ${view.scenario_b}`]),
  );
  const legend = el("ul", { class: "comparison-legend" });
  const entries: Array<[keyof ComparisonView["legend"], string, string[]]> = [
    ["shared", "shared", view.shared],
    ["a_only", "scenario A only", view.a_only],
    ["b_only", "scenario B only", view.b_only],
  ];
  for (const [key, label, members] of entries) {
    const swatch = el("span", { class: `legend-swatch legend-${key}` });
    swatch.style.backgroundColor = view.legend[key];
    legend.append(
      el("li", { "data-legend": key }, [swatch, ` ${label} (${members.length})`]),
    );
  }
  panel.append(legend);
  const lists = el("div", { class: "comparison-members" });
  for (const [key, , members] of entries) {
    const list = el("ul", { class: `members-${key}` });
    for (const id of members) {
      const item = el("li", {}, [id]);
      item.style.color = view.legend[key];
      list.append(item);
    }
    lists.append(list);
  }
  panel.append(lists);
  return panel;
}
