// Incident explorer: sortable/filterable table with a detail drawer
// (timeline, indicators, summary) and an IoC/IP pivot action. Filtering
// and sorting are server-side; the table only renders what comes back.

import { ApiClient } from "../api.js";
import { SEVERITY_COLORS, badge, clear, el } from "../dom.js";
import type { IncidentRow } from "../types.js";

export interface IncidentExplorerHandle {
  root: HTMLElement;
  refresh(params?: { severity?: string; sort?: string }): Promise<void>;
  openDetail(incidentId: string): Promise<void>;
  pivot(key: string): Promise<string[]>;
}

export function createIncidentExplorer(api: ApiClient): IncidentExplorerHandle {
  const root = el("section", { class: "incident-explorer" });
  const table = el("table", { class: "incident-table" });
  const drawer = el("aside", { class: "incident-drawer" });
  const pivotPanel = el("aside", { class: "pivot-results" });
  root.append(table, drawer, pivotPanel);

  function renderRows(rows: IncidentRow[]): void {
    clear(table);
    const head = el("tr", {}, [
      el("th", {}, ["incident"]),
      el("th", {}, ["score"]),
      el("th", {}, ["severity"]),
      el("th", {}, ["kill chain"]),
      el("th", {}, ["IoC/IoA/alerts"]),
    ]);
    table.append(el("thead", {}, [head]));
    const body = el("tbody");
    for (const row of rows) {
      const tr = el("tr", { "data-incident-id": row.incident_id });
      tr.append(
        el("td", {}, [row.incident_id]),
        el("td", { class: "score" }, [row.triage_score.toFixed(2)]),
        el("td", {}, [badge(row.severity, SEVERITY_COLORS[row.severity] ?? "#7f7f7f")]),
        el("td", {}, [row.kill_chain_phase ?? "-"]),
        el("td", {}, [`${row.iocs.length}/${row.ioas.length}/${row.alerts.length}`]),
      );
      tr.addEventListener("click", () => void openDetail(row.incident_id));
      body.append(tr);
    }
    table.append(body);
  }

  async function refresh(params: { severity?: string; sort?: string } = {}): Promise<void> {
    const { incidents } = await api.listIncidents(params);
    renderRows(incidents);
  }

  async function openDetail(incidentId: string): Promise<void> {
    const detail = await api.incidentDetail(incidentId);
    clear(drawer);
    drawer.append(
      el("h3", {}, [incidentId]),
      el("p", { class: "summary" }, [detail.summary]),
    );
    const timeline = el("ol", { class: "timeline" });
    for (const entry of detail.timeline) {
      timeline.append(
        el("li", { "data-kind": entry.kind }, [`${entry.timestamp} [${entry.kind}] ${entry.summary}`]),
      );
    }
    drawer.append(timeline);
    const iocs = (detail.incident.iocs as Array<{ value?: string }>) ?? [];
    const list = el("ul", { class: "ioc-list" });
    for (const ioc of iocs) {
      const item = el("li", {}, [ioc.value ?? ""]);
      item.addEventListener("click", () => void pivot(ioc.value ?? ""));
      list.append(item);
    }
    drawer.append(list);
  }

  async function pivot(key: string): Promise<string[]> {
    const { incident_ids } = await api.pivot(key);
    clear(pivotPanel);
    pivotPanel.append(el("h4", {}, [`pivot: ${key}`]));
    const list = el("ul");
    for (const id of incident_ids) {
      list.append(el("li", {}, [id]));
    }
    pivotPanel.append(list);
    return incident_ids;
  }

  return { root, refresh, openDetail, pivot };
}
