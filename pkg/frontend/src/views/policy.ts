// Governance dashboard: violation counts by enforcement outcome and by the
// tool that triggered them, fed entirely by the stats resource.

import { ApiClient } from "../api.js";
import { clear, el } from "../dom.js";

export interface PolicyDashboardHandle {
  root: HTMLElement;
  refresh(): Promise<void>;
}

export function createPolicyDashboard(api: ApiClient): PolicyDashboardHandle {
  const root = el("section", { class: "policy-dashboard" });

  async function refresh(): Promise<void> {
    const stats = await api.guardrailStats();
    clear(root);
    root.append(el("h3", {}, ["Policy violations"]));
    root.append(
      el("p", { class: "totals" }, [
        `total audited calls: ${stats.audit.total}, blocked: ${stats.audit.blocked}`,
      ]),
    );
    const byAction = el("ul", { class: "by-action" });
    for (const [key, count] of Object.entries(stats.engine.alert_counts).sort()) {
      byAction.append(el("li", { "data-key": key }, [`${key}: ${count}`]));
    }
    root.append(el("section", {}, [el("h4", {}, ["by enforcement action"]), byAction]));
    const byTool = el("ul", { class: "by-tool" });
    for (const [tool, count] of Object.entries(stats.audit.by_tool).sort()) {
      byTool.append(el("li", { "data-tool": tool }, [`${tool}: ${count}`]));
    }
    root.append(el("section", {}, [el("h4", {}, ["by tool"]), byTool]));
  }

  return { root, refresh };
}
