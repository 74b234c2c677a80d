// Wire types mirroring the service's JSON responses. The UI never derives
// domain state on its own; these are projections of what the server sends.

export type Role = "Admin" | "Operator" | "Viewer";

export interface Session {
  username: string;
  role: Role;
  token: string;
  tenant: string;
}

export interface IncidentRow {
  incident_id: string;
  triage_score: number;
  severity: "Low" | "Medium" | "High" | "Critical";
  status: string;
  kill_chain_phase: string | null;
  iocs: unknown[];
  ioas: unknown[];
  alerts: unknown[];
  updated_at: string;
}

export interface TimelineEntry {
  timestamp: string;
  kind: "log" | "alert" | "flow";
  summary: string;
}

export interface IncidentDetail {
  incident: IncidentRow & Record<string, unknown>;
  timeline: TimelineEntry[];
  summary: string;
}

export type WorkflowPhase =
  | "Pending"
  | "Ingesting"
  | "Classifying"
  | "Awaiting_Classification_Review"
  | "Analyzing"
  | "Proposing_Rules"
  | "Awaiting_Rule_Review"
  | "Deploying"
  | "Completed"
  | "Completed_Benign"
  | "Aborted"
  | "Error";

export interface WorkflowRecord {
  workflow_id: string;
  tenant: string;
  phase: WorkflowPhase;
  detection: { label: string; confidence: number } | null;
  classification: { narrative?: string; priority?: string } | null;
  proposed_rules: Array<{
    rule: { format: string; text: string };
    report: { valid: boolean; findings: Array<{ severity: string; message: string }> };
  }>;
  deployed_rule_ids: string[];
  event_log: Array<{ timestamp: string; kind: string; message: string }>;
  human_decisions: unknown[];
}

export type Decision = "approve" | "reject" | "modify";

export interface GraphNode {
  id: string;
  label: string;
  phase_color: string;
  tooltip: string;
  super_node?: boolean;
  member_count?: number;
}

export interface GraphEdge {
  a: string;
  b: string;
  thickness: number;
  opacity: number;
  tooltip: string;
}

export interface GraphDocument {
  layout: "chain" | "force";
  nodes: GraphNode[];
  edges: GraphEdge[];
}

export interface ScenarioRecord {
  scenario_id: string;
  cluster_events: string[];
  chain: Array<{ event_id: string; phase: string; timestamp: string; technique: string | null }>;
  narrative: string;
  confidence: number;
  bayesian_score: number;
  sophistication: "low" | "moderate" | "high";
  validation: "Pending" | "Validated" | "Invalidated";
  operator_notes: string;
}

export interface ComparisonView {
  scenario_a: string;
  scenario_b: string;
  shared: string[];
  a_only: string[];
  b_only: string[];
  legend: { shared: string; a_only: string; b_only: string };
}

export interface AuditRecord {
  id: number;
  tool_name: string;
  caller: string;
  status: "ok" | "blocked" | "error";
  duration_ms: number;
  detail: string;
  blocked: 0 | 1;
  timestamp: string;
}

export interface GuardrailStats {
  engine: { alert_counts: Record<string, number> };
  audit: {
    total: number;
    blocked: number;
    by_status: Record<string, number>;
    by_tool: Record<string, number>;
  };
}
