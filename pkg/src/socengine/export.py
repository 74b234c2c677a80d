"""Scenario visualization documents, comparison, STIX/JSON export, and
validation bookkeeping (phase 3).

Graph documents are plain data consumed both by the standalone HTML export
and by the review UI, so there is exactly one rendering contract. All
exports are deterministic: timestamps come from the scenario record, ids
are derived from the scenario id, and equal records produce byte-identical
output.
"""

from __future__ import annotations

import html
import json
import logging
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from .scanner import SecurityEvent
from .scenario import (
    AttackScenario,
    ChainStep,
    CorrelationGraph,
    ValidationStatus,
    detect_communities,
)
from .store import TenantStore
from .uicr import KillChainPhase, format_timestamp, utc_now

logger = logging.getLogger(__name__)

__all__ = [
    "KILL_CHAIN_PALETTE",
    "GraphNode",
    "GraphEdge",
    "GraphDocument",
    "ComparisonView",
    "render_graph",
    "write_html",
    "collapse_supernodes",
    "compare",
    "export_stix",
    "export_json",
    "build_scenario_timeline",
    "ScenarioStore",
]

#: Fixed node palette per kill-chain phase. The two phases without a
#: documented colour (weaponisation, installation) use amber and brown.
KILL_CHAIN_PALETTE: Dict[KillChainPhase, str] = {
    KillChainPhase.RECONNAISSANCE: "#1f77b4",        # blue
    KillChainPhase.WEAPONISATION: "#ffbf00",         # amber
    KillChainPhase.DELIVERY: "#ff7f0e",              # orange
    KillChainPhase.EXPLOITATION: "#d62728",          # red
    KillChainPhase.INSTALLATION: "#8c564b",          # brown
    KillChainPhase.COMMAND_AND_CONTROL: "#9467bd",   # purple
    KillChainPhase.ACTIONS_ON_OBJECTIVES: "#8b0000", # dark red
}

DEFAULT_NODE_COLOR = "#7f7f7f"


@dataclass(frozen=True)
class GraphNode:
    id: str
    label: str
    phase_color: str
    tooltip: str
    super_node: bool = False
    member_count: int = 1
    members: Tuple[str, ...] = ()

    def to_dict(self) -> Dict[str, Any]:
        data = {
            "id": self.id,
            "label": self.label,
            "phase_color": self.phase_color,
            "tooltip": self.tooltip,
        }
        if self.super_node:
            data.update(
                {
                    "super_node": True,
                    "member_count": self.member_count,
                    "members": list(self.members),
                }
            )
        return data


@dataclass(frozen=True)
class GraphEdge:
    a: str
    b: str
    thickness: float
    opacity: float
    tooltip: str

    def to_dict(self) -> Dict[str, Any]:
        return {
            "a": self.a,
            "b": self.b,
            "thickness": self.thickness,
            "opacity": self.opacity,
            "tooltip": self.tooltip,
        }


@dataclass(frozen=True)
class GraphDocument:
    nodes: Tuple[GraphNode, ...]
    edges: Tuple[GraphEdge, ...]
    layout: str = "chain"  # "chain" for scenario renders, "force" for collapses

    def __post_init__(self) -> None:
        ids = {n.id for n in self.nodes}
        for edge in self.edges:
            if edge.a not in ids or edge.b not in ids:
                raise ValueError(f"edge references missing node: {edge.a}->{edge.b}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "layout": self.layout,
            "nodes": [n.to_dict() for n in self.nodes],
            "edges": [e.to_dict() for e in self.edges],
        }


def _edge_visuals(weight: float) -> Tuple[float, float]:
    # thickness 1..5 px, opacity 0.3..1.0, both linear in the composite weight
    return 1.0 + 4.0 * weight, 0.3 + 0.7 * weight


def render_graph(scenario: AttackScenario, graph: CorrelationGraph) -> GraphDocument:
    """One node per chain event, consecutive chain edges, palette colours."""
    nodes = []
    for step in scenario.chain:
        event = graph.events.get(step.event_id)
        label = f"{step.phase.label}: {step.event_id}"
        tooltip = "\n".join(
            part
            for part in (
                label,
                format_timestamp(step.timestamp),
                step.explanation,
                event.message[:160] if event else "",
            )
            if part
        )
        nodes.append(
            GraphNode(
                id=step.event_id,
                label=label,
                phase_color=KILL_CHAIN_PALETTE[step.phase],
                tooltip=tooltip,
            )
        )
    edges = []
    for first, second in zip(scenario.chain, scenario.chain[1:]):
        weight = graph.edge_weight(first.event_id, second.event_id)
        edge = graph.edge(first.event_id, second.event_id)
        if edge is not None:
            hook_text = ", ".join(
                f"{k}={v:.2f}" for k, v in edge.hooks.to_dict().items() if v > 0
            )
            tooltip = f"composite={weight:.3f} ({hook_text})"
        else:
            tooltip = "temporal ordering only (no correlation edge)"
        thickness, opacity = _edge_visuals(weight)
        edges.append(GraphEdge(first.event_id, second.event_id, thickness, opacity, tooltip))
    return GraphDocument(nodes=tuple(nodes), edges=tuple(edges), layout="chain")


_HTML_TEMPLATE = """<!DOCTYPE html>
<html>
<head>
<meta charset="utf-8">
<title>{title}</title>
<style>
body {{ font-family: sans-serif; background: #fafafa; margin: 1em; }}
#graph {{ border: 1px solid #ccc; background: white; }}
.meta {{ color: #444; font-size: 0.9em; }}
</style>
</head>
<body>
<h2>{title}</h2>
<p class="meta">{subtitle}</p>
<canvas id="graph" width="960" height="600"></canvas>
<script id="graph-data" type="application/json">{graph_json}</script>
<script>
(function () {{
  const doc = JSON.parse(document.getElementById("graph-data").textContent);
  const canvas = document.getElementById("graph");
  const ctx = canvas.getContext("2d");
  const pos = {{}};
  const n = doc.nodes.length;
  doc.nodes.forEach(function (node, i) {{
    if (doc.layout === "chain") {{
      pos[node.id] = {{ x: 90 + (780 * i) / Math.max(n - 1, 1), y: 300 }};
    }} else {{
      const angle = (2 * Math.PI * i) / Math.max(n, 1);
      pos[node.id] = {{ x: 480 + 240 * Math.cos(angle), y: 300 + 220 * Math.sin(angle) }};
    }}
  }});
  doc.edges.forEach(function (edge) {{
    const a = pos[edge.a], b = pos[edge.b];
    ctx.globalAlpha = edge.opacity;
    ctx.lineWidth = edge.thickness;
    ctx.strokeStyle = "#555";
    ctx.beginPath(); ctx.moveTo(a.x, a.y); ctx.lineTo(b.x, b.y); ctx.stroke();
  }});
  ctx.globalAlpha = 1;
  doc.nodes.forEach(function (node) {{
    const p = pos[node.id];
    const w = node.super_node ? 120 : 96, h = 34;
    ctx.fillStyle = node.phase_color;
    ctx.fillRect(p.x - w / 2, p.y - h / 2, w, h);
    ctx.strokeStyle = "#222"; ctx.lineWidth = 1;
    ctx.strokeRect(p.x - w / 2, p.y - h / 2, w, h);
    ctx.fillStyle = "#fff"; ctx.font = "11px sans-serif"; ctx.textAlign = "center";
    ctx.fillText(node.label.slice(0, 18), p.x, p.y + 4);
  }});
  canvas.title = doc.nodes.map(function (n) {{ return n.tooltip; }}).join("\\n---\\n");
}})();
</script>
</body>
</html>
"""


def write_html(document: GraphDocument, path: "str | Path", title: str,
               subtitle: str = "") -> Path:
    """Write a fully self-contained HTML rendering (no network fetches)."""
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    graph_json = json.dumps(document.to_dict(), sort_keys=True)
    out.write_text(
        _HTML_TEMPLATE.format(
            title=html.escape(title),
            subtitle=html.escape(subtitle),
            graph_json=graph_json.replace("</", "<\\/"),
        )
    )
    return out


SUPER_NODE_THRESHOLD = 100


def _dominant_phase(events: Sequence[SecurityEvent]) -> Optional[KillChainPhase]:
    counts: Dict[int, int] = {}
    for event in events:
        order = event.kill_chain_order()
        if order is not None:
            counts[order] = counts.get(order, 0) + 1
    if not counts:
        return None
    best = max(sorted(counts), key=lambda o: counts[o])
    return KillChainPhase(best)


def collapse_supernodes(graph: CorrelationGraph, threshold: int = SUPER_NODE_THRESHOLD,
                        communities: Optional[List[List[str]]] = None) -> GraphDocument:
    """Collapse communities strictly larger than the threshold into single
    expandable super nodes; all edges between surviving nodes are kept and
    edges into a collapsed community are rewired to its super node.

    Pass the communities from phase 2 to avoid re-partitioning; otherwise
    they are detected here.
    """
    if communities is None:
        communities = detect_communities(graph)
    node_alias: Dict[str, str] = {}
    nodes: List[GraphNode] = []
    for index, community in enumerate(communities):
        members = sorted(community)
        if len(members) > threshold:
            super_id = f"super-{index}"
            events = [graph.events[m] for m in members if m in graph.events]
            phase = _dominant_phase(events)
            color = KILL_CHAIN_PALETTE[phase] if phase else DEFAULT_NODE_COLOR
            nodes.append(
                GraphNode(
                    id=super_id,
                    label=f"cluster of {len(members)} events",
                    phase_color=color,
                    tooltip=(
                        f"super node: {len(members)} events, dominant phase "
                        f"{phase.label if phase else 'unknown'}"
                    ),
                    super_node=True,
                    member_count=len(members),
                    members=tuple(members),
                )
            )
            for member in members:
                node_alias[member] = super_id
        else:
            for member in members:
                node_alias[member] = member
                event = graph.events.get(member)
                order = event.kill_chain_order() if event else None
                color = KILL_CHAIN_PALETTE[KillChainPhase(order)] if order else DEFAULT_NODE_COLOR
                nodes.append(
                    GraphNode(
                        id=member,
                        label=member,
                        phase_color=color,
                        tooltip=event.message[:160] if event else member,
                    )
                )
    merged: Dict[Tuple[str, str], float] = {}
    for (a, b), edge in sorted(graph.edges.items()):
        ra, rb = node_alias[a], node_alias[b]
        if ra == rb:
            continue
        key = (ra, rb) if ra < rb else (rb, ra)
        merged[key] = max(merged.get(key, 0.0), edge.composite_weight)
    edges = []
    for (a, b), weight in sorted(merged.items()):
        thickness, opacity = _edge_visuals(weight)
        edges.append(GraphEdge(a, b, thickness, opacity, f"composite={weight:.3f}"))
    return GraphDocument(nodes=tuple(nodes), edges=tuple(edges), layout="force")


@dataclass(frozen=True)
class ComparisonView:
    """Tri-colour node partition for a side-by-side scenario comparison."""

    scenario_a: str
    scenario_b: str
    shared: Tuple[str, ...]
    a_only: Tuple[str, ...]
    b_only: Tuple[str, ...]

    #: shared green, A-only red, B-only blue
    LEGEND = {"shared": "#2ca02c", "a_only": "#d62728", "b_only": "#1f77b4"}

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scenario_a": self.scenario_a,
            "scenario_b": self.scenario_b,
            "shared": list(self.shared),
            "a_only": list(self.a_only),
            "b_only": list(self.b_only),
            "legend": dict(self.LEGEND),
        }


def compare(a: AttackScenario, b: AttackScenario) -> ComparisonView:
    set_a = {step.event_id for step in a.chain}
    set_b = {step.event_id for step in b.chain}
    return ComparisonView(
        scenario_a=a.scenario_id,
        scenario_b=b.scenario_id,
        shared=tuple(sorted(set_a & set_b)),
        a_only=tuple(sorted(set_a - set_b)),
        b_only=tuple(sorted(set_b - set_a)),
    )


# ---------------------------------------------------------------------------
# STIX 2.1 export
# ---------------------------------------------------------------------------

_STIX_NS = uuid.UUID("8a7b64ff-17c2-4b31-9914-5a417e7a0f28")


def _stix_id(kind: str, seed: str) -> str:
    return f"{kind}--{uuid.uuid5(_STIX_NS, seed)}"


def export_stix(scenario: AttackScenario) -> Dict[str, Any]:
    """STIX 2.1 bundle: one attack-pattern per distinct technique, one
    indicator per distinct IoC, one observed-data per chain event, plus
    chain-order and indicates relationships.

    Timestamps come from the scenario record so re-exports are
    byte-identical. Chain order uses the custom relationship type
    "followed-by" (no standard SRO vocabulary covers it).
    """
    created = format_timestamp(scenario.created_at)
    common = {"spec_version": "2.1", "created": created, "modified": created}
    objects: List[Dict[str, Any]] = []

    pattern_ids: Dict[str, str] = {}
    for technique in scenario.techniques():
        sid = _stix_id("attack-pattern", f"{scenario.scenario_id}|tech|{technique}")
        pattern_ids[technique] = sid
        objects.append(
            {
                "type": "attack-pattern",
                "id": sid,
                **common,
                "name": technique,
                "external_references": [
                    {"source_name": "mitre-attack", "external_id": technique}
                ],
            }
        )

    indicator_ids: List[str] = []
    for value in scenario.cluster_iocs:
        sid = _stix_id("indicator", f"{scenario.scenario_id}|ioc|{value}")
        indicator_ids.append(sid)
        objects.append(
            {
                "type": "indicator",
                "id": sid,
                **common,
                "name": f"Indicator {value}",
                "pattern": f"[artifact:payload_bin MATCHES '{value}']",
                "pattern_type": "stix",
                "valid_from": created,
            }
        )

    observed_ids: List[str] = []
    for step in scenario.chain:
        sid = _stix_id("observed-data", f"{scenario.scenario_id}|event|{step.event_id}")
        observed_ids.append(sid)
        objects.append(
            {
                "type": "observed-data",
                "id": sid,
                **common,
                "first_observed": format_timestamp(step.timestamp),
                "last_observed": format_timestamp(step.timestamp),
                "number_observed": 1,
                "x_kill_chain_phase": step.phase.label,
                "x_event_id": step.event_id,
            }
        )

    for first, second in zip(observed_ids, observed_ids[1:]):
        objects.append(
            {
                "type": "relationship",
                "id": _stix_id("relationship", f"{scenario.scenario_id}|chain|{first}|{second}"),
                **common,
                "relationship_type": "followed-by",
                "source_ref": first,
                "target_ref": second,
            }
        )
    for indicator_id in indicator_ids:
        for technique, pattern_id in pattern_ids.items():
            objects.append(
                {
                    "type": "relationship",
                    "id": _stix_id(
                        "relationship",
                        f"{scenario.scenario_id}|indicates|{indicator_id}|{pattern_id}",
                    ),
                    **common,
                    "relationship_type": "indicates",
                    "source_ref": indicator_id,
                    "target_ref": pattern_id,
                }
            )

    return {
        "type": "bundle",
        "id": _stix_id("bundle", scenario.scenario_id),
        "objects": objects,
    }


def export_json(scenario: AttackScenario) -> str:
    """Complete scenario object serialized for programmatic consumption."""
    return json.dumps(scenario.to_dict(), sort_keys=True, indent=2)


def build_scenario_timeline(scenario: AttackScenario) -> List[ChainStep]:
    """Chain events ascending by timestamp; ties stay stable by event id."""
    return sorted(scenario.chain, key=lambda step: (step.timestamp, step.event_id))


def export_files(scenario: AttackScenario, graph: CorrelationGraph,
                 out_dir: "str | Path") -> Dict[str, Path]:
    """Write <id>.html, <id>.stix.json, and <id>.json side by side."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    document = render_graph(scenario, graph)
    html_path = write_html(
        document,
        out / f"{scenario.scenario_id}.html",
        title=f"Attack scenario {scenario.scenario_id}",
        subtitle=(
            f"score {scenario.bayesian_score:.3f}, "
            f"sophistication {scenario.sophistication.value}, "
            f"{len(scenario.chain)} chain events"
        ),
    )
    stix_path = out / f"{scenario.scenario_id}.stix.json"
    stix_path.write_text(json.dumps(export_stix(scenario), sort_keys=True, indent=2))
    json_path = out / f"{scenario.scenario_id}.json"
    json_path.write_text(export_json(scenario))
    return {"html": html_path, "stix": stix_path, "json": json_path}


# ---------------------------------------------------------------------------
# Scenario store with validation bookkeeping
# ---------------------------------------------------------------------------

class ScenarioStore:
    """Persisted scenarios plus a full validation audit history.

    When a scenario is saved with its correlation graph, the rendered
    graph document is stored alongside it so the review UI and the file
    exporter share one rendering contract.
    """

    def __init__(self, store: TenantStore):
        self._store = store

    def save(self, scenario: AttackScenario,
             graph: Optional[CorrelationGraph] = None) -> None:
        body = scenario.to_dict()
        if graph is not None:
            body["_graph_document"] = render_graph(scenario, graph).to_dict()
        else:
            existing = self._existing_graph_document(scenario.scenario_id)
            if existing is not None:
                body["_graph_document"] = existing
        self._store.put_scenario(scenario.scenario_id, scenario.validation.value, body)

    def _existing_graph_document(self, scenario_id: str) -> Optional[Dict[str, Any]]:
        try:
            return self._store.get_scenario(scenario_id).get("_graph_document")
        except Exception:
            return None

    def graph_document(self, scenario_id: str) -> Optional[Dict[str, Any]]:
        return self._store.get_scenario(scenario_id).get("_graph_document")

    def get(self, scenario_id: str) -> AttackScenario:
        return AttackScenario.from_dict(self._store.get_scenario(scenario_id))

    def list(self) -> List[AttackScenario]:
        return [AttackScenario.from_dict(d) for d in self._store.iter_scenarios()]

    def set_validation(self, scenario_id: str, status: ValidationStatus,
                       notes: str = "") -> AttackScenario:
        """Persist a validation decision; reversals are allowed and every
        transition lands in the audit history."""
        from dataclasses import replace as _replace

        scenario = self.get(scenario_id)  # raises NotFoundError for unknown ids
        updated = _replace(scenario, validation=status, operator_notes=notes)
        self.save(updated)
        self._store.append_scenario_history(
            scenario_id, status.value, notes, format_timestamp(utc_now())
        )
        return updated

    def history(self, scenario_id: str) -> List[Dict[str, Any]]:
        return self._store.scenario_history(scenario_id)

    def export_files(self, scenario: AttackScenario, graph: CorrelationGraph,
                     out_dir: "str | Path") -> Dict[str, Path]:
        return export_files(scenario, graph, out_dir)
