"""Correlation graph and attack-scenario hypothesis engine (phase 2).

Evaluates eight complementary correlation hooks for every event pair,
combines them with a rank-discounted diminishing-returns formula, prunes
weak edges, partitions the graph with deterministic Louvain community
detection (connected-component fallback), and turns each community into
ranked attack scenarios with posterior Bayesian scores and threat-actor
profiles. Hypothesis generation itself is provider-backed; a temporal
chain fallback covers provider failures.
"""

from __future__ import annotations

import json
import logging
import math
import uuid
from dataclasses import dataclass, field, replace
from datetime import datetime
from enum import Enum
from typing import Any, Dict, FrozenSet, Iterable, List, Mapping, Optional, Protocol, Sequence, Tuple

from .scanner import SecurityEvent
from .uicr import KillChainPhase, TACTIC_NAME_TO_PHASE, format_timestamp, parse_timestamp

logger = logging.getLogger(__name__)

__all__ = [
    "HookVector",
    "Edge",
    "CorrelationGraph",
    "BayesParams",
    "CorrelatorConfig",
    "ChainStep",
    "ThreatActorProfile",
    "AttackScenario",
    "ValidationStatus",
    "Sophistication",
    "HypothesisProvider",
    "hook_temporal",
    "hook_ip_linkage",
    "hook_log_cooccurrence",
    "hook_flow_pattern",
    "hook_ioc_overlap",
    "hook_mitre_chaining",
    "hook_behavioural",
    "hook_user_session",
    "compute_hooks",
    "composite_weight",
    "build_graph",
    "detect_communities",
    "generate_hypotheses",
    "bayesian_score",
    "profile_threat_actor",
]

HOOK_NAMES = (
    "temporal",
    "ip_linkage",
    "log_cooccurrence",
    "flow_pattern",
    "ioc_overlap",
    "mitre_chaining",
    "behavioural",
    "user_session",
)


@dataclass(frozen=True)
class HookVector:
    """Per-pair hook scores, each in [0, 1]."""

    temporal: float = 0.0
    ip_linkage: float = 0.0
    log_cooccurrence: float = 0.0
    flow_pattern: float = 0.0
    ioc_overlap: float = 0.0
    mitre_chaining: float = 0.0
    behavioural: float = 0.0
    user_session: float = 0.0

    def __post_init__(self) -> None:
        for name in HOOK_NAMES:
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"hook {name} out of [0,1]: {value}")

    def values(self) -> Tuple[float, ...]:
        return tuple(getattr(self, name) for name in HOOK_NAMES)

    def to_dict(self) -> Dict[str, float]:
        return {name: getattr(self, name) for name in HOOK_NAMES}


@dataclass(frozen=True)
class Edge:
    a: str
    b: str
    composite_weight: float
    hooks: HookVector


@dataclass
class CorrelationGraph:
    """Undirected weighted event graph; one edge at most per pair."""

    events: Dict[str, SecurityEvent] = field(default_factory=dict)
    edges: Dict[Tuple[str, str], Edge] = field(default_factory=dict)
    pairs_evaluated: int = 0

    @property
    def nodes(self) -> List[str]:
        return sorted(self.events)

    def edge(self, a: str, b: str) -> Optional[Edge]:
        return self.edges.get((a, b) if a < b else (b, a))

    def edge_weight(self, a: str, b: str) -> float:
        edge = self.edge(a, b)
        return edge.composite_weight if edge else 0.0

    def neighbors(self, node: str) -> Dict[str, float]:
        out: Dict[str, float] = {}
        for (a, b), edge in self.edges.items():
            if a == node:
                out[b] = edge.composite_weight
            elif b == node:
                out[a] = edge.composite_weight
        return out

    def adjacency(self) -> Dict[str, Dict[str, float]]:
        adj: Dict[str, Dict[str, float]] = {n: {} for n in self.events}
        for (a, b), edge in self.edges.items():
            adj[a][b] = edge.composite_weight
            adj[b][a] = edge.composite_weight
        return adj


@dataclass(frozen=True)
class BayesParams:
    base_prior: float = 0.1
    per_technique: float = 0.08
    prior_cap: float = 0.7
    coef_edge: float = 0.3
    coef_node: float = 0.3
    coef_phase: float = 0.4
    false_alarm: float = 0.2

    def __post_init__(self) -> None:
        for name in ("base_prior", "per_technique", "prior_cap", "coef_edge",
                     "coef_node", "coef_phase", "false_alarm"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.prior_cap > 1.0:
            raise ValueError("prior_cap must be <= 1")
        if abs(self.coef_edge + self.coef_node + self.coef_phase - 1.0) > 1e-9:
            raise ValueError("likelihood coefficients must sum to 1.0")


@dataclass(frozen=True)
class CorrelatorConfig:
    tau_seconds: float = 300.0
    w_min: float = 0.15
    decay: float = 0.7
    louvain_resolution: float = 1.0
    bayes: BayesParams = field(default_factory=BayesParams)

    def __post_init__(self) -> None:
        if self.tau_seconds <= 0 or self.w_min <= 0 or self.louvain_resolution <= 0:
            raise ValueError("config constants must be positive")
        if not 0.0 < self.decay < 1.0:
            raise ValueError("decay must be in (0,1)")


# ---------------------------------------------------------------------------
# The eight hooks
# ---------------------------------------------------------------------------

def hook_temporal(e1: SecurityEvent, e2: SecurityEvent, tau: float) -> float:
    """Exponential decay over the absolute time difference, constant tau/3."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    delta = abs((e1.timestamp - e2.timestamp).total_seconds())
    return math.exp(-delta / (tau / 3.0))


def _same_subnet24(ip1: str, ip2: str) -> bool:
    p1, p2 = ip1.split("."), ip2.split(".")
    return len(p1) == 4 and len(p2) == 4 and p1[:3] == p2[:3]


def hook_ip_linkage(e1: SecurityEvent, e2: SecurityEvent) -> float:
    """Exact IP match 1.0, NAT pivot (src/dst reversal) 0.8, same /24 0.7.

    Alternative formulations of the same network evidence take the max so
    one shared address is never double-counted.
    """
    ips1, ips2 = e1.ips(), e2.ips()
    if not ips1 or not ips2:
        return 0.0
    score = 0.0
    if ips1 & ips2:
        score = 1.0
    if (
        e1.src_ip and e1.dst_ip and e2.src_ip and e2.dst_ip
        and e1.src_ip == e2.dst_ip and e1.dst_ip == e2.src_ip
    ):
        score = max(score, 0.8)
    if score < 0.7:
        for ip1 in ips1:
            for ip2 in ips2:
                if _same_subnet24(ip1, ip2):
                    return max(score, 0.7)
    return score


SESSION_WINDOW_SECONDS = 120.0


def hook_log_cooccurrence(e1: SecurityEvent, e2: SecurityEvent) -> float:
    """Same hostname: 0.85 inside the 120 s session window, 0.4 outside."""
    if not e1.hostname or not e2.hostname or e1.hostname != e2.hostname:
        return 0.0
    delta = abs((e1.timestamp - e2.timestamp).total_seconds())
    return 0.85 if delta <= SESSION_WINDOW_SECONDS else 0.4


def hook_flow_pattern(e1: SecurityEvent, e2: SecurityEvent) -> float:
    """Additive flow-field matches: protocol 0.3, dst port 0.4, src port 0.2,
    byte-volume ratio above 0.8 adds 0.1. Absent fields contribute nothing."""
    tenths = 0  # integer accumulation keeps the full sum exactly 1.0
    if e1.protocol and e2.protocol and e1.protocol == e2.protocol:
        tenths += 3
    if e1.dst_port is not None and e1.dst_port == e2.dst_port:
        tenths += 4
    if e1.src_port is not None and e1.src_port == e2.src_port:
        tenths += 2
    v1, v2 = e1.byte_volume(), e2.byte_volume()
    if v1 and v2 and v1 > 0 and v2 > 0:
        if min(v1, v2) / max(v1, v2) > 0.8:
            tenths += 1
    return min(tenths, 10) / 10.0


def hook_ioc_overlap(e1: SecurityEvent, e2: SecurityEvent) -> float:
    """0.3 per shared indicator value, capped at 1.0."""
    return min(0.3 * len(e1.iocs & e2.iocs), 1.0)


def hook_mitre_chaining(e1: SecurityEvent, e2: SecurityEvent) -> float:
    """Kill-chain adjacency: d=1 -> 1.0, d=0 -> 0.8, d=2 -> 0.6, then a
    linear decay 0.4 - 0.1*d clamped at zero (negative weights are
    meaningless in [0,1])."""
    o1, o2 = e1.kill_chain_order(), e2.kill_chain_order()
    if o1 is None or o2 is None:
        return 0.0
    d = abs(o1 - o2)
    if d == 1:
        return 1.0
    if d == 0:
        return 0.8
    if d == 2:
        return 0.6
    return max(0.4 - 0.1 * d, 0.0)


JACCARD_THRESHOLD = 0.3


def _cmdline_jaccard(c1: str, c2: str) -> float:
    t1 = set(c1.lower().split())
    t2 = set(c2.lower().split())
    if not t1 or not t2:
        return 0.0
    return len(t1 & t2) / len(t1 | t2)


def hook_behavioural(e1: SecurityEvent, e2: SecurityEvent) -> float:
    """Strongest endpoint signal wins: parent-child 0.7, same process 0.5,
    command-line Jaccard above 0.3 contributes its own value, same file
    path 0.4."""
    candidates = [0.0]
    if e1.process_name and e2.parent_process and e1.process_name == e2.parent_process:
        candidates.append(0.7)
    if e2.process_name and e1.parent_process and e2.process_name == e1.parent_process:
        candidates.append(0.7)
    if e1.process_name and e2.process_name and e1.process_name == e2.process_name:
        candidates.append(0.5)
    if e1.command_line and e2.command_line:
        jaccard = _cmdline_jaccard(e1.command_line, e2.command_line)
        if jaccard > JACCARD_THRESHOLD:
            candidates.append(jaccard)
    if e1.file_path and e2.file_path and e1.file_path == e2.file_path:
        candidates.append(0.4)
    return max(candidates)


def hook_user_session(e1: SecurityEvent, e2: SecurityEvent) -> float:
    """Same user account: 0.9."""
    if e1.user and e2.user and e1.user == e2.user:
        return 0.9
    return 0.0


def compute_hooks(e1: SecurityEvent, e2: SecurityEvent, tau: float) -> HookVector:
    return HookVector(
        temporal=hook_temporal(e1, e2, tau),
        ip_linkage=hook_ip_linkage(e1, e2),
        log_cooccurrence=hook_log_cooccurrence(e1, e2),
        flow_pattern=hook_flow_pattern(e1, e2),
        ioc_overlap=hook_ioc_overlap(e1, e2),
        mitre_chaining=hook_mitre_chaining(e1, e2),
        behavioural=hook_behavioural(e1, e2),
        user_session=hook_user_session(e1, e2),
    )


def composite_weight(hooks: "HookVector | Sequence[float]", decay: float = 0.7) -> float:
    """Rank-discounted sum of hook values, clamped to 1.0.

    Nonzero values are sorted descending; the i-th strongest contributes
    w_i * decay**i, so many weak hooks cannot inflate the composite past
    the dominant signals.
    """
    if not 0.0 < decay < 1.0:
        raise ValueError("decay must be in (0,1)")
    values = hooks.values() if isinstance(hooks, HookVector) else tuple(hooks)
    ranked = sorted((v for v in values if v > 0.0), reverse=True)
    total = sum(v * decay ** i for i, v in enumerate(ranked))
    return min(total, 1.0)


# ---------------------------------------------------------------------------
# Graph construction
# ---------------------------------------------------------------------------

def build_graph(events: Sequence[SecurityEvent], config: Optional[CorrelatorConfig] = None) -> CorrelationGraph:
    """Evaluate all unordered pairs; keep edges at or above w_min."""
    config = config or CorrelatorConfig()
    graph = CorrelationGraph(events={e.event_id: e for e in events})
    ordered = sorted(events, key=lambda e: e.event_id)
    for i in range(len(ordered)):
        for j in range(i + 1, len(ordered)):
            e1, e2 = ordered[i], ordered[j]
            graph.pairs_evaluated += 1
            hooks = compute_hooks(e1, e2, config.tau_seconds)
            weight = composite_weight(hooks, config.decay)
            if weight >= config.w_min:
                key = (e1.event_id, e2.event_id) if e1.event_id < e2.event_id else (e2.event_id, e1.event_id)
                graph.edges[key] = Edge(key[0], key[1], weight, hooks)
    return graph


# ---------------------------------------------------------------------------
# Community detection
# ---------------------------------------------------------------------------

def _connected_components(adj: Dict[str, Dict[str, float]]) -> List[List[str]]:
    seen: set = set()
    components: List[List[str]] = []
    for start in sorted(adj):
        if start in seen:
            continue
        stack, component = [start], []
        seen.add(start)
        while stack:
            node = stack.pop()
            component.append(node)
            for neighbor in sorted(adj[node]):
                if neighbor not in seen:
                    seen.add(neighbor)
                    stack.append(neighbor)
        components.append(sorted(component))
    return components


def _louvain_level(adj: Dict[str, Dict[str, float]],
                   self_loops: Dict[str, float],
                   resolution: float) -> Tuple[Dict[str, int], bool]:
    """One Louvain level: greedy local moves until no gain.

    Nodes are visited in ascending id order and equal-gain moves join the
    lowest-indexed community, which makes the result deterministic.
    """
    nodes = sorted(adj)
    node_index = {n: i for i, n in enumerate(nodes)}
    node2com = {n: node_index[n] for n in nodes}
    degree = {
        n: sum(adj[n].values()) + 2.0 * self_loops.get(n, 0.0) for n in nodes
    }
    two_m = sum(degree.values())
    if two_m == 0:
        return node2com, False
    com_tot = {node2com[n]: degree[n] for n in nodes}

    moved_any = False
    improved = True
    passes = 0
    while improved and passes < 100:
        improved = False
        passes += 1
        for node in nodes:
            current = node2com[node]
            k_i = degree[node]
            com_tot[current] -= k_i
            # weight from node into each neighboring community
            links: Dict[int, float] = {}
            for neighbor, weight in adj[node].items():
                links[node2com[neighbor]] = links.get(node2com[neighbor], 0.0) + weight
            best_com, best_gain = current, links.get(current, 0.0) - resolution * com_tot[current] * k_i / two_m
            for com in sorted(links):
                gain = links[com] - resolution * com_tot.get(com, 0.0) * k_i / two_m
                if gain > best_gain + 1e-12 or (
                    abs(gain - best_gain) <= 1e-12 and com < best_com
                ):
                    best_com, best_gain = com, gain
            node2com[node] = best_com
            com_tot[best_com] = com_tot.get(best_com, 0.0) + k_i
            if best_com != current:
                improved = True
                moved_any = True
    return node2com, moved_any


_EXACT_SEARCH_MAX_NODES = 8


def _exact_max_modularity(adj: Dict[str, Dict[str, float]],
                          resolution: float) -> List[List[str]]:
    """Exhaustive max-modularity partition for small graphs.

    Greedy local moves can stall in pair-partitions on chain-like graphs,
    so graphs small enough to enumerate get the true optimum; ties prefer
    the lexicographically earliest partition by construction order.
    """
    nodes = sorted(adj)
    two_m = sum(w for n in adj for w in adj[n].values())
    degree = {n: sum(adj[n].values()) for n in nodes}

    def modularity(blocks: List[List[str]]) -> float:
        q = 0.0
        for block in blocks:
            for a in block:
                for b in block:
                    q += adj[a].get(b, 0.0) - resolution * degree[a] * degree[b] / two_m
        return q / two_m

    best_q = float("-inf")
    best: List[List[str]] = [[n] for n in nodes]

    def expand(remaining: List[str], blocks: List[List[str]]) -> None:
        nonlocal best_q, best
        if not remaining:
            q = modularity(blocks)
            if q > best_q + 1e-12:
                best_q, best = q, [sorted(b) for b in blocks]
            return
        head, rest = remaining[0], remaining[1:]
        for block in blocks:
            block.append(head)
            expand(rest, blocks)
            block.pop()
        blocks.append([head])
        expand(rest, blocks)
        blocks.pop()

    expand(nodes, [])
    return sorted(best, key=lambda c: c[0])


def detect_communities(graph: CorrelationGraph, resolution: float = 1.0) -> List[List[str]]:
    """Modularity communities with a connected-component fallback.

    Graphs of up to 8 nodes are solved exactly (enumerated max-modularity
    partition); larger graphs run deterministic Louvain. The fallback
    applies when the graph has fewer than two edges or when optimization
    degenerates to all-singleton communities. Output clusters are sorted
    lists, ordered by their first member.
    """
    adj = graph.adjacency()
    if len(graph.edges) < 2:
        return _connected_components(adj)
    if len(adj) <= _EXACT_SEARCH_MAX_NODES:
        clusters = _exact_max_modularity(adj, resolution)
        if all(len(c) == 1 for c in clusters):
            return _connected_components(adj)
        return clusters

    # hierarchical passes: collapse communities into super nodes and repeat
    partition = {n: i for i, n in enumerate(sorted(adj))}
    current_adj: Dict[str, Dict[str, float]] = {
        n: dict(neigh) for n, neigh in adj.items()
    }
    self_loops: Dict[str, float] = {n: 0.0 for n in adj}
    label_members: Dict[str, List[str]] = {n: [n] for n in adj}

    while True:
        node2com, moved = _louvain_level(current_adj, self_loops, resolution)
        if not moved:
            break
        groups: Dict[int, List[str]] = {}
        for node, com in node2com.items():
            groups.setdefault(com, []).append(node)
        new_members: Dict[str, List[str]] = {}
        com_label = {}
        for com, members in groups.items():
            label = min(min(label_members[m]) for m in members)
            com_label[com] = label
            merged: List[str] = []
            for member in members:
                merged.extend(label_members[member])
            new_members[label] = sorted(merged)
        new_adj: Dict[str, Dict[str, float]] = {lbl: {} for lbl in new_members}
        new_selfs: Dict[str, float] = {lbl: 0.0 for lbl in new_members}
        for node, neigh in current_adj.items():
            la = com_label[node2com[node]]
            new_selfs[la] += self_loops.get(node, 0.0)
            for other, weight in neigh.items():
                lb = com_label[node2com[other]]
                if la == lb:
                    new_selfs[la] += weight / 2.0  # each intra edge seen twice
                else:
                    new_adj[la][lb] = new_adj[la].get(lb, 0.0) + weight
        current_adj, self_loops, label_members = new_adj, new_selfs, new_members
        if len(new_members) == 1:
            break

    clusters = sorted(label_members.values(), key=lambda c: c[0])
    if all(len(c) == 1 for c in clusters):
        return _connected_components(adj)
    return clusters


# ---------------------------------------------------------------------------
# Scenarios
# ---------------------------------------------------------------------------

class ValidationStatus(str, Enum):
    PENDING = "Pending"
    VALIDATED = "Validated"
    INVALIDATED = "Invalidated"


class Sophistication(str, Enum):
    LOW = "low"
    MODERATE = "moderate"
    HIGH = "high"


@dataclass(frozen=True)
class ChainStep:
    event_id: str
    phase: KillChainPhase
    timestamp: datetime
    technique: Optional[str] = None
    explanation: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return {
            "event_id": self.event_id,
            "phase": self.phase.label,
            "timestamp": format_timestamp(self.timestamp),
            "technique": self.technique,
            "explanation": self.explanation,
        }


@dataclass(frozen=True)
class ThreatActorProfile:
    technique_count: int = 0
    phases_covered: int = 0
    label: str = "Unknown"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "technique_count": self.technique_count,
            "phases_covered": self.phases_covered,
            "label": self.label,
        }


@dataclass(frozen=True)
class AttackScenario:
    """Ordered attack hypothesis over a correlated event cluster."""

    scenario_id: str
    cluster_events: Tuple[str, ...]
    chain: Tuple[ChainStep, ...]
    narrative: str = ""
    confidence: float = 0.5
    bayesian_score: float = 0.0
    sophistication: Sophistication = Sophistication.LOW
    threat_actor_profile: ThreatActorProfile = field(default_factory=ThreatActorProfile)
    edge_reasonings: Dict[str, str] = field(default_factory=dict)
    validation: ValidationStatus = ValidationStatus.PENDING
    operator_notes: str = ""
    attack_category: str = ""
    provenance: str = "provider"  # or "temporal_fallback"
    cluster_iocs: Tuple[str, ...] = ()
    created_at: datetime = field(default_factory=lambda: parse_timestamp("1970-01-01T00:00:00Z"))

    def __post_init__(self) -> None:
        cluster = set(self.cluster_events)
        for step in self.chain:
            if step.event_id not in cluster:
                raise ValueError(f"chain event {step.event_id} outside cluster")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence out of [0,1]")
        if not 0.0 <= self.bayesian_score <= 1.0:
            raise ValueError("bayesian_score out of [0,1]")

    def techniques(self) -> Tuple[str, ...]:
        seen: List[str] = []
        for step in self.chain:
            if step.technique and step.technique not in seen:
                seen.append(step.technique)
        return tuple(seen)

    def phases(self) -> Tuple[KillChainPhase, ...]:
        seen: List[KillChainPhase] = []
        for step in self.chain:
            if step.phase not in seen:
                seen.append(step.phase)
        return tuple(seen)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scenario_id": self.scenario_id,
            "cluster_events": list(self.cluster_events),
            "chain": [step.to_dict() for step in self.chain],
            "narrative": self.narrative,
            "confidence": self.confidence,
            "bayesian_score": self.bayesian_score,
            "sophistication": self.sophistication.value,
            "threat_actor_profile": self.threat_actor_profile.to_dict(),
            "edge_reasonings": dict(self.edge_reasonings),
            "validation": self.validation.value,
            "operator_notes": self.operator_notes,
            "attack_category": self.attack_category,
            "provenance": self.provenance,
            "cluster_iocs": list(self.cluster_iocs),
            "created_at": format_timestamp(self.created_at),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "AttackScenario":
        return cls(
            scenario_id=data["scenario_id"],
            cluster_events=tuple(data["cluster_events"]),
            chain=tuple(
                ChainStep(
                    event_id=s["event_id"],
                    phase=_phase_from_label(s["phase"]),
                    timestamp=parse_timestamp(s["timestamp"]),
                    technique=s.get("technique"),
                    explanation=s.get("explanation", ""),
                )
                for s in data.get("chain", ())
            ),
            narrative=data.get("narrative", ""),
            confidence=data.get("confidence", 0.5),
            bayesian_score=data.get("bayesian_score", 0.0),
            sophistication=Sophistication(data.get("sophistication", "low")),
            threat_actor_profile=ThreatActorProfile(**data.get("threat_actor_profile", {})),
            edge_reasonings=dict(data.get("edge_reasonings", {})),
            validation=ValidationStatus(data.get("validation", "Pending")),
            operator_notes=data.get("operator_notes", ""),
            attack_category=data.get("attack_category", ""),
            provenance=data.get("provenance", "provider"),
            cluster_iocs=tuple(data.get("cluster_iocs", ())),
            created_at=parse_timestamp(data["created_at"]) if data.get("created_at") else parse_timestamp("1970-01-01T00:00:00Z"),
        )


class HypothesisProvider(Protocol):
    """Turns a cluster prompt into structured hypothesis JSON text."""

    def generate(self, prompt: str) -> str: ...


def _phase_from_label(value: str) -> KillChainPhase:
    text = str(value).strip().lower()
    for phase in KillChainPhase:
        if phase.label.lower() == text or phase.name.lower() == text:
            return phase
    mapped = TACTIC_NAME_TO_PHASE.get(text)
    if mapped is not None:
        return mapped
    raise ValueError(f"unknown kill-chain phase label: {value!r}")


def build_hypothesis_prompt(cluster: Sequence[SecurityEvent], category: str) -> str:
    """JSON event summary plus the estimated sophistication for the cluster."""
    summary = [
        {
            "event_id": e.event_id,
            "timestamp": format_timestamp(e.timestamp),
            "source_type": e.source_type.value,
            "src_ip": e.src_ip,
            "dst_ip": e.dst_ip,
            "src_port": e.src_port,
            "dst_port": e.dst_port,
            "iocs": sorted(e.iocs),
            "ioas": sorted(e.ioas),
            "semantic_tags": e.semantic_tags.to_dict(),
            "message": e.message[:200],
        }
        for e in sorted(cluster, key=lambda e: (e.timestamp, e.event_id))
    ]
    phases = {e.kill_chain_order() for e in cluster if e.kill_chain_order() is not None}
    sophistication = _sophistication_band(len(phases)).value
    return json.dumps(
        {
            "attack_category": category,
            "estimated_sophistication": sophistication,
            "events": summary,
            "instruction": (
                "Order the events into one or more attack chains. Return JSON: "
                '{"hypotheses": [{"chain": [{"event_id", "phase", "technique", '
                '"explanation"}], "narrative", "confidence"}]}'
            ),
        },
        sort_keys=True,
    )


def _sophistication_band(phases_covered: int) -> Sophistication:
    if phases_covered < 2:
        return Sophistication.LOW
    if phases_covered <= 4:
        return Sophistication.MODERATE
    return Sophistication.HIGH


def _scenario_id(cluster_ids: Sequence[str], index: int) -> str:
    seed = "|".join(sorted(cluster_ids)) + f"#{index}"
    return f"scn-{uuid.uuid5(uuid.NAMESPACE_OID, seed).hex[:12]}"


def _nearest_phase_fill(events: Sequence[SecurityEvent]) -> List[KillChainPhase]:
    """Phase per event; untagged events inherit the nearest preceding tag,
    or Reconnaissance when nothing precedes."""
    phases: List[KillChainPhase] = []
    last = KillChainPhase.RECONNAISSANCE
    for event in events:
        order = event.kill_chain_order()
        if order is not None:
            last = KillChainPhase(order)
        phases.append(last)
    return phases


def _temporal_fallback(cluster: Sequence[SecurityEvent], index: int,
                       category: str, created_at: datetime,
                       provenance: str = "temporal_fallback") -> AttackScenario:
    ordered = sorted(cluster, key=lambda e: (e.timestamp, e.event_id))
    phases = _nearest_phase_fill(ordered)
    chain = tuple(
        ChainStep(
            event_id=e.event_id,
            phase=phase,
            timestamp=e.timestamp,
            technique=min(e.ioas) if e.ioas else None,
            explanation=f"Temporal chain step {i + 1}: {e.message[:120]}",
        )
        for i, (e, phase) in enumerate(zip(ordered, phases))
    )
    return AttackScenario(
        scenario_id=_scenario_id([e.event_id for e in cluster], index),
        cluster_events=tuple(e.event_id for e in ordered),
        chain=chain,
        narrative="Chronological chain hypothesis derived from event timestamps.",
        confidence=0.5,
        attack_category=category,
        provenance=provenance,
        created_at=created_at,
    )


def _parse_hypotheses(text: str, cluster: Mapping[str, SecurityEvent]) -> List[Dict[str, Any]]:
    data = json.loads(text)
    if isinstance(data, dict):
        data = data.get("hypotheses", [data] if "chain" in data else [])
    if not isinstance(data, list) or not data:
        raise ValueError("hypothesis payload is not a non-empty list")
    parsed = []
    for doc in data:
        chain = doc["chain"]
        if not chain:
            raise ValueError("empty chain")
        steps = []
        for step in chain:
            event_id = step["event_id"]
            if event_id not in cluster:
                raise ValueError(f"chain references event outside cluster: {event_id}")
            steps.append(
                {
                    "event_id": event_id,
                    "phase": _phase_from_label(step["phase"]),
                    "technique": step.get("technique"),
                    "explanation": step.get("explanation", ""),
                }
            )
        confidence = float(doc.get("confidence", 0.5))
        if not 0.0 <= confidence <= 1.0:
            raise ValueError(f"confidence out of range: {confidence}")
        parsed.append(
            {
                "steps": steps,
                "narrative": str(doc.get("narrative", "")),
                "confidence": confidence,
                "attack_category": doc.get("attack_category", ""),
            }
        )
    return parsed


def _edge_reasoning(graph: CorrelationGraph, a: str, b: str) -> str:
    edge = graph.edge(a, b)
    if edge is None:
        return f"{a} -> {b}: no direct correlation edge (temporal ordering only)"
    contributions = ", ".join(
        f"{name}={value:.2f}" for name, value in edge.hooks.to_dict().items() if value > 0
    )
    return f"{a} -> {b}: composite {edge.composite_weight:.3f} ({contributions})"


def _finalize(scenario: AttackScenario, graph: CorrelationGraph,
              cluster: Mapping[str, SecurityEvent], config: CorrelatorConfig) -> AttackScenario:
    reasonings = {}
    for first, second in zip(scenario.chain, scenario.chain[1:]):
        reasonings[f"{first.event_id}->{second.event_id}"] = _edge_reasoning(
            graph, first.event_id, second.event_id
        )
    chain = tuple(
        step if step.explanation else replace(
            step,
            explanation=f"{step.phase.label}: {cluster[step.event_id].message[:120]}",
        )
        for step in scenario.chain
    )
    iocs = sorted(set().union(*(cluster[eid].iocs for eid in scenario.cluster_events)) if scenario.cluster_events else set())
    scored = replace(
        scenario,
        chain=chain,
        edge_reasonings=reasonings,
        cluster_iocs=tuple(iocs),
    )
    scored = replace(scored, bayesian_score=bayesian_score(scored, graph, config, cluster))
    profile = profile_threat_actor(scored)
    return replace(
        scored,
        threat_actor_profile=profile,
        sophistication=_sophistication_band(profile.phases_covered),
    )


def generate_hypotheses(
    cluster: Sequence[SecurityEvent],
    graph: CorrelationGraph,
    category: str,
    provider: Optional[HypothesisProvider],
    config: Optional[CorrelatorConfig] = None,
) -> List[AttackScenario]:
    """Provider-backed scenario generation for one community.

    Clusters below two events are skipped. Invalid or unparseable provider
    output, and provider transport failures, fall back to the temporal
    chain hypothesis (confidence 0.5, provenance flagged).
    """
    config = config or CorrelatorConfig()
    if len(cluster) < 2:
        return []
    by_id = {e.event_id: e for e in cluster}
    created_at = max(e.timestamp for e in cluster)
    if provider is None:
        return [_finalize(_temporal_fallback(cluster, 0, category, created_at, "no_provider"),
                          graph, by_id, config)]
    prompt = build_hypothesis_prompt(cluster, category)
    try:
        raw = provider.generate(prompt)
        parsed = _parse_hypotheses(raw, by_id)
    except Exception as exc:
        logger.warning("hypothesis provider failed (%s); using temporal fallback", exc)
        return [_finalize(_temporal_fallback(cluster, 0, category, created_at),
                          graph, by_id, config)]
    scenarios = []
    for index, doc in enumerate(parsed):
        chain = tuple(
            ChainStep(
                event_id=s["event_id"],
                phase=s["phase"],
                timestamp=by_id[s["event_id"]].timestamp,
                technique=s["technique"],
                explanation=s["explanation"],
            )
            for s in doc["steps"]
        )
        scenario = AttackScenario(
            scenario_id=_scenario_id(list(by_id), index),
            cluster_events=tuple(sorted(by_id)),
            chain=chain,
            narrative=doc["narrative"],
            confidence=doc["confidence"],
            attack_category=doc["attack_category"] or category,
            provenance="provider",
            created_at=created_at,
        )
        scenarios.append(_finalize(scenario, graph, by_id, config))
    return scenarios


def bayesian_score(
    scenario: AttackScenario,
    graph: CorrelationGraph,
    config: Optional[CorrelatorConfig] = None,
    events: Optional[Mapping[str, SecurityEvent]] = None,
) -> float:
    """Posterior probability that the chain is a genuine attack.

    prior = min(base + techniques * increment, cap); the likelihood blends
    mean consecutive edge weight, mean node confidence, and kill-chain
    phase coverage out of 7; the marginal mixes in the false-alarm rate for
    the complement.
    """
    config = config or CorrelatorConfig()
    params = config.bayes
    if not scenario.chain:
        raise ValueError("scenario chain must be non-empty")
    events = events or graph.events
    prior = min(params.base_prior + len(scenario.techniques()) * params.per_technique,
                params.prior_cap)
    pairs = list(zip(scenario.chain, scenario.chain[1:]))
    mean_edge = (
        sum(graph.edge_weight(a.event_id, b.event_id) for a, b in pairs) / len(pairs)
        if pairs
        else 0.0
    )
    confidences = [events[s.event_id].confidence for s in scenario.chain if s.event_id in events]
    mean_conf = sum(confidences) / len(confidences) if confidences else 0.0
    coverage = len(set(scenario.phases())) / 7.0
    likelihood = (
        params.coef_edge * mean_edge
        + params.coef_node * mean_conf
        + params.coef_phase * coverage
    )
    if likelihood == 0.0:
        return 0.0
    marginal = likelihood * prior + params.false_alarm * (1.0 - prior)
    return likelihood * prior / marginal


def profile_threat_actor(scenario: AttackScenario) -> ThreatActorProfile:
    """Technique and phase counts; the label stays Unknown without an
    external actor mapping."""
    return ThreatActorProfile(
        technique_count=len(scenario.techniques()),
        phases_covered=len(set(scenario.phases())),
        label="Unknown",
    )


def rank_scenarios(scenarios: Iterable[AttackScenario]) -> List[AttackScenario]:
    return sorted(scenarios, key=lambda s: (-s.bayesian_score, s.scenario_id))
