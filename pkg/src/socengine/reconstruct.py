"""Three-phase attack reconstruction orchestration.

Wires the scanner (phase 1), the correlation/hypothesis engine (phase 2),
and the exporters (phase 3) into one session: scan and rank raw sources,
build the hook graph over the top-N events, detect communities, generate
and score scenarios per community, and optionally write the HTML/STIX/JSON
artifacts. The top-N cap bounds the quadratic pair evaluation regardless
of raw input size.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

from .scanner import ParseError, ScanConfig, SecurityEvent, TagProvider, scan
from .scenario import (
    AttackScenario,
    CorrelationGraph,
    CorrelatorConfig,
    HypothesisProvider,
    build_graph,
    detect_communities,
    generate_hypotheses,
    rank_scenarios,
)
from .export import ScenarioStore, export_files

logger = logging.getLogger(__name__)

__all__ = ["ReconstructionResult", "reconstruct"]


@dataclass
class ReconstructionResult:
    events: List[SecurityEvent]
    graph: CorrelationGraph
    communities: List[List[str]]
    scenarios: List[AttackScenario]
    errors: List[ParseError] = field(default_factory=list)
    raw_event_count: int = 0
    timings_ms: Dict[str, float] = field(default_factory=dict)

    @property
    def pairs_evaluated(self) -> int:
        return self.graph.pairs_evaluated

    def summary(self) -> Dict[str, Any]:
        return {
            "raw_events": self.raw_event_count,
            "scanned_events": len(self.events),
            "parse_errors": len(self.errors),
            "graph_edges": len(self.graph.edges),
            "pairs_evaluated": self.pairs_evaluated,
            "communities": len(self.communities),
            "scenarios": len(self.scenarios),
            "timings_ms": dict(self.timings_ms),
        }


def reconstruct(
    sources: Sequence,
    scan_config: Optional[ScanConfig] = None,
    correlator_config: Optional[CorrelatorConfig] = None,
    provider: Optional[HypothesisProvider] = None,
    category: str = "Unknown",
    tagger: Optional[TagProvider] = None,
    scenario_store: Optional[ScenarioStore] = None,
    out_dir: "str | Path | None" = None,
) -> ReconstructionResult:
    """Run the full scan -> correlate -> export pipeline over raw sources."""
    scan_config = scan_config or ScanConfig()
    correlator_config = correlator_config or CorrelatorConfig()

    t0 = time.perf_counter()
    scan_result = scan(sources, scan_config, tagger=tagger)
    t1 = time.perf_counter()

    graph = build_graph(scan_result.events, correlator_config)
    communities = detect_communities(graph, correlator_config.louvain_resolution)
    by_id = graph.events
    scenarios: List[AttackScenario] = []
    for community in communities:
        cluster = [by_id[eid] for eid in community]
        scenarios.extend(
            generate_hypotheses(cluster, graph, category, provider, correlator_config)
        )
    scenarios = rank_scenarios(scenarios)
    t2 = time.perf_counter()

    if scenario_store is not None:
        for scenario in scenarios:
            scenario_store.save(scenario, graph=graph)
    if out_dir is not None:
        for scenario in scenarios:
            export_files(scenario, graph, out_dir)
    t3 = time.perf_counter()

    return ReconstructionResult(
        events=scan_result.events,
        graph=graph,
        communities=communities,
        scenarios=scenarios,
        errors=scan_result.errors,
        raw_event_count=scan_result.raw_count,
        timings_ms={
            "phase1_scan": (t1 - t0) * 1000.0,
            "phase2_correlate": (t2 - t1) * 1000.0,
            "phase3_export": (t3 - t2) * 1000.0,
        },
    )
