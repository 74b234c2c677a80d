import json
import re
import uuid
from datetime import timedelta

import pytest

from socengine.export import (
    KILL_CHAIN_PALETTE,
    ScenarioStore,
    build_scenario_timeline,
    collapse_supernodes,
    compare,
    export_json,
    export_stix,
    render_graph,
    write_html,
)
from socengine.scanner import SemanticTags
from socengine.scenario import (
    AttackScenario,
    ChainStep,
    CorrelationGraph,
    Edge,
    HookVector,
    ValidationStatus,
    build_graph,
    generate_hypotheses,
)
from socengine.providers import StubHypothesisProvider
from socengine.store import NotFoundError, TenantStore
from socengine.uicr import KillChainPhase

from conftest import T0, make_event


def _at(seconds):
    return T0 + timedelta(seconds=seconds)


def _scenario(n=5, techniques=("T1046", "T1110.001", "T1041"), iocs=("198.51.100.77", "evil.test")):
    chain = []
    for i in range(n):
        chain.append(ChainStep(
            event_id=f"e{i:04d}",
            phase=KillChainPhase(min(i + 1, 7)),
            timestamp=_at(i * 60),
            technique=techniques[i % len(techniques)] if techniques else None,
            explanation=f"step {i}",
        ))
    return AttackScenario(
        scenario_id="scn-fixed0001",
        cluster_events=tuple(f"e{i:04d}" for i in range(n)),
        chain=tuple(chain),
        narrative="test scenario",
        confidence=0.8,
        bayesian_score=0.5,
        cluster_iocs=tuple(iocs),
        created_at=T0,
    )


def _graph_for(scenario):
    graph = CorrelationGraph()
    for i, step in enumerate(scenario.chain):
        graph.events[step.event_id] = make_event(i, ts=step.timestamp)
    ids = [s.event_id for s in scenario.chain]
    for a, b in zip(ids, ids[1:]):
        key = (a, b) if a < b else (b, a)
        graph.edges[key] = Edge(key[0], key[1], 0.6, HookVector(temporal=0.6))
    return graph


class TestRenderGraph:
    def test_five_node_chain(self):
        scenario = _scenario(5)
        document = render_graph(scenario, _graph_for(scenario))
        assert len(document.nodes) == 5
        assert len(document.edges) == 4

    def test_empty_chain_valid_document(self):
        scenario = _scenario(0, techniques=(), iocs=())
        document = render_graph(scenario, CorrelationGraph())
        assert document.nodes == () and document.edges == ()

    def test_palette_colors(self):
        scenario = _scenario(7)
        document = render_graph(scenario, _graph_for(scenario))
        c2_nodes = [n for n in document.nodes if n.label.startswith("CommandAndControl")]
        assert c2_nodes and all(n.phase_color == "#9467bd" for n in c2_nodes)
        recon = [n for n in document.nodes if n.label.startswith("Reconnaissance")]
        assert recon[0].phase_color == "#1f77b4"

    def test_palette_complete(self):
        assert set(KILL_CHAIN_PALETTE) == set(KillChainPhase)

    def test_edge_visuals_linear_in_weight(self):
        scenario = _scenario(3)
        document = render_graph(scenario, _graph_for(scenario))
        for edge in document.edges:
            assert edge.thickness == pytest.approx(1.0 + 4.0 * 0.6)
            assert edge.opacity == pytest.approx(0.3 + 0.7 * 0.6)

    def test_tooltips_carry_timestamp_and_explanation(self):
        scenario = _scenario(2)
        document = render_graph(scenario, _graph_for(scenario))
        assert "step 0" in document.nodes[0].tooltip
        assert "2026-02-23" in document.nodes[0].tooltip

    def test_html_self_contained(self, tmp_path):
        scenario = _scenario(4)
        document = render_graph(scenario, _graph_for(scenario))
        path = write_html(document, tmp_path / "out.html", title="t")
        html = path.read_text()
        assert "http://" not in html and "https://" not in html
        assert "graph-data" in html


class TestCollapseSupernodes:
    def _community_graph(self, sizes, bridge_weight=0.0):
        graph = CorrelationGraph()
        offset = 0
        anchors = []
        for size in sizes:
            ids = [f"e{offset + i:04d}" for i in range(size)]
            for i, event_id in enumerate(ids):
                graph.events[event_id] = make_event(offset + i)
            for a, b in zip(ids, ids[1:]):
                graph.edges[(a, b)] = Edge(a, b, 0.9, HookVector(temporal=0.9))
            anchors.append(ids[0])
            offset += size
        if bridge_weight and len(anchors) > 1:
            a, b = sorted((anchors[0], anchors[1]))
            graph.edges[(a, b)] = Edge(a, b, bridge_weight, HookVector(temporal=bridge_weight))
        return graph

    def test_large_community_collapses(self):
        graph = self._community_graph([150])
        communities = [sorted(graph.events)]
        document = collapse_supernodes(graph, threshold=100, communities=communities)
        supers = [n for n in document.nodes if n.super_node]
        assert len(supers) == 1
        assert supers[0].member_count == 150
        assert len(supers[0].members) == 150

    def test_exactly_threshold_not_collapsed(self):
        graph = self._community_graph([100])
        document = collapse_supernodes(graph, threshold=100)
        assert all(not n.super_node for n in document.nodes)
        assert len(document.nodes) == 100

    def test_mixed_graph(self):
        graph = self._community_graph([120, 5], bridge_weight=0.2)
        ids = sorted(graph.events)
        document = collapse_supernodes(graph, threshold=100,
                                       communities=[ids[:120], ids[120:]])
        supers = [n for n in document.nodes if n.super_node]
        plain = [n for n in document.nodes if not n.super_node]
        assert len(supers) == 1 and len(plain) == 5

    def test_surviving_edges_kept(self):
        graph = self._community_graph([3, 4], bridge_weight=0.0)
        document = collapse_supernodes(graph, threshold=100)
        # nothing collapsed: every original edge must survive
        assert len(document.edges) == len(graph.edges)

    def test_bridge_rewired_to_super_node(self):
        graph = self._community_graph([120, 5], bridge_weight=0.25)
        ids = sorted(graph.events)
        document = collapse_supernodes(graph, threshold=100,
                                       communities=[ids[:120], ids[120:]])
        super_id = next(n.id for n in document.nodes if n.super_node)
        bridged = [e for e in document.edges if super_id in (e.a, e.b)]
        assert bridged


class TestCompare:
    def test_identical(self):
        scenario = _scenario(4)
        view = compare(scenario, scenario)
        assert set(view.shared) == set(scenario.cluster_events)
        assert view.a_only == () and view.b_only == ()

    def test_disjoint(self):
        a = _scenario(3)
        b_chain = tuple(
            ChainStep(f"x{i}", KillChainPhase(1), _at(i), None) for i in range(2)
        )
        b = AttackScenario(scenario_id="scn-b", cluster_events=("x0", "x1"),
                           chain=b_chain, created_at=T0)
        view = compare(a, b)
        assert view.shared == ()
        assert set(view.a_only) == {"e0000", "e0001", "e0002"}
        assert set(view.b_only) == {"x0", "x1"}

    def test_partial_overlap_partition(self):
        a = _scenario(4)
        b_chain = tuple(
            ChainStep(eid, KillChainPhase(1), _at(i), None)
            for i, eid in enumerate(["e0002", "e0003", "y0"])
        )
        b = AttackScenario(scenario_id="scn-b", cluster_events=("e0002", "e0003", "y0"),
                           chain=b_chain, created_at=T0)
        view = compare(a, b)
        assert set(view.shared) == {"e0002", "e0003"}
        union = set(view.shared) | set(view.a_only) | set(view.b_only)
        assert union == {"e0000", "e0001", "e0002", "e0003", "y0"}
        assert not (set(view.shared) & set(view.a_only))
        assert not (set(view.shared) & set(view.b_only))
        assert not (set(view.a_only) & set(view.b_only))

    def test_legend_tricolor(self):
        view = compare(_scenario(2), _scenario(2))
        assert view.LEGEND == {"shared": "#2ca02c", "a_only": "#d62728",
                               "b_only": "#1f77b4"}


UUID_RE = re.compile(
    r"^[0-9a-f]{8}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{4}-[0-9a-f]{12}$"
)


class TestStixExport:
    def test_object_counts(self):
        scenario = _scenario(5, techniques=("T1046", "T1110.001", "T1041"),
                             iocs=("198.51.100.77", "evil.test"))
        bundle = export_stix(scenario)
        by_type = {}
        for obj in bundle["objects"]:
            by_type.setdefault(obj["type"], []).append(obj)
        assert len(by_type["attack-pattern"]) == 3
        assert len(by_type["indicator"]) == 2
        assert len(by_type["observed-data"]) == 5
        assert len(by_type["relationship"]) == 4 + 2 * 3  # chain order + indicates

    def test_required_common_properties(self):
        bundle = export_stix(_scenario(3))
        assert bundle["type"] == "bundle"
        for obj in bundle["objects"]:
            assert obj["spec_version"] == "2.1"
            assert obj["created"] and obj["modified"]
            kind, _, raw_uuid = obj["id"].partition("--")
            assert kind == obj["type"]
            assert UUID_RE.match(raw_uuid)
            uuid.UUID(raw_uuid)

    def test_no_indicators_without_iocs(self):
        bundle = export_stix(_scenario(3, iocs=()))
        assert not [o for o in bundle["objects"] if o["type"] == "indicator"]

    def test_reexport_byte_identical(self):
        scenario = _scenario(4)
        first = json.dumps(export_stix(scenario), sort_keys=True)
        second = json.dumps(export_stix(scenario), sort_keys=True)
        assert first == second

    def test_chain_relationships_follow_order(self):
        bundle = export_stix(_scenario(3))
        rels = [o for o in bundle["objects"]
                if o["type"] == "relationship" and o["relationship_type"] == "followed-by"]
        assert len(rels) == 2
        observed = [o["id"] for o in bundle["objects"] if o["type"] == "observed-data"]
        assert rels[0]["source_ref"] == observed[0]
        assert rels[0]["target_ref"] == observed[1]

    def test_json_export_deterministic(self):
        scenario = _scenario(3)
        assert export_json(scenario) == export_json(scenario)


class TestScenarioTimeline:
    def test_sorted(self):
        chain = (
            ChainStep("b", KillChainPhase(2), _at(50), None),
            ChainStep("a", KillChainPhase(1), _at(10), None),
            ChainStep("c", KillChainPhase(3), _at(30), None),
        )
        scenario = AttackScenario(scenario_id="s", cluster_events=("a", "b", "c"),
                                  chain=chain, created_at=T0)
        out = build_scenario_timeline(scenario)
        assert [s.event_id for s in out] == ["a", "c", "b"]

    def test_empty(self):
        scenario = AttackScenario(scenario_id="s", cluster_events=(), chain=(),
                                  created_at=T0)
        assert build_scenario_timeline(scenario) == []

    def test_tie_stable_by_event_id(self):
        chain = (
            ChainStep("z", KillChainPhase(1), _at(10), None),
            ChainStep("a", KillChainPhase(1), _at(10), None),
        )
        scenario = AttackScenario(scenario_id="s", cluster_events=("z", "a"),
                                  chain=chain, created_at=T0)
        assert [s.event_id for s in build_scenario_timeline(scenario)] == ["a", "z"]


class TestValidationLifecycle:
    def _store(self):
        store = ScenarioStore(TenantStore())
        scenario = _scenario(3)
        store.save(scenario)
        return store, scenario

    def test_validate_with_note(self):
        store, scenario = self._store()
        updated = store.set_validation(scenario.scenario_id,
                                       ValidationStatus.VALIDATED, "confirmed")
        assert updated.validation is ValidationStatus.VALIDATED
        assert updated.operator_notes == "confirmed"
        reloaded = store.get(scenario.scenario_id)
        assert reloaded.validation is ValidationStatus.VALIDATED

    def test_unknown_id_raises(self):
        store, _ = self._store()
        with pytest.raises(NotFoundError):
            store.set_validation("scn-missing", ValidationStatus.VALIDATED)

    def test_reversal_keeps_full_history(self):
        store, scenario = self._store()
        store.set_validation(scenario.scenario_id, ValidationStatus.VALIDATED, "ok")
        store.set_validation(scenario.scenario_id, ValidationStatus.INVALIDATED, "reverted")
        history = store.history(scenario.scenario_id)
        assert [h["status"] for h in history] == ["Validated", "Invalidated"]

    def test_default_pending(self):
        _, scenario = self._store()
        assert scenario.validation is ValidationStatus.PENDING

    def test_export_files(self, tmp_path):
        store, scenario = self._store()
        paths = store.export_files(scenario, _graph_for(scenario), tmp_path)
        assert paths["html"].name == "scn-fixed0001.html"
        assert paths["stix"].name == "scn-fixed0001.stix.json"
        assert paths["json"].name == "scn-fixed0001.json"
        for path in paths.values():
            assert path.exists() and path.stat().st_size > 0

    def test_round_trip_serialization(self):
        store, scenario = self._store()
        assert store.get(scenario.scenario_id).to_dict() == scenario.to_dict()


class TestCollapseNeverDropsSurvivingEdges:
    def test_property(self, rng):
        for _ in range(20):
            graph = CorrelationGraph()
            n = rng.randint(4, 12)
            for i in range(n):
                graph.events[f"e{i:04d}"] = make_event(i)
            ids = sorted(graph.events)
            for _ in range(rng.randint(3, n * 2)):
                a, b = rng.sample(ids, 2)
                key = (a, b) if a < b else (b, a)
                graph.edges[key] = Edge(key[0], key[1], rng.uniform(0.15, 1.0),
                                        HookVector(temporal=0.5))
            threshold = rng.choice([2, 3, 100])
            document = collapse_supernodes(graph, threshold=threshold)
            surviving = {node.id for node in document.nodes if not node.super_node}
            rendered_pairs = {(e.a, e.b) for e in document.edges}
            for (a, b) in graph.edges:
                if a in surviving and b in surviving:
                    assert (a, b) in rendered_pairs or (b, a) in rendered_pairs
