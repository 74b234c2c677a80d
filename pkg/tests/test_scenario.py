import itertools
import json
import math
import random
from datetime import timedelta

import pytest

from socengine.scanner import SemanticTags, SourceType
from socengine.scenario import (
    AttackScenario,
    BayesParams,
    CorrelationGraph,
    CorrelatorConfig,
    Edge,
    HookVector,
    Sophistication,
    bayesian_score,
    build_graph,
    composite_weight,
    compute_hooks,
    detect_communities,
    generate_hypotheses,
    hook_behavioural,
    hook_flow_pattern,
    hook_ioc_overlap,
    hook_ip_linkage,
    hook_log_cooccurrence,
    hook_mitre_chaining,
    hook_temporal,
    hook_user_session,
    profile_threat_actor,
    rank_scenarios,
)
from socengine.providers import StubHypothesisProvider
from socengine.uicr import KillChainPhase

from conftest import T0, make_event


def _at(seconds: float):
    return T0 + timedelta(seconds=seconds)


def _tagged(i, order, ts=None, **kw):
    return make_event(i, ts=ts or T0,
                      semantic_tags=SemanticTags(kill_chain_phase=KillChainPhase(order)),
                      **kw)


class TestTemporalHook:
    def test_zero_delta(self):
        assert hook_temporal(make_event(1), make_event(2), 300) == 1.0

    def test_anchor_at_tau_third(self):
        w = hook_temporal(make_event(1), make_event(2, ts=_at(100)), 300)
        assert w == pytest.approx(0.3679, abs=5e-4)

    def test_anchor_at_tau(self):
        w = hook_temporal(make_event(1), make_event(2, ts=_at(300)), 300)
        assert w == pytest.approx(0.0498, abs=5e-4)

    def test_symmetric(self):
        a, b = make_event(1), make_event(2, ts=_at(42))
        assert hook_temporal(a, b, 300) == hook_temporal(b, a, 300)

    def test_closed_form(self):
        for delta in (0, 10, 60, 150, 600):
            w = hook_temporal(make_event(1), make_event(2, ts=_at(delta)), 300)
            assert w == pytest.approx(math.exp(-delta / 100.0), abs=1e-12)


class TestIpLinkageHook:
    def test_exact_match(self):
        a = make_event(1, src_ip="10.0.0.5")
        b = make_event(2, dst_ip="10.0.0.5")
        assert hook_ip_linkage(a, b) == 1.0

    def test_nat_pivot_dominated_by_exact(self):
        a = make_event(1, src_ip="10.0.0.5", dst_ip="9.9.9.9")
        b = make_event(2, src_ip="9.9.9.9", dst_ip="10.0.0.5")
        assert hook_ip_linkage(a, b) == 1.0  # exact beats the 0.8 pivot signal

    def test_pure_pivot_without_shared_ip_is_impossible_so_subnet(self):
        a = make_event(1, src_ip="10.0.0.5")
        b = make_event(2, src_ip="10.0.0.99")
        assert hook_ip_linkage(a, b) == 0.7

    def test_no_ips(self):
        assert hook_ip_linkage(make_event(1), make_event(2)) == 0.0

    def test_unrelated(self):
        a = make_event(1, src_ip="10.0.0.5")
        b = make_event(2, src_ip="172.16.3.1")
        assert hook_ip_linkage(a, b) == 0.0


class TestLogCooccurrenceHook:
    def test_within_session_window(self):
        a = make_event(1, hostname="db01")
        b = make_event(2, hostname="db01", ts=_at(60))
        assert hook_log_cooccurrence(a, b) == 0.85

    def test_outside_window(self):
        a = make_event(1, hostname="db01")
        b = make_event(2, hostname="db01", ts=_at(600))
        assert hook_log_cooccurrence(a, b) == 0.4

    def test_different_hosts(self):
        assert hook_log_cooccurrence(make_event(1, hostname="a"),
                                     make_event(2, hostname="b")) == 0.0


class TestFlowPatternHook:
    def test_all_four_sum_to_one(self):
        a = make_event(1, protocol="tcp", dst_port=443, src_port=40000,
                       payload=json.dumps({"bytes_sent": 1000, "bytes_recv": 0}))
        b = make_event(2, protocol="tcp", dst_port=443, src_port=40000,
                       payload=json.dumps({"bytes_sent": 900, "bytes_recv": 0}))
        assert hook_flow_pattern(a, b) == 1.0

    def test_dst_port_only(self):
        a = make_event(1, dst_port=53)
        b = make_event(2, dst_port=53)
        assert hook_flow_pattern(a, b) == pytest.approx(0.4)

    def test_byte_ratio_exactly_point8_excluded(self):
        a = make_event(1, payload=json.dumps({"bytes_total": 800}))
        b = make_event(2, payload=json.dumps({"bytes_total": 1000}))
        assert hook_flow_pattern(a, b) == 0.0

    def test_byte_ratio_above_point8(self):
        a = make_event(1, payload=json.dumps({"bytes_total": 810}))
        b = make_event(2, payload=json.dumps({"bytes_total": 1000}))
        assert hook_flow_pattern(a, b) == pytest.approx(0.1)


class TestIocOverlapHook:
    def test_none_shared(self):
        assert hook_ioc_overlap(make_event(1, iocs={"a"}), make_event(2, iocs={"b"})) == 0.0

    def test_two_shared(self):
        a = make_event(1, iocs={"x", "y", "z"})
        b = make_event(2, iocs={"x", "y"})
        assert hook_ioc_overlap(a, b) == pytest.approx(0.6)

    def test_four_shared_saturates(self):
        shared = {"a", "b", "c", "d"}
        assert hook_ioc_overlap(make_event(1, iocs=shared),
                                make_event(2, iocs=shared)) == 1.0

    def test_three_shared_is_point9(self):
        # 0.3 x 3 = 0.9; saturation starts at four shared indicators
        shared = {"a", "b", "c"}
        assert hook_ioc_overlap(make_event(1, iocs=shared),
                                make_event(2, iocs=shared)) == pytest.approx(0.9)


class TestMitreChainingHook:
    def test_adjacent_phases(self):
        assert hook_mitre_chaining(_tagged(1, 1), _tagged(2, 2)) == 1.0

    def test_same_phase(self):
        assert hook_mitre_chaining(_tagged(1, 4), _tagged(2, 4)) == 0.8

    def test_two_step(self):
        assert hook_mitre_chaining(_tagged(1, 1), _tagged(2, 3)) == 0.6

    def test_three_step_linear(self):
        assert hook_mitre_chaining(_tagged(1, 1), _tagged(2, 4)) == pytest.approx(0.1)

    def test_distance_four_clamps_to_zero(self):
        assert hook_mitre_chaining(_tagged(1, 1), _tagged(2, 5)) == 0.0
        assert hook_mitre_chaining(_tagged(1, 1), _tagged(2, 7)) == 0.0

    def test_unknown_phase_is_zero(self):
        assert hook_mitre_chaining(make_event(1), _tagged(2, 3)) == 0.0

    def test_phase_from_tactics(self):
        a = make_event(1, mitre_tactics={"TA0043"})
        b = make_event(2, mitre_tactics={"TA0042"})
        assert hook_mitre_chaining(a, b) == 1.0


class TestBehaviouralHook:
    def test_parent_child(self):
        a = make_event(1, process_name="cmd.exe")
        b = make_event(2, parent_process="cmd.exe")
        assert hook_behavioural(a, b) == 0.7

    def test_same_process_name(self):
        a = make_event(1, process_name="powershell.exe")
        b = make_event(2, process_name="powershell.exe")
        assert hook_behavioural(a, b) == 0.5

    def test_jaccard_below_threshold_ignored(self):
        a = make_event(1, command_line="cmd /c a b c d e f g")
        b = make_event(2, command_line="cmd /x y z w q r s")
        # overlap {cmd} of 15 distinct tokens -> well below 0.3
        assert hook_behavioural(a, b) == 0.0

    def test_jaccard_contributes_own_value(self):
        a = make_event(1, command_line="scp data.tgz evil:/tmp")
        b = make_event(2, command_line="scp data.tgz other:/tmp")
        expected = 2 / 4
        assert hook_behavioural(a, b) == pytest.approx(expected)

    def test_file_path(self):
        a = make_event(1, file_path="/etc/shadow")
        b = make_event(2, file_path="/etc/shadow")
        assert hook_behavioural(a, b) == 0.4


class TestUserSessionHook:
    def test_same_user(self):
        assert hook_user_session(make_event(1, user="root"),
                                 make_event(2, user="root")) == 0.9

    def test_different_users(self):
        assert hook_user_session(make_event(1, user="root"),
                                 make_event(2, user="bob")) == 0.0

    def test_absent_user(self):
        assert hook_user_session(make_event(1, user="root"), make_event(2)) == 0.0


def eq1_reference(values, decay=0.7):
    ranked = sorted((v for v in values if v > 0), reverse=True)
    return min(sum(w * decay**i for i, w in enumerate(ranked)), 1.0)


class TestCompositeWeight:
    def test_worked_example_two_moderate_hooks(self):
        # 0.7 + 0.7*0.7 = 1.19 clamps to 1.0
        assert composite_weight([0.7, 0.7]) == 1.0

    def test_singleton_identity(self):
        assert composite_weight([0.15]) == pytest.approx(0.15)

    def test_three_hook_hand_case(self):
        # 0.9 + 0.5*0.7 + 0.3*0.49 = 1.397 clamps to 1.0
        assert composite_weight([0.9, 0.5, 0.3]) == 1.0

    def test_empty_is_zero(self):
        assert composite_weight([]) == 0.0
        assert composite_weight(HookVector()) == 0.0

    def test_full_grid_matches_reference(self):
        grid = [0.0, 0.25, 0.5, 0.75, 1.0]
        for combo in itertools.product(grid, repeat=3):
            assert composite_weight(combo) == pytest.approx(
                eq1_reference(combo), abs=1e-12)

    def test_monotone_in_each_component(self):
        rng = random.Random(5)
        for _ in range(300):
            values = [rng.random() for _ in range(8)]
            base = composite_weight(values)
            idx = rng.randrange(8)
            bumped = list(values)
            bumped[idx] = min(1.0, bumped[idx] + rng.random() * (1 - bumped[idx]))
            assert composite_weight(bumped) >= base - 1e-12

    def test_at_least_max_component(self):
        rng = random.Random(9)
        for _ in range(300):
            values = [rng.random() for _ in range(8)]
            assert composite_weight(values) >= min(max(values), 1.0) - 1e-12

    def test_bounded_by_one(self):
        assert composite_weight([1.0] * 8) == 1.0

    def test_invalid_decay(self):
        with pytest.raises(ValueError):
            composite_weight([0.5], decay=1.0)


class TestHookRangeProperty:
    def test_all_hooks_in_unit_interval(self, rng):
        hosts = ["a", "b", None]
        users = ["root", "svc", None]
        for _ in range(400):
            def random_event(i):
                return make_event(
                    i,
                    ts=_at(rng.uniform(0, 3600)),
                    src_ip=rng.choice(["10.0.0.1", "10.0.0.2", "172.16.0.9", None]),
                    dst_ip=rng.choice(["203.0.113.7", "10.0.0.1", None]),
                    src_port=rng.choice([40000, 40001, None]),
                    dst_port=rng.choice([22, 443, None]),
                    protocol=rng.choice(["tcp", "udp", None]),
                    hostname=rng.choice(hosts),
                    user=rng.choice(users),
                    process_name=rng.choice(["cmd.exe", "sshd", None]),
                    parent_process=rng.choice(["cmd.exe", None]),
                    command_line=rng.choice(["a b c", "a b d", None]),
                    file_path=rng.choice(["/tmp/x", None]),
                    iocs=frozenset(rng.sample(["i1", "i2", "i3", "i4", "i5"],
                                              rng.randint(0, 5))),
                    mitre_tactics=frozenset(
                        rng.sample(["TA0043", "TA0001", "TA0011", "TA0040"],
                                   rng.randint(0, 2))),
                    payload=rng.choice([json.dumps({"bytes_total": rng.randint(1, 10**6)}),
                                        None]),
                )

            e1, e2 = random_event(1), random_event(2)
            hooks = compute_hooks(e1, e2, 300.0)
            for value in hooks.values():
                assert 0.0 <= value <= 1.0


class TestBuildGraph:
    def test_no_edges_for_tiny_inputs(self):
        assert build_graph([]).edges == {}
        assert build_graph([make_event(1)]).edges == {}

    def test_strong_pair_gets_edge(self):
        a = make_event(1, user="root")
        b = make_event(2, user="root")
        graph = build_graph([a, b])
        assert graph.edge_weight(a.event_id, b.event_id) == 1.0

    def test_weak_pair_pruned(self):
        a = make_event(1)
        b = make_event(2, ts=_at(3600))  # temporal ~ e^-36, nothing else
        graph = build_graph([a, b])
        assert graph.edges == {}

    def test_pair_count(self):
        events = [make_event(i, ts=_at(i * 1000)) for i in range(10)]
        graph = build_graph(events)
        assert graph.pairs_evaluated == 45

    def test_edge_stores_hooks(self):
        a = make_event(1, user="root")
        b = make_event(2, user="root")
        graph = build_graph([a, b])
        edge = graph.edge(a.event_id, b.event_id)
        assert edge.hooks.user_session == 0.9


# ---------------------------------------------------------------------------
# Community detection oracle
# ---------------------------------------------------------------------------

def brute_force_max_modularity(adj, resolution=1.0):
    """Exhaustive max-modularity partition over all set partitions."""
    nodes = sorted(adj)
    m = sum(w for n in adj for w in adj[n].values()) / 2.0
    degree = {n: sum(adj[n].values()) for n in nodes}

    def modularity(partition):
        q = 0.0
        for block in partition:
            for a in block:
                for b in block:
                    w = adj[a].get(b, 0.0)
                    q += w - resolution * degree[a] * degree[b] / (2 * m)
        return q / (2 * m)

    def partitions(items):
        if not items:
            yield []
            return
        first, rest = items[0], items[1:]
        for smaller in partitions(rest):
            for i in range(len(smaller)):
                yield smaller[:i] + [[first] + smaller[i]] + smaller[i + 1:]
            yield [[first]] + smaller

    best_q, best = -1.0, None
    for partition in partitions(nodes):
        q = modularity(partition)
        if q > best_q + 1e-12:
            best_q, best = q, partition
    return best_q, best


def graph_from_edges(edge_list):
    events = {}
    graph = CorrelationGraph()
    for a, b, w in edge_list:
        for node in (a, b):
            if node not in graph.events:
                graph.events[node] = make_event(int(node[1:]), message=node)
        key = (a, b) if a < b else (b, a)
        graph.edges[key] = Edge(key[0], key[1], w, HookVector(temporal=min(w, 1.0)))
    return graph


def partition_modularity(adj, clusters, resolution=1.0):
    m = sum(w for n in adj for w in adj[n].values()) / 2.0
    if m == 0:
        return 0.0
    degree = {n: sum(adj[n].values()) for n in adj}
    q = 0.0
    for block in clusters:
        for a in block:
            for b in block:
                q += adj[a].get(b, 0.0) - resolution * degree[a] * degree[b] / (2 * m)
    return q / (2 * m)


ORACLE_FIXTURES = [
    # two triangles joined by one weak bridge
    [("n0", "n1", 1.0), ("n1", "n2", 1.0), ("n0", "n2", 1.0),
     ("n3", "n4", 1.0), ("n4", "n5", 1.0), ("n3", "n5", 1.0),
     ("n2", "n3", 0.2)],
    # a 4-clique
    [("n0", "n1", 1.0), ("n0", "n2", 1.0), ("n0", "n3", 1.0),
     ("n1", "n2", 1.0), ("n1", "n3", 1.0), ("n2", "n3", 1.0)],
    # path of 6
    [("n0", "n1", 1.0), ("n1", "n2", 1.0), ("n2", "n3", 1.0),
     ("n3", "n4", 1.0), ("n4", "n5", 1.0)],
    # two 4-cliques with a bridge (8 nodes)
    [("n0", "n1", 1.0), ("n0", "n2", 1.0), ("n0", "n3", 1.0),
     ("n1", "n2", 1.0), ("n1", "n3", 1.0), ("n2", "n3", 1.0),
     ("n4", "n5", 1.0), ("n4", "n6", 1.0), ("n4", "n7", 1.0),
     ("n5", "n6", 1.0), ("n5", "n7", 1.0), ("n6", "n7", 1.0),
     ("n3", "n4", 0.3)],
    # weighted barbell with uneven weights
    [("n0", "n1", 0.9), ("n1", "n2", 0.8), ("n0", "n2", 0.7),
     ("n3", "n4", 0.6), ("n4", "n5", 0.9), ("n3", "n5", 0.8),
     ("n2", "n3", 0.15)],
    # star of 5
    [("n0", "n1", 1.0), ("n0", "n2", 1.0), ("n0", "n3", 1.0), ("n0", "n4", 1.0)],
]


class TestCommunityDetection:
    def test_oracle_on_connected_fixtures(self):
        for edges in ORACLE_FIXTURES:
            graph = graph_from_edges(edges)
            adj = graph.adjacency()
            clusters = detect_communities(graph, 1.0)
            got_q = partition_modularity(adj, clusters)
            best_q, best = brute_force_max_modularity(adj)
            assert got_q == pytest.approx(best_q, abs=1e-9), (
                f"suboptimal partition {clusters} (Q={got_q}) vs {best} (Q={best_q})"
            )

    def test_two_disjoint_triangles(self):
        edges = [("n0", "n1", 1.0), ("n1", "n2", 1.0), ("n0", "n2", 1.0),
                 ("n3", "n4", 1.0), ("n4", "n5", 1.0), ("n3", "n5", 1.0)]
        graph = graph_from_edges(edges)
        clusters = detect_communities(graph, 1.0)
        assert sorted(map(sorted, clusters)) == [["n0", "n1", "n2"], ["n3", "n4", "n5"]]

    def test_edgeless_graph_singletons(self):
        graph = CorrelationGraph(events={f"n{i}": make_event(i) for i in range(4)})
        clusters = detect_communities(graph, 1.0)
        assert sorted(map(tuple, clusters)) == [("n0",), ("n1",), ("n2",), ("n3",)]

    def test_single_edge_fallback_components(self):
        graph = graph_from_edges([("n0", "n1", 0.5)])
        graph.events["n9"] = make_event(9)
        clusters = detect_communities(graph, 1.0)
        assert ["n0", "n1"] in clusters and ["n9"] in clusters

    def test_single_clique_one_community(self):
        edges = [(f"n{i}", f"n{j}", 1.0) for i in range(5) for j in range(i + 1, 5)]
        clusters = detect_communities(graph_from_edges(edges), 1.0)
        assert len(clusters) == 1 and len(clusters[0]) == 5

    def test_deterministic(self):
        edges = ORACLE_FIXTURES[0]
        runs = [detect_communities(graph_from_edges(edges), 1.0) for _ in range(5)]
        assert all(run == runs[0] for run in runs)


# ---------------------------------------------------------------------------
# Hypotheses and Bayesian scoring
# ---------------------------------------------------------------------------

def _cluster(n=4):
    events = []
    for i in range(n):
        events.append(
            make_event(
                i, ts=_at(i * 30), src_ip="10.0.0.5", user="root",
                ioas=frozenset({f"T{1110 + i}"}),
                semantic_tags=SemanticTags(kill_chain_phase=KillChainPhase(min(i + 1, 7))),
            )
        )
    return events


class TestGenerateHypotheses:
    def test_provider_chain_used(self):
        events = _cluster(5)
        graph = build_graph(events)
        scenarios = generate_hypotheses(events, graph, "Intrusion",
                                        StubHypothesisProvider())
        assert len(scenarios) == 1
        scenario = scenarios[0]
        assert scenario.provenance == "provider"
        assert [s.event_id for s in scenario.chain] == [e.event_id for e in events]
        assert scenario.confidence == 0.8
        assert scenario.narrative

    def test_malformed_output_falls_back(self):
        events = _cluster(3)
        graph = build_graph(events)
        scenarios = generate_hypotheses(events, graph, "Intrusion",
                                        StubHypothesisProvider(mode="malformed"))
        assert len(scenarios) == 1
        assert scenarios[0].provenance == "temporal_fallback"
        assert scenarios[0].confidence == 0.5
        chain_ts = [s.timestamp for s in scenarios[0].chain]
        assert chain_ts == sorted(chain_ts)

    def test_foreign_event_ids_fall_back(self):
        events = _cluster(3)
        graph = build_graph(events)
        scenarios = generate_hypotheses(events, graph, "Intrusion",
                                        StubHypothesisProvider(mode="invalid_ids"))
        assert scenarios[0].provenance == "temporal_fallback"

    def test_small_cluster_skipped(self):
        events = _cluster(1)
        graph = build_graph(events)
        assert generate_hypotheses(events, graph, "x", StubHypothesisProvider()) == []

    def test_chain_subset_of_cluster_enforced(self):
        events = _cluster(4)
        graph = build_graph(events)
        for scenario in generate_hypotheses(events, graph, "x", StubHypothesisProvider()):
            cluster = set(scenario.cluster_events)
            assert all(step.event_id in cluster for step in scenario.chain)

    def test_fallback_phase_fill_monotone_default(self):
        events = [make_event(i, ts=_at(i * 10)) for i in range(3)]
        graph = build_graph(events)
        scenarios = generate_hypotheses(events, graph, "x", None)
        phases = [s.phase for s in scenarios[0].chain]
        assert phases == [KillChainPhase.RECONNAISSANCE] * 3

    def test_edge_reasonings_for_consecutive_pairs(self):
        events = _cluster(4)
        graph = build_graph(events)
        scenario = generate_hypotheses(events, graph, "x", StubHypothesisProvider())[0]
        assert len(scenario.edge_reasonings) == len(scenario.chain) - 1


def eq2_reference(n_tech, mean_edge, mean_conf, phases, p=None):
    p = p or BayesParams()
    prior = min(p.base_prior + n_tech * p.per_technique, p.prior_cap)
    likelihood = p.coef_edge * mean_edge + p.coef_node * mean_conf + p.coef_phase * phases / 7.0
    if likelihood == 0:
        return 0.0
    marginal = likelihood * prior + p.false_alarm * (1 - prior)
    return likelihood * prior / marginal


def _synthetic_scenario(n_tech, mean_edge, mean_conf, n_phases):
    """Build a scenario+graph whose Eq-2 inputs are exactly the arguments."""
    from socengine.scenario import ChainStep

    phases = [KillChainPhase(i + 1) for i in range(n_phases)] or [KillChainPhase.RECONNAISSANCE]
    n_events = max(n_phases, n_tech, 2)
    graph = CorrelationGraph()
    chain = []
    for i in range(n_events):
        event = make_event(i, ts=_at(i), confidence=mean_conf)
        graph.events[event.event_id] = event
        technique = f"T{1100 + i}" if i < n_tech else None
        phase = phases[min(i, len(phases) - 1)]
        chain.append(ChainStep(event.event_id, phase, event.timestamp, technique))
    ids = [s.event_id for s in chain]
    if mean_edge > 0:
        for a, b in zip(ids, ids[1:]):
            key = (a, b) if a < b else (b, a)
            graph.edges[key] = Edge(key[0], key[1], mean_edge,
                                    HookVector(temporal=min(mean_edge, 1.0)))
    scenario = AttackScenario(
        scenario_id="scn-test",
        cluster_events=tuple(ids),
        chain=tuple(chain),
    )
    return scenario, graph


# 20-case hand table: (techniques, mean edge, mean conf, phases) -> posterior
EQ2_TABLE = [
    ((0, 0.5, 0.5, 0), 0.14285714285714285),
    ((8, 1.0, 1.0, 7), 0.9210526315789473),
    ((0, 0.0, 0.0, 0), 0.0),
    ((1, 0.5, 0.5, 1), 0.28160200250312883),
    ((2, 0.3, 0.7, 2), 0.42122905027932966),
    ((3, 0.9, 0.1, 3), 0.5483870967741936),
    ((4, 0.25, 0.25, 4), 0.5781818181818181),
    ((5, 0.6, 0.4, 5), 0.7454545454545454),
    ((6, 0.8, 0.9, 6), 0.8548363205451044),
    ((7, 1.0, 0.0, 7), 0.8716981132075472),
    ((0, 1.0, 1.0, 7), 0.35714285714285715),
    ((8, 0.0, 0.0, 0), 0.0),
    ((1, 0.2, 0.2, 0), 0.11637931034482754),
    ((2, 0.0, 1.0, 3), 0.4530095036958817),
    ((3, 0.5, 0.5, 7), 0.6432432432432431),
    ((10, 0.5, 0.5, 3), 0.8461538461538461),
    ((0, 0.1, 0.9, 1), 0.16556291390728475),
    ((4, 0.75, 0.75, 2), 0.6713881019830029),
    ((5, 0.33, 0.66, 4), 0.7243551880291397),
    ((9, 0.9, 0.8, 5), 0.9027552674230145),
]


class TestBayesianScore:
    def test_hand_table_against_reference(self):
        for args, expected in EQ2_TABLE:
            assert eq2_reference(*args) == pytest.approx(expected, abs=1e-12)

    def test_posterior_base_case(self):
        # techniques=0, mean edge 0.5, mean conf 0.5, zero phase coverage is
        # impossible through the API (chains always carry phases), so this
        # case is asserted on the closed form only.
        assert eq2_reference(0, 0.5, 0.5, 0) == pytest.approx(0.03 / 0.21, abs=1e-12)

    def test_prior_cap(self):
        assert BayesParams().prior_cap == 0.7
        # 0.1 + 8 * 0.08 = 0.74 capped at 0.7
        scenario, graph = _synthetic_scenario(8, 1.0, 1.0, 7)
        expected = eq2_reference(8, 1.0, 1.0, 7)
        assert bayesian_score(scenario, graph) == pytest.approx(expected, abs=1e-9)
        assert expected == pytest.approx(0.7 / 0.76, abs=1e-9)

    def test_scenarios_match_closed_form(self):
        for (n_tech, mean_edge, mean_conf, n_phases), _ in EQ2_TABLE:
            if n_phases == 0:
                continue  # unreachable through the scenario API
            scenario, graph = _synthetic_scenario(n_tech, mean_edge, mean_conf, n_phases)
            got = bayesian_score(scenario, graph)
            expected = eq2_reference(n_tech, mean_edge, mean_conf, n_phases)
            assert got == pytest.approx(expected, abs=1e-9), (n_tech, mean_edge, mean_conf, n_phases)

    def test_zero_likelihood_gives_zero(self):
        scenario, graph = _synthetic_scenario(0, 0.0, 0.0, 1)
        # phase coverage forces a nonzero likelihood; strip it by scoring
        # with coef weights on a custom config is not allowed (sum to 1),
        # so assert the reference instead and the in-range property here.
        assert 0.0 <= bayesian_score(scenario, graph) <= 1.0

    def test_empty_chain_rejected(self):
        scenario = AttackScenario(scenario_id="s", cluster_events=(), chain=())
        with pytest.raises(ValueError):
            bayesian_score(scenario, build_graph([]))

    def test_missing_edges_count_as_zero(self):
        scenario, graph = _synthetic_scenario(1, 0.8, 0.5, 3)
        graph.edges.clear()
        expected = eq2_reference(1, 0.0, 0.5, 3)
        assert bayesian_score(scenario, graph) == pytest.approx(expected, abs=1e-9)

    def test_in_unit_interval_random(self, rng):
        for _ in range(100):
            scenario, graph = _synthetic_scenario(
                rng.randint(0, 10), rng.random(), rng.random(), rng.randint(1, 7))
            assert 0.0 < bayesian_score(scenario, graph) <= 1.0


class TestThreatActorProfile:
    def test_counts(self):
        scenario, _ = _synthetic_scenario(3, 0.5, 0.5, 4)
        profile = profile_threat_actor(scenario)
        assert profile.technique_count == 3
        assert profile.phases_covered == 4
        assert profile.label == "Unknown"

    def test_sophistication_bands(self):
        from socengine.scenario import _sophistication_band

        assert _sophistication_band(0) is Sophistication.LOW
        assert _sophistication_band(1) is Sophistication.LOW
        assert _sophistication_band(2) is Sophistication.MODERATE
        assert _sophistication_band(4) is Sophistication.MODERATE
        assert _sophistication_band(5) is Sophistication.HIGH

    def test_five_phase_chain_is_high(self):
        events = _cluster(5)
        graph = build_graph(events)
        scenario = generate_hypotheses(events, graph, "x", StubHypothesisProvider())[0]
        assert scenario.threat_actor_profile.phases_covered == 5
        assert scenario.sophistication is Sophistication.HIGH


class TestRanking:
    def test_sorted_by_score_then_id(self):
        a, graph_a = _synthetic_scenario(5, 0.9, 0.9, 5)
        b, graph_b = _synthetic_scenario(0, 0.1, 0.1, 1)
        from dataclasses import replace

        low = replace(b, scenario_id="scn-b",
                      bayesian_score=bayesian_score(b, graph_b))
        high = replace(a, scenario_id="scn-a",
                       bayesian_score=bayesian_score(a, graph_a))
        assert rank_scenarios([low, high]) == [high, low]


class TestConfigValidation:
    def test_coefficients_must_sum_to_one(self):
        with pytest.raises(ValueError):
            BayesParams(coef_edge=0.5, coef_node=0.3, coef_phase=0.4)

    def test_defaults_valid(self):
        config = CorrelatorConfig()
        assert config.tau_seconds == 300.0
        assert config.w_min == 0.15
        assert config.decay == 0.7
        assert config.louvain_resolution == 1.0
        assert config.bayes.false_alarm == 0.2
