"""Network model, active subgraph and graph sets, cross-checked against networkx."""

from __future__ import annotations

import json

import networkx as nx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import junction_dag, make_network
from hydroharvest.errors import MalformedInputError
from hydroharvest.network import (
    NodeKind,
    build_active_subgraph,
    check_theorem1,
    correction_edge_set,
    load_network,
    max_indegree,
    merge_set_between,
    network_from_dict,
    network_to_dict,
    node_partition,
)


def to_nx(graph) -> nx.MultiDiGraph:
    g = nx.MultiDiGraph()
    g.add_nodes_from(graph.nodes)
    for e in graph.all_edges:
        g.add_edge(e.tail, e.head, key=e.id)
    return g


@st.composite
def dags(draw, max_nodes=12):
    n = draw(st.integers(3, max_nodes))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n) if j != 0]
    arcs = draw(st.lists(st.sampled_from(pairs), min_size=1, max_size=3 * n, unique=True))
    # every junction needs at least one edge, so chain the stragglers from the reservoir side
    touched = {i for a in arcs for i in a}
    arcs += [(j - 1, j) for j in range(1, n) if j not in touched]
    valves = set(draw(st.lists(st.sampled_from(sorted(set(arcs))), unique=True)))
    return junction_dag(n, arcs, valves)


class TestLoading:
    def test_case21_shape(self, case21):
        kinds = [n.kind for n in case21.nodes]
        assert kinds.count(NodeKind.RESERVOIR) == 4
        assert kinds.count(NodeKind.TANK_OUTLET) == 2
        assert kinds.count(NodeKind.TANK_INLET) == 2
        # 21 physical nodes plus one inlet per tank
        assert len(case21.nodes) == 23
        assert len(case21.pumps) == 4

    def test_round_trip(self, case21):
        again = network_from_dict(json.loads(json.dumps(network_to_dict(case21))))
        assert again == case21

    def test_unknown_key_rejected(self, case21):
        data = network_to_dict(case21)
        data["nodes"][0]["colour"] = "blue"
        with pytest.raises(MalformedInputError, match="colour"):
            network_from_dict(data)

    def test_missing_file(self, tmp_path):
        with pytest.raises(MalformedInputError):
            load_network(tmp_path / "nope.json")

    def test_duplicate_node(self):
        with pytest.raises(MalformedInputError, match="duplicate"):
            make_network([("a", "R"), ("a", "J")], [])

    def test_dangling_edge(self):
        with pytest.raises(MalformedInputError, match="unknown node"):
            make_network([("a", "R"), ("b", "J")], [("p", "a", "c", "pipe")])

    def test_tank_needs_inlet(self):
        with pytest.raises(MalformedInputError, match="inlet"):
            make_network([("r", "R"), ("t", "T")], [("p", "r", "t", "pipe")])

    def test_tank_volume_bounds(self):
        from hydroharvest.network import TankParams

        with pytest.raises(MalformedInputError):
            TankParams(1.0, 10.0, 11.0)
        with pytest.raises(MalformedInputError):
            TankParams(0.0, 10.0, 1.0)

    def test_pump_sign_checks(self):
        from conftest import case_pump

        with pytest.raises(MalformedInputError):
            case_pump(a=1.0)
        with pytest.raises(MalformedInputError):
            case_pump(w_min=0.5, w_max=0.4)
        with pytest.raises(MalformedInputError):
            case_pump(eta=1.5)

    def test_negative_constants(self, case21):
        with pytest.raises(MalformedInputError):
            case21.with_changes(delta=0.0)


class TestActiveSubgraph:
    def test_all_on_is_identity(self, case21, case21_graph):
        assert set(case21_graph.nodes) == {n.id for n in case21.nodes}
        assert {e.id for e in case21_graph.all_edges} == {e.id for e in case21.edges}

    def test_leaf_junction_removed(self):
        net = junction_dag(4, [(0, 1), (1, 2), (1, 3)])
        g = build_active_subgraph(net, {"e0_1": 1, "e1_2": 1, "e1_3": 0})
        assert "n3" not in g
        assert set(g.nodes) == {"n0", "n1", "n2"}

    def test_chain_head_switched_off(self):
        net = junction_dag(3, [(0, 1), (1, 2)])
        g = build_active_subgraph(net, {"e0_1": 0, "e1_2": 1})
        assert set(g.nodes) == {"n1", "n2"}

    def test_missing_assignment(self):
        net = junction_dag(3, [(0, 1), (1, 2)])
        with pytest.raises(MalformedInputError, match="missing"):
            build_active_subgraph(net, {"e0_1": 1})

    def test_bad_value(self):
        net = junction_dag(3, [(0, 1), (1, 2)])
        with pytest.raises(MalformedInputError):
            build_active_subgraph(net, {"e0_1": 1, "e1_2": 2})

    def test_fictitious_kept(self, case21):
        y = {e.id: 1 for e in case21.physical_edges}
        g = build_active_subgraph(case21, y)
        assert {e.id for e in g.fictitious} == {"F4", "F18"}

    @settings(max_examples=40, deadline=None)
    @given(dags(), st.data())
    def test_idempotent_and_no_isolated(self, net, data):
        y = {e.id: data.draw(st.integers(0, 1)) for e in net.physical_edges}
        if not any(y.values()):
            y[net.physical_edges[0].id] = 1
        g = build_active_subgraph(net, y)
        touched = {e.tail for e in g.all_edges} | {e.head for e in g.all_edges}
        assert set(g.nodes) == touched
        assert all(y[e.id] == 1 for e in g.edges)
        sub = net.with_changes(edges=tuple(g.all_edges), nodes=tuple(net.node(n) for n in g.nodes))
        again = build_active_subgraph(sub)
        assert again.nodes == g.nodes
        assert [e.id for e in again.all_edges] == [e.id for e in g.all_edges]


class TestIndegree:
    def test_chain(self):
        assert max_indegree(build_active_subgraph(junction_dag(4, [(0, 1), (1, 2), (2, 3)]))) == 1

    def test_parallel_pipes(self):
        net = make_network(
            [("r", "R"), ("a", "J"), ("b", "J")],
            [("p1", "r", "a", "pipe"), ("p2", "a", "b", "pipe"), ("p3", "a", "b", "pipe")],
        )
        assert max_indegree(build_active_subgraph(net)) == 2

    def test_case21_matches_count(self, case21_graph):
        g = to_nx(case21_graph)
        assert max_indegree(case21_graph) == max(d for _, d in g.in_degree())


class TestPartition:
    def test_chain(self):
        g = build_active_subgraph(junction_dag(3, [(0, 1), (1, 2)]))
        p = node_partition(g, "n1")
        assert (p.upstream, p.downstream, p.upstream_c, p.downstream_c) == ({"n0"}, {"n2"}, set(), set())

    def test_diamond(self):
        g = build_active_subgraph(junction_dag(4, [(0, 1), (0, 2), (1, 3), (2, 3)]))
        p = node_partition(g, "n1")
        assert p.upstream == {"n0"}
        assert p.downstream == {"n3"}
        # n2 feeds n3, which lies downstream of n1
        assert p.downstream_c == {"n2"}
        assert p.upstream_c == set()

    def test_source_has_no_upstream(self, case21_graph):
        assert node_partition(case21_graph, "1").upstream == frozenset()

    def test_unknown_node(self, case21_graph):
        with pytest.raises(MalformedInputError):
            node_partition(case21_graph, "nope")

    @settings(max_examples=60, deadline=None)
    @given(dags())
    def test_partition_against_reachability(self, net):
        graph = build_active_subgraph(net)
        g = to_nx(graph)
        for i in graph.nodes:
            p = node_partition(graph, i)
            up, down = nx.ancestors(g, i), nx.descendants(g, i)
            assert p.upstream == up
            assert p.downstream == down
            parts = [p.upstream, p.downstream, p.upstream_c, p.downstream_c, {i}]
            assert set().union(*parts) == set(graph.nodes)
            assert sum(len(s) for s in parts) == len(graph.nodes)
            for v in p.downstream_c:
                assert (nx.descendants(g, v) | nx.ancestors(g, v)) & down


class TestMergeSet:
    def test_no_path(self):
        g = build_active_subgraph(junction_dag(3, [(0, 1), (0, 2)]))
        assert merge_set_between(g, "n1", "n2") == frozenset()

    def test_merge_on_path(self):
        # n2 has two incoming edges, so it is a merge node on n0 -> n3
        g = build_active_subgraph(junction_dag(4, [(0, 1), (0, 2), (1, 2), (2, 3)]))
        assert merge_set_between(g, "n0", "n3") == {"n2"}
        assert merge_set_between(g, "n0", "n2") == {"n2"}

    def test_tank_on_path(self, case21_graph):
        assert "4" in merge_set_between(case21_graph, "2", "9")
        assert merge_set_between(case21_graph, "2", "3") == frozenset()


def path_oracle(graph, i):
    """Correction set by enumerating every simple path."""
    g = nx.DiGraph()
    g.add_nodes_from(graph.nodes)
    g.add_edges_from((e.tail, e.head) for e in graph.all_edges)
    indeg: dict[str, int] = {}
    for e in graph.edges:
        indeg[e.head] = indeg.get(e.head, 0) + 1
    net = graph.network
    special = {
        n
        for n in graph.nodes
        if net.node(n).kind is NodeKind.TANK_OUTLET
        or (net.node(n).kind in (NodeKind.JUNCTION, NodeKind.TANK_INLET) and indeg.get(n, 0) >= 2)
    }
    out = set()
    for e in graph.pipes:
        jp = e.head
        paths = [[jp]] if jp == i else list(nx.all_simple_paths(g, jp, i))
        if not paths:
            continue
        met = {v for p in paths for v in p[1:] if v in special}
        if jp == i and i in special:
            met.add(i)
        if not met:
            out.add(e.id)
    return out


class TestCorrectionSet:
    def test_chain(self):
        g = build_active_subgraph(junction_dag(3, [(0, 1), (1, 2)]))
        assert correction_edge_set(g, "n2") == {"e0_1", "e1_2"}

    def test_no_upstream_pipe(self):
        g = build_active_subgraph(junction_dag(3, [(0, 1), (1, 2)]))
        assert correction_edge_set(g, "n0") == frozenset()

    def test_merge_blocks(self):
        g = build_active_subgraph(junction_dag(5, [(0, 1), (0, 2), (1, 3), (2, 3), (3, 4)], {(1, 3), (2, 3)}))
        assert correction_edge_set(g, "n4") == {"e3_4"}
        assert correction_edge_set(g, "n1") == {"e0_1"}

    def test_case21_tank_blocks(self, case21_graph):
        # pipes above tank 4 shift heads up to the tank inlet only
        assert correction_edge_set(case21_graph, "4f") == {"L1", "L2"}
        assert correction_edge_set(case21_graph, "4") == frozenset()
        assert correction_edge_set(case21_graph, "9") == {"L3", "L4"}

    @settings(max_examples=60, deadline=None)
    @given(dags(max_nodes=10))
    def test_against_path_enumeration(self, net):
        graph = build_active_subgraph(net)
        for i in graph.nodes:
            assert correction_edge_set(graph, i) == path_oracle(graph, i)


class TestTheorem1:
    def test_case21_holds(self, case21_graph):
        check = check_theorem1(case21_graph)
        assert check.holds and check.violations == []

    def test_cycle_reported(self):
        net = make_network(
            [("r", "R"), ("a", "J"), ("b", "J")],
            [("p", "r", "a", "valve"), ("ab", "a", "b", "pipe"), ("ba", "b", "a", "valve")],
        )
        check = check_theorem1(build_active_subgraph(net))
        assert not check.holds
        assert check.cycles and set(check.cycles[0]) == {"a", "b"}
        assert any("cycle" in v for v in check.violations)

    def test_unvalved_merge(self):
        g = build_active_subgraph(junction_dag(4, [(0, 1), (0, 2), (1, 3), (2, 3)], {(1, 3)}))
        check = check_theorem1(g)
        assert not check.holds
        assert check.unvalved_edges == ("e2_3",)

    @settings(max_examples=60, deadline=None)
    @given(dags())
    def test_holds_iff_no_violations(self, net):
        check = check_theorem1(build_active_subgraph(net))
        assert check.holds == (not check.violations)
        assert not check.cycles  # index-ordered arcs never close a cycle
