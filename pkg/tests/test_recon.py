"""Exactness diagnosis, reconstruction of exact points and pump-speed recovery."""

from __future__ import annotations

import logging

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import PUMP_C, case_pump, make_network
from hydroharvest.errors import InfeasibleError, MalformedInputError, TopologyError
from hydroharvest.hydraulics import Schedule, SlotInput, check_schedule, pump_head_gain
from hydroharvest.network import EdgeKind, build_active_subgraph
from hydroharvest.recon import exactness_report, head_shifts, reconstruct, recover_pump_speeds, recover_speed
from hydroharvest.relax import RelaxedSolution, build_N3, embed_schedule

F = 0.001
VALVE_DROP = 5.0


def merge_chain():
    """r -> p1 -> j -> v1 -> m <- v2 <- j2 <- p2 <- r, then m -> l -> tf -> t."""
    net = make_network(
        [("r", "R", {"elevation": 30.0}), ("j", "J"), ("j2", "J"), ("m", "J"), ("tf", "Tf"), ("t", "T")],
        [
            ("p1", "r", "j", "pipe"),
            ("p2", "r", "j2", "pipe"),
            ("v1", "j", "m", "valve"),
            ("v2", "j2", "m", "valve"),
            ("l", "m", "tf", "pipe"),
            ("F", "tf", "t", "fict"),
        ],
    )
    return net, build_active_subgraph(net)


def exact_chain(net):
    q = 0.05
    tank = net.node("t").tank
    vol = tank.initial + net.delta * 2 * q
    loss = F * q * q
    Hj = 30.0 - loss
    Hm = Hj - 1.0
    return Schedule(
        H={"r": 0.0, "j": Hj, "j2": Hj, "m": Hm, "tf": Hm - F * 4 * q * q, "t": vol / tank.area},
        Q={"p1": q, "p2": q, "v1": q, "v2": q, "l": 2 * q, "F": 2 * q},
        G={"p1": loss, "p2": loss, "v1": 1.0, "v2": 1.0, "l": F * 4 * q * q},
        V={"t": vol},
    )


def with_gap(sched: Schedule, pipe: str, downstream: list[str], eps: float, W: dict, valve: str | None = None):
    """Relaxed copy: ``pipe`` loses ``eps`` more head, ``downstream`` heads drop with it, ``valve`` absorbs it."""
    out = sched.copy()
    out.G[pipe] += eps
    W[pipe] = sched.Q[pipe] ** 2 + eps / F
    for n in downstream:
        out.H[n] -= eps
    if valve:
        out.G[valve] -= eps
    return out


class TestExactness:
    def test_direct_value(self):
        net = make_network([("r", "R"), ("j", "J")], [("p", "r", "j", "pipe")])
        g = build_active_subgraph(net)
        sol = RelaxedSolution(Schedule({}, {"p": 1.0}, {}, {}), W={"p": 1.5})
        rep = exactness_report(sol, g)
        assert rep.eps["p"] == pytest.approx(5e-4)
        assert not rep.is_exact
        assert rep.offending == ["p"]

    def test_exact_input(self):
        net, g = merge_chain()
        rep = exactness_report(RelaxedSolution(exact_chain(net)), g)
        assert rep.is_exact
        assert set(rep.eps.values()) == {0.0}

    def test_outside_cone(self):
        net = make_network([("r", "R"), ("j", "J")], [("p", "r", "j", "pipe")])
        g = build_active_subgraph(net)
        with pytest.raises(MalformedInputError, match="cone"):
            exactness_report(RelaxedSolution(Schedule({}, {"p": 1.0}, {}, {}), W={"p": 0.5}), g)


class TestReconstruct:
    def test_exact_input_unchanged(self):
        net, g = merge_chain()
        sched = exact_chain(net)
        out = reconstruct(RelaxedSolution(sched), g)
        assert out.schedule == sched
        assert out.reconstructed

    def test_merge_chain_hand_trace(self):
        net, g = merge_chain()
        exact = exact_chain(net)
        slot = SlotInput.initial(net)
        assert check_schedule(net, g, slot, exact) == []
        W = {}
        relaxed = with_gap(exact, "p1", ["j"], 0.3, W, valve="v1")
        # the relaxed point satisfies every cone-relaxed row
        n3 = build_N3(net, g, SlotInput.initial(net, r=1e9))
        assert n3.violations(embed_schedule(n3, relaxed, W=W), tol=1e-9) == []
        out = reconstruct(RelaxedSolution(relaxed, W=W), g)
        s = out.schedule
        assert s.H["j"] - relaxed.H["j"] == pytest.approx(0.3)
        assert s.G["v1"] - relaxed.G["v1"] == pytest.approx(0.3)
        assert s.H["t"] == relaxed.H["t"]
        assert s.H["m"] == relaxed.H["m"]
        assert s.Q == relaxed.Q and s.V == relaxed.V
        assert check_schedule(net, g, slot, s) == []
        assert out.W["p1"] == pytest.approx(0.05**2)

    def test_two_gaps_sum_along_chain(self):
        net = make_network(
            [("r", "R", {"elevation": 10.0}), ("a", "J"), ("b", "J"), ("c", "J")],
            [("p1", "r", "a", "pipe"), ("p2", "a", "b", "pipe"), ("p3", "b", "c", "pipe")],
        )
        g = build_active_subgraph(net)
        eps = {"p1": 0.2, "p2": 0.05, "p3": 0.0}
        psi = head_shifts(g, eps)
        assert psi["a"] == pytest.approx(0.2)
        assert psi["b"] == pytest.approx(0.25)
        assert psi["c"] == pytest.approx(0.25)
        assert psi["r"] == 0.0

    def test_refuses_unvalved_merge(self):
        net = make_network(
            [("r", "R"), ("a", "J"), ("b", "J"), ("m", "J")],
            [("p1", "r", "a", "pipe"), ("p2", "r", "b", "pipe"), ("p3", "a", "m", "pipe"), ("v", "b", "m", "valve")],
        )
        g = build_active_subgraph(net)
        sched = Schedule({n: 1.0 for n in g.nodes}, {e: 0.0 for e in ("p1", "p2", "p3", "v")}, {}, {})
        with pytest.raises(TopologyError, match="p3"):
            reconstruct(RelaxedSolution(sched), g)


def random_compliant(rng):
    """Random DAG from reservoir n0 with valves on every merge in-edge, plus exact and gapped schedules.

    Heads are propagated top-down: pipes lose ``f Q^2`` (plus the gap in the
    relaxed copy) and merge nodes sit ``VALVE_DROP`` below their lowest feeder.
    """
    n = int(rng.integers(3, 9))
    G = nx.DiGraph()
    G.add_nodes_from(range(n))
    for j in range(1, n):
        for i in rng.choice(j, size=min(j, int(rng.integers(1, 3))), replace=False):
            G.add_edge(int(i), j)
    merges = {j for j in G if G.in_degree(j) >= 2}
    nodes = [("n0", "R", {"elevation": 100.0})] + [(f"n{i}", "J") for i in range(1, n)]
    edges = [(f"e{i}_{j}", f"n{i}", f"n{j}", "valve" if j in merges else "pipe") for i, j in sorted(G.edges)]
    net = make_network(nodes, edges)
    graph = build_active_subgraph(net)

    Q, demand = {}, {}
    for v in nx.topological_sort(G):
        inflow = sum(Q[f"e{u}_{v}"] for u in G.predecessors(v))
        outs = sorted(G.successors(v))
        if v == 0:
            for w in outs:
                Q[f"e0_{w}"] = float(rng.uniform(0.05, 0.2))
            continue
        share = rng.dirichlet(np.ones(len(outs) + 1)) if outs else np.ones(1)
        for w, frac in zip(outs, share):
            Q[f"e{v}_{w}"] = float(inflow * frac)
        demand[f"n{v}"] = float(inflow - sum(Q[f"e{v}_{w}"] for w in outs))
    eps = {f"e{i}_{j}": float(rng.uniform(0, 0.5)) for i, j in G.edges if j not in merges}

    def heads(gap):
        H, Gl = {"n0": 0.0}, {}
        total = {0: 100.0}
        for v in nx.topological_sort(G):
            if v == 0:
                continue
            preds = sorted(G.predecessors(v))
            if v in merges:
                total[v] = min(total[u] for u in preds) - VALVE_DROP
                for u in preds:
                    Gl[f"e{u}_{v}"] = total[u] - total[v]
            else:
                (u,) = preds
                e = f"e{u}_{v}"
                Gl[e] = F * Q[e] ** 2 + (eps[e] if gap else 0.0)
                total[v] = total[u] - Gl[e]
            H[f"n{v}"] = total[v]
        return H, Gl

    He, Ge = heads(False)
    Hr, Gr = heads(True)
    exact = Schedule(He, dict(Q), Ge, {})
    relaxed = Schedule(Hr, dict(Q), Gr, {})
    W = {e: Q[e] ** 2 + eps[e] / F for e in eps}
    return net, graph, SlotInput.initial(net, demand), exact, relaxed, W, eps, merges


class TestRandomGraphs:
    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_reconstruction_is_exact_and_feasible(self, seed):
        net, g, slot, exact, relaxed, W, eps, merges = random_compliant(np.random.default_rng(seed))
        assert check_schedule(net, g, slot, exact) == []
        n3 = build_N3(net, g, SlotInput(slot.k, slot.demands, 0.0, 1e9, {}))
        assert n3.violations(embed_schedule(n3, relaxed, W=W), tol=1e-7) == []
        out = reconstruct(RelaxedSolution(relaxed, W=W), g)
        s = out.schedule
        assert check_schedule(net, g, slot, s) == []
        for e in g.pipes:
            assert abs(s.G[e.id] - F * s.Q[e.id] ** 2) <= 1e-6
        assert s.Q == relaxed.Q
        # merge nodes keep their relaxed heads; everything else matches top-down exact propagation from them
        for m in merges:
            assert s.H[f"n{m}"] == relaxed.H[f"n{m}"]
        for n in g.nodes:
            assert s.H[n] >= relaxed.H[n]
        if not merges:
            for n in g.nodes:
                assert s.H[n] == pytest.approx(exact.H[n], abs=1e-9)
        assert max(eps.values(), default=0.0) == 0.0 or not exactness_report(RelaxedSolution(relaxed, W=W), g).is_exact

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_heads_match_propagation_oracle(self, seed):
        """Rebuild heads from merge nodes down with exact losses; reconstruction must agree."""
        net, g, slot, exact, relaxed, W, eps, merges = random_compliant(np.random.default_rng(seed))
        s = reconstruct(RelaxedSolution(relaxed, W=W), g).schedule
        total = {"n0": 100.0}
        order = [n for n in nx.topological_sort(nx.DiGraph([(e.tail, e.head) for e in g.edges]))]
        for n in order:
            if n == "n0":
                continue
            ins = g.in_edges(n)
            if len(ins) > 1:
                total[n] = relaxed.H[n]
            else:
                (e,) = ins
                total[n] = total[e.tail] - F * relaxed.Q[e.id] ** 2
            assert s.H[n] == pytest.approx(total[n], abs=1e-9)


class TestSpeedRecovery:
    def test_shutoff_nominal(self):
        assert recover_speed(0.0, PUMP_C, case_pump()) == pytest.approx(1.0)

    def test_shutoff_top_speed(self):
        p = case_pump()
        assert recover_speed(0.0, PUMP_C * p.w_max**2, p) == pytest.approx(p.w_max)

    def test_inverse_of_curve_value(self):
        assert recover_speed(10.0, 223.824219, case_pump()) == pytest.approx(1.0, abs=1e-6)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(0.0, 50.0), st.floats(0.01, 2.0))
    def test_round_trip(self, q, w):
        p = case_pump()
        gain = pump_head_gain(q, w, p)
        w2 = recover_speed(q, gain, p)
        assert pump_head_gain(q, w2, p) == pytest.approx(gain, abs=1e-8)
        if gain > 0:
            assert w2 == pytest.approx(w, rel=1e-9, abs=1e-12)

    def test_no_real_speed(self):
        with pytest.raises(InfeasibleError, match="no real"):
            recover_speed(1.0, -1e6, case_pump())

    def test_clamp_and_refuse(self, caplog):
        p = case_pump()
        net = make_network([("r", "R"), ("j", "J")], [("P", "r", "j", "pump", {"pump": p})])
        just_above = Schedule({}, {"P": 0.0}, {"P": PUMP_C * (p.w_max * (1 + 1e-9)) ** 2}, {})
        with caplog.at_level(logging.WARNING):
            assert recover_pump_speeds(just_above, net) == {"P": p.w_max}
        assert "clamped" in caplog.text
        far = Schedule({}, {"P": 0.0}, {"P": PUMP_C}, {})
        with pytest.raises(InfeasibleError, match="outside"):
            recover_pump_speeds(far, net)

    def test_only_pumps_in_schedule(self):
        net = make_network([("r", "R"), ("j", "J")], [("P", "r", "j", "pump")])
        assert recover_pump_speeds(Schedule({}, {}, {}, {}), net) == {}
        assert net.edge("P").kind is EdgeKind.PUMP
