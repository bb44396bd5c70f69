"""Shared fixtures and small-network builders."""

from __future__ import annotations

import itertools
from pathlib import Path

import numpy as np

import pytest

from hydroharvest.conic.bnb import solve_relaxation
from hydroharvest.hydraulics import Schedule, pump_head_gain
from hydroharvest.network import (
    BigMConstants,
    Edge,
    EdgeKind,
    Network,
    Node,
    NodeKind,
    PumpParams,
    TankParams,
    build_active_subgraph,
    load_network,
)
from hydroharvest.relax import DiscretizationGrid

DATA = Path(__file__).resolve().parents[1] / "src" / "hydroharvest" / "data"
CASE21 = DATA / "case21.json"
TOY = DATA / "toy.json"
SCENARIO21 = DATA / "scenario21.json"

# case-study pump coefficients
PUMP_A, PUMP_B, PUMP_C = -1.0941e-4, 5.1516e-2, 223.32


def case_pump(**kw) -> PumpParams:
    base = dict(a=PUMP_A, b=PUMP_B, c=PUMP_C, w_min=0.149, w_max=0.42, q_min=0.02, q_max=0.3, eta=0.85)
    base.update(kw)
    return PumpParams(**base)


def make_network(nodes, edges, delta=300.0, name="test") -> Network:
    """Network from compact specs.

    ``nodes``: ``(id, kind)`` or ``(id, kind, extra_dict)``; kinds are
    ``"R"``, ``"J"``, ``"Tf"`` (tank inlet) and ``"T"`` (tank outlet).
    ``edges``: ``(id, tail, head, kind)`` with kinds ``"pipe"``, ``"pump"``,
    ``"valve"`` and ``"fict"``; an optional fifth item overrides parameters.
    """
    kinds = {"R": NodeKind.RESERVOIR, "J": NodeKind.JUNCTION, "Tf": NodeKind.TANK_INLET, "T": NodeKind.TANK_OUTLET}
    out_nodes = []
    for spec in nodes:
        nid, k = spec[0], spec[1]
        extra = dict(spec[2]) if len(spec) > 2 else {}
        if k == "T" and "tank" not in extra:
            extra["tank"] = TankParams(10.0, 80.0, 20.0)
        out_nodes.append(Node(nid, kinds[k], **extra))
    out_edges = []
    for spec in edges:
        eid, tail, head, k = spec[:4]
        extra = dict(spec[4]) if len(spec) > 4 else {}
        if k == "pipe":
            extra.setdefault("f_d", 0.001)
            out_edges.append(Edge(eid, tail, head, EdgeKind.PIPE, **extra))
        elif k == "pump":
            extra.setdefault("pump", case_pump())
            out_edges.append(Edge(eid, tail, head, EdgeKind.PUMP, **extra))
        elif k == "valve":
            out_edges.append(Edge(eid, tail, head, EdgeKind.VALVE))
        else:
            out_edges.append(Edge(eid, tail, head, EdgeKind.FICTITIOUS))
    return Network(tuple(out_nodes), tuple(out_edges), delta=delta, big_m=BigMConstants(), name=name)


def junction_dag(n_nodes: int, arcs, valves=frozenset()) -> Network:
    """Reservoir ``n0`` plus junctions ``n1..``; ``arcs`` are ``(i, j)`` with ``i < j``."""
    nodes = [("n0", "R")] + [(f"n{i}", "J") for i in range(1, n_nodes)]
    edges = []
    for k, (i, j) in enumerate(sorted(set(arcs))):
        kind = "valve" if (i, j) in valves else "pipe"
        edges.append((f"e{i}_{j}", f"n{i}", f"n{j}", kind))
    return make_network(nodes, edges)


def toy_schedule(net, q, w, prev_volume=None):
    """Forward-simulated toy slot: pump at speed ``w`` pushing ``q`` into the tank."""
    pump = net.edge("P").pump
    f = net.edge("L").f_d
    tank = net.node("T").tank
    v0 = tank.initial if prev_volume is None else prev_volume
    gain = pump_head_gain(q, w, pump)
    vol = v0 + net.delta * q
    return Schedule(
        H={"R": 0.0, "J": gain, "Tf": gain - f * q * q, "T": vol / tank.area},
        Q={"P": q, "L": q, "F": q},
        G={"P": gain, "L": f * q * q},
        V={"T": vol},
        omega={"P": w},
    )


def enumerate_optimum(prog: ConicProgram):
    """Best continuous solve over every one-hot-consistent binary assignment (None when all fail)."""
    bins = prog.binaries
    grouped = {i for g in prog.groups for i in g.members}
    free = [i for i in bins if i not in grouped]
    choices = [list(g.members) for g in prog.groups]
    best = None
    lb0 = np.array([v.lb for v in prog.vars])
    ub0 = np.array([v.ub for v in prog.vars])
    for pick in itertools.product(*choices):
        for bits in itertools.product((0.0, 1.0), repeat=len(free)):
            lb, ub = lb0.copy(), ub0.copy()
            lb[bins] = ub[bins] = 0.0
            for i in pick:
                lb[i] = ub[i] = 1.0
            for i, b in zip(free, bits):
                lb[i] = ub[i] = b
            r = solve_relaxation(prog, lb, ub)
            if not r.solved:
                continue
            if best is None or (r.objective > best if prog.sense == "max" else r.objective < best):
                best = r.objective
    return best


@pytest.fixture(scope="session")
def case21():
    return load_network(CASE21)


@pytest.fixture(scope="session")
def case21_graph(case21):
    return build_active_subgraph(case21)


@pytest.fixture(scope="session")
def toy():
    return load_network(TOY)


@pytest.fixture(scope="session")
def toy_graph(toy):
    return build_active_subgraph(toy)


@pytest.fixture(scope="session")
def case21_grid():
    return DiscretizationGrid.uniform(10, 10, 40.0, 6.5, sigma_min=5.5)


# ---------------------------------------------------------------------------
# acceptance report: one line per criterion after the run

_ACCEPTANCE: dict[int, list] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    n, text = mark.args
    entry = _ACCEPTANCE.setdefault(n, [text, True, 0])
    if rep.when == "call":
        entry[1] = entry[1] and rep.passed
        entry[2] += 1
    elif rep.failed or rep.skipped:
        entry[1] = False


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        text, ok, ran = _ACCEPTANCE[n]
        verdict = "PASS" if ok and ran else "FAIL"
        terminalreporter.write_line(f"criterion {n}: {verdict}  {text}")
