"""Network topology, element parameters and the graph sets used by the
exactness analysis.

A tank is represented by two nodes: an *inlet* (fictitious node, where water
enters from the top) and an *outlet* (the tank proper, whose pressure head is
the water level).  A fictitious edge joins inlet to outlet.  All quantities are
SI: metres, m^3/s, seconds.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Mapping

from .errors import MalformedInputError

__all__ = [
    "NodeKind",
    "EdgeKind",
    "TankParams",
    "PumpParams",
    "Node",
    "Edge",
    "BigMConstants",
    "Network",
    "ActiveGraph",
    "Partition",
    "TheoremCheck",
    "load_network",
    "network_from_dict",
    "network_to_dict",
    "build_active_subgraph",
    "max_indegree",
    "node_partition",
    "merge_set_between",
    "correction_edge_set",
    "check_theorem1",
]


class NodeKind(str, Enum):
    JUNCTION = "junction"
    TANK_OUTLET = "tank_outlet"
    TANK_INLET = "tank_inlet"
    RESERVOIR = "reservoir"


class EdgeKind(str, Enum):
    PIPE = "pipe"
    PUMP = "pump"
    VALVE = "valve"
    FICTITIOUS = "fictitious"


@dataclass(frozen=True)
class TankParams:
    area: float
    capacity: float
    initial: float

    def __post_init__(self):
        if not self.area > 0:
            raise MalformedInputError(f"tank area must be positive, got {self.area}")
        if not 0 <= self.initial <= self.capacity:
            raise MalformedInputError(
                f"tank initial volume {self.initial} outside [0, {self.capacity}]"
            )

    @property
    def initial_head(self) -> float:
        return self.initial / self.area

    @property
    def max_head(self) -> float:
        return self.capacity / self.area


@dataclass(frozen=True)
class PumpParams:
    """Variable-speed pump: head gain ``a q^2 + b q w + c w^2``.

    ``d`` and ``e`` are the coefficients of the lower supporting line used by
    the convexified pump region; ``None`` means "fit on demand".
    """

    a: float
    b: float
    c: float
    w_min: float
    w_max: float
    q_min: float
    q_max: float
    eta: float
    d: float | None = None
    e: float | None = None

    def __post_init__(self):
        if not (self.a < 0 and self.b > 0 and self.c > 0):
            raise MalformedInputError("pump curve needs a < 0, b > 0, c > 0")
        if not 0 < self.w_min <= self.w_max:
            raise MalformedInputError("pump speeds need 0 < w_min <= w_max")
        if not 0 <= self.q_min <= self.q_max:
            raise MalformedInputError("pump flows need 0 <= q_min <= q_max")
        if not 0 < self.eta <= 1:
            raise MalformedInputError("pump efficiency must lie in (0, 1]")


@dataclass(frozen=True)
class Node:
    id: str
    kind: NodeKind
    elevation: float = 0.0
    min_head: float = 0.0
    tank: TankParams | None = None

    def __post_init__(self):
        if self.kind is NodeKind.TANK_OUTLET and self.tank is None:
            raise MalformedInputError(f"tank outlet {self.id!r} has no tank parameters")
        if self.kind is not NodeKind.TANK_OUTLET and self.tank is not None:
            raise MalformedInputError(f"node {self.id!r} is not a tank but has tank parameters")


@dataclass(frozen=True)
class Edge:
    id: str
    tail: str
    head: str
    kind: EdgeKind
    f_d: float | None = None
    pump: PumpParams | None = None
    length: float | None = None
    diameter: float | None = None

    def __post_init__(self):
        if self.kind is EdgeKind.PIPE and not (self.f_d is not None and self.f_d > 0):
            raise MalformedInputError(f"pipe {self.id!r} needs a positive friction f_d")
        if self.kind is EdgeKind.PUMP and self.pump is None:
            raise MalformedInputError(f"pump {self.id!r} has no pump parameters")
        if self.tail == self.head:
            raise MalformedInputError(f"edge {self.id!r} is a self-loop")

    @property
    def is_physical(self) -> bool:
        return self.kind is not EdgeKind.FICTITIOUS


@dataclass(frozen=True)
class BigMConstants:
    """Big-M coupling constant ``M1`` (m) and minimum nonzero flow ``m1`` (m^3/s)."""

    M1: float = 1e4
    m1: float = 1e-6

    def __post_init__(self):
        if not self.M1 > 0 or not self.m1 > 0:
            raise MalformedInputError("big-M constants must be positive")
        if self.m1 >= self.M1:
            raise MalformedInputError("m1 must be smaller than M1")


@dataclass(frozen=True)
class Network:
    nodes: tuple[Node, ...]
    edges: tuple[Edge, ...]
    g: float = 9.81
    rho: float = 1000.0
    delta: float = 300.0
    big_m: BigMConstants = field(default_factory=BigMConstants)
    name: str = "network"
    notes: str = ""

    def __post_init__(self):
        if not (self.g > 0 and self.rho > 0 and self.delta > 0):
            raise MalformedInputError("g, rho and delta must be positive")
        node_map: dict[str, Node] = {}
        for n in self.nodes:
            if n.id in node_map:
                raise MalformedInputError(f"duplicate node id {n.id!r}")
            node_map[n.id] = n
        edge_map: dict[str, Edge] = {}
        for e in self.edges:
            if e.id in edge_map:
                raise MalformedInputError(f"duplicate edge id {e.id!r}")
            for end in (e.tail, e.head):
                if end not in node_map:
                    raise MalformedInputError(f"edge {e.id!r} references unknown node {end!r}")
            edge_map[e.id] = e
        object.__setattr__(self, "_node_map", node_map)
        object.__setattr__(self, "_edge_map", edge_map)
        self._validate_tanks()

    def _validate_tanks(self):
        inlet_of: dict[str, str] = {}
        for e in self.edges:
            head, tail = self._node_map[e.head], self._node_map[e.tail]
            if e.kind is EdgeKind.FICTITIOUS:
                if tail.kind is not NodeKind.TANK_INLET or head.kind is not NodeKind.TANK_OUTLET:
                    raise MalformedInputError(
                        f"fictitious edge {e.id!r} must join a tank inlet to a tank outlet"
                    )
                if head.id in inlet_of or tail.id in inlet_of.values():
                    raise MalformedInputError(f"tank {head.id!r} has more than one fictitious edge")
                inlet_of[head.id] = tail.id
                continue
            if head.kind is NodeKind.TANK_OUTLET:
                raise MalformedInputError(
                    f"edge {e.id!r} enters tank outlet {head.id!r}; water enters through the inlet"
                )
            if head.kind is NodeKind.RESERVOIR:
                raise MalformedInputError(f"edge {e.id!r} flows into reservoir {head.id!r}")
            if tail.kind is NodeKind.TANK_INLET:
                raise MalformedInputError(f"edge {e.id!r} leaves tank inlet {tail.id!r}")
        for n in self.nodes:
            if n.kind is NodeKind.TANK_OUTLET and n.id not in inlet_of:
                raise MalformedInputError(f"tank {n.id!r} has no inlet/fictitious edge")
            if n.kind is NodeKind.TANK_INLET and n.id not in inlet_of.values():
                raise MalformedInputError(f"tank inlet {n.id!r} has no fictitious edge")

    # lookups -------------------------------------------------------------
    def node(self, node_id: str) -> Node:
        try:
            return self._node_map[node_id]
        except KeyError:
            raise MalformedInputError(f"unknown node {node_id!r}") from None

    def edge(self, edge_id: str) -> Edge:
        try:
            return self._edge_map[edge_id]
        except KeyError:
            raise MalformedInputError(f"unknown edge {edge_id!r}") from None

    def has_node(self, node_id: str) -> bool:
        return node_id in self._node_map

    @property
    def physical_edges(self) -> tuple[Edge, ...]:
        return tuple(e for e in self.edges if e.is_physical)

    @property
    def fictitious_edges(self) -> tuple[tuple[str, str], ...]:
        return tuple((e.tail, e.head) for e in self.edges if not e.is_physical)

    @property
    def tanks(self) -> tuple[Node, ...]:
        return tuple(n for n in self.nodes if n.kind is NodeKind.TANK_OUTLET)

    @property
    def pumps(self) -> tuple[Edge, ...]:
        return tuple(e for e in self.edges if e.kind is EdgeKind.PUMP)

    def with_changes(self, **changes) -> "Network":
        return replace(self, **changes)

    def initial_volumes(self) -> dict[str, float]:
        return {t.id: t.tank.initial for t in self.tanks}


# ---------------------------------------------------------------------------
# JSON I/O

_NODE_KEYS = {"id", "kind", "elevation_m", "min_head_m", "tank"}
_TANK_KEYS = {"area_m2", "capacity_m3", "initial_m3"}
_EDGE_KEYS = {"id", "tail", "head", "kind", "pipe", "pump", "valve"}
_PIPE_KEYS = {"f_d", "length_m", "diameter_m"}
_PUMP_KEYS = {"a", "b", "c", "w_min", "w_max", "q_min", "q_max", "eta", "d", "e"}
_CONST_KEYS = {"M1", "m1", "rho", "g", "delta_s"}
_TOP_KEYS = {"name", "notes", "nodes", "edges", "constants"}


def _check_keys(obj, allowed, where):
    if not isinstance(obj, Mapping):
        raise MalformedInputError(f"{where}: expected an object")
    extra = set(obj) - allowed
    if extra:
        raise MalformedInputError(f"{where}: unknown keys {sorted(extra)}")


def _num(obj, key, where, default=None):
    if key not in obj:
        if default is None:
            raise MalformedInputError(f"{where}: missing {key!r}")
        return default
    val = obj[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise MalformedInputError(f"{where}: {key!r} must be a number")
    return float(val)


def network_from_dict(data: Mapping) -> Network:
    """Build a :class:`Network` from its JSON representation (unknown keys rejected)."""
    _check_keys(data, _TOP_KEYS, "network")
    if "nodes" not in data or "edges" not in data:
        raise MalformedInputError("network: 'nodes' and 'edges' are required")
    nodes = []
    for raw in data["nodes"]:
        _check_keys(raw, _NODE_KEYS, "node")
        if "id" not in raw or "kind" not in raw:
            raise MalformedInputError("node: 'id' and 'kind' are required")
        nid = str(raw["id"])
        try:
            kind = NodeKind(raw["kind"])
        except ValueError:
            raise MalformedInputError(f"node {nid!r}: unknown kind {raw['kind']!r}") from None
        tank = None
        if "tank" in raw:
            t = raw["tank"]
            _check_keys(t, _TANK_KEYS, f"node {nid!r} tank")
            w = f"node {nid!r} tank"
            tank = TankParams(_num(t, "area_m2", w), _num(t, "capacity_m3", w), _num(t, "initial_m3", w))
        nodes.append(
            Node(
                id=nid,
                kind=kind,
                elevation=_num(raw, "elevation_m", nid, 0.0),
                min_head=_num(raw, "min_head_m", nid, 0.0),
                tank=tank,
            )
        )
    edges = []
    for raw in data["edges"]:
        _check_keys(raw, _EDGE_KEYS, "edge")
        for key in ("id", "tail", "head", "kind"):
            if key not in raw:
                raise MalformedInputError(f"edge: missing {key!r}")
        eid = str(raw["id"])
        try:
            kind = EdgeKind(raw["kind"])
        except ValueError:
            raise MalformedInputError(f"edge {eid!r}: unknown kind {raw['kind']!r}") from None
        f_d = length = diameter = None
        pump = None
        if "pipe" in raw:
            p = raw["pipe"]
            _check_keys(p, _PIPE_KEYS, f"edge {eid!r} pipe")
            f_d = _num(p, "f_d", eid)
            length = p.get("length_m")
            diameter = p.get("diameter_m")
        if "pump" in raw:
            p = raw["pump"]
            _check_keys(p, _PUMP_KEYS, f"edge {eid!r} pump")
            w = f"edge {eid!r} pump"
            pump = PumpParams(
                *(_num(p, k, w) for k in ("a", "b", "c", "w_min", "w_max", "q_min", "q_max", "eta")),
                d=p.get("d"),
                e=p.get("e"),
            )
        if "valve" in raw:
            _check_keys(raw["valve"], set(), f"edge {eid!r} valve")
        edges.append(
            Edge(eid, str(raw["tail"]), str(raw["head"]), kind, f_d=f_d, pump=pump,
                 length=length, diameter=diameter)
        )
    const = data.get("constants", {})
    _check_keys(const, _CONST_KEYS, "constants")
    big_m = BigMConstants(_num(const, "M1", "constants", 1e4), _num(const, "m1", "constants", 1e-6))
    return Network(
        nodes=tuple(nodes),
        edges=tuple(edges),
        g=_num(const, "g", "constants", 9.81),
        rho=_num(const, "rho", "constants", 1000.0),
        delta=_num(const, "delta_s", "constants", 300.0),
        big_m=big_m,
        name=str(data.get("name", "network")),
        notes=str(data.get("notes", "")),
    )


def load_network(path: str | Path) -> Network:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise MalformedInputError(f"network file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise MalformedInputError(f"network file {path} is not valid JSON: {exc}") from None
    return network_from_dict(data)


def network_to_dict(net: Network) -> dict:
    nodes = []
    for n in net.nodes:
        item = {"id": n.id, "kind": n.kind.value, "elevation_m": n.elevation}
        if n.kind is NodeKind.JUNCTION:
            item["min_head_m"] = n.min_head
        if n.tank is not None:
            item["tank"] = {
                "area_m2": n.tank.area,
                "capacity_m3": n.tank.capacity,
                "initial_m3": n.tank.initial,
            }
        nodes.append(item)
    edges = []
    for e in net.edges:
        item = {"id": e.id, "tail": e.tail, "head": e.head, "kind": e.kind.value}
        if e.kind is EdgeKind.PIPE:
            item["pipe"] = {"f_d": e.f_d}
            if e.length is not None:
                item["pipe"]["length_m"] = e.length
            if e.diameter is not None:
                item["pipe"]["diameter_m"] = e.diameter
        elif e.kind is EdgeKind.PUMP:
            p = e.pump
            item["pump"] = {
                k: getattr(p, k)
                for k in ("a", "b", "c", "w_min", "w_max", "q_min", "q_max", "eta", "d", "e")
                if getattr(p, k) is not None
            }
        edges.append(item)
    return {
        "name": net.name,
        "notes": net.notes,
        "nodes": nodes,
        "edges": edges,
        "constants": {
            "M1": net.big_m.M1,
            "m1": net.big_m.m1,
            "rho": net.rho,
            "g": net.g,
            "delta_s": net.delta,
        },
    }


# ---------------------------------------------------------------------------
# Active subgraph


@dataclass(frozen=True)
class Partition:
    upstream: frozenset[str]
    downstream: frozenset[str]
    upstream_c: frozenset[str]
    downstream_c: frozenset[str]


class ActiveGraph:
    """Subgraph of the edges switched on for the contract, without isolated nodes.

    Immutable after construction.  Reachability closures are computed once;
    partitions and correction sets are cached on first use.
    """

    def __init__(self, network: Network, y: Mapping[str, int], nodes, edges):
        self.network = network
        self.y = dict(y)
        self.nodes: tuple[str, ...] = tuple(nodes)
        self.edges: tuple[Edge, ...] = tuple(e for e in edges if e.is_physical)
        self.fictitious: tuple[Edge, ...] = tuple(e for e in edges if not e.is_physical)
        self._node_set = frozenset(self.nodes)
        succ: dict[str, list[Edge]] = {n: [] for n in self.nodes}
        pred: dict[str, list[Edge]] = {n: [] for n in self.nodes}
        for e in self.all_edges:
            succ[e.tail].append(e)
            pred[e.head].append(e)
        self._succ = {k: tuple(v) for k, v in succ.items()}
        self._pred = {k: tuple(v) for k, v in pred.items()}
        self._desc = {n: self._closure(n, self._succ, "head") for n in self.nodes}
        self._anc = {n: self._closure(n, self._pred, "tail") for n in self.nodes}
        self.merge_nodes: frozenset[str] = frozenset(
            n
            for n in self.nodes
            if network.node(n).kind in (NodeKind.JUNCTION, NodeKind.TANK_INLET)
            and sum(1 for e in self._pred[n] if e.is_physical) >= 2
        )
        self._partitions: dict[str, Partition] = {}
        self._corrections: dict[str, frozenset[str]] = {}

    @staticmethod
    def _closure(start, adj, attr) -> frozenset[str]:
        seen: set[str] = set()
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for e in adj[u]:
                v = getattr(e, attr)
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        seen.discard(start)
        return frozenset(seen)

    @property
    def all_edges(self) -> tuple[Edge, ...]:
        return self.edges + self.fictitious

    def __contains__(self, node_id) -> bool:
        return node_id in self._node_set

    def __repr__(self):
        return (
            f"ActiveGraph({self.network.name!r}, nodes={len(self.nodes)}, "
            f"edges={len(self.edges)}, fictitious={len(self.fictitious)})"
        )

    def require(self, node_id: str) -> None:
        if node_id not in self._node_set:
            raise MalformedInputError(f"node {node_id!r} is not in the active graph")

    def in_edges(self, node_id: str) -> tuple[Edge, ...]:
        return self._pred[node_id]

    def out_edges(self, node_id: str) -> tuple[Edge, ...]:
        return self._succ[node_id]

    def descendants(self, node_id: str) -> frozenset[str]:
        return self._desc[node_id]

    def ancestors(self, node_id: str) -> frozenset[str]:
        return self._anc[node_id]

    def nodes_of_kind(self, *kinds: NodeKind) -> tuple[str, ...]:
        return tuple(n for n in self.nodes if self.network.node(n).kind in kinds)

    def edges_of_kind(self, *kinds: EdgeKind) -> tuple[Edge, ...]:
        return tuple(e for e in self.all_edges if e.kind in kinds)

    @property
    def tanks(self) -> tuple[str, ...]:
        return self.nodes_of_kind(NodeKind.TANK_OUTLET)

    @property
    def pumps(self) -> tuple[Edge, ...]:
        return self.edges_of_kind(EdgeKind.PUMP)

    @property
    def pipes(self) -> tuple[Edge, ...]:
        return self.edges_of_kind(EdgeKind.PIPE)

    @property
    def valves(self) -> tuple[Edge, ...]:
        return self.edges_of_kind(EdgeKind.VALVE)

    @property
    def all_ones(self) -> dict[str, int]:
        return {e.id: 1 for e in self.edges}


def build_active_subgraph(network: Network, y: Mapping[str, int] | None = None) -> ActiveGraph:
    """Drop switched-off edges, then drop nodes left without any incident edge.

    ``y`` must give 0 or 1 for every physical edge; ``None`` switches everything
    on.  Fictitious tank edges are always kept.  Removing an isolated node never
    removes an edge, so a single removal pass already reaches the fixed point.
    """
    phys = network.physical_edges
    if y is None:
        y = {e.id: 1 for e in phys}
    missing = [e.id for e in phys if e.id not in y]
    if missing:
        raise MalformedInputError(f"on/off assignment is missing edges {missing}")
    phys_ids = {e.id for e in phys}
    unknown = [k for k in y if k not in phys_ids]
    if unknown:
        raise MalformedInputError(f"on/off assignment names unknown edges {unknown}")
    for k, v in y.items():
        if v not in (0, 1):
            raise MalformedInputError(f"on/off value for {k!r} must be 0 or 1, got {v!r}")
    kept = [e for e in network.edges if not e.is_physical or y[e.id] == 1]
    touched = {e.tail for e in kept} | {e.head for e in kept}
    nodes = [n.id for n in network.nodes if n.id in touched]
    return ActiveGraph(network, {e.id: int(y[e.id]) for e in phys}, nodes, kept)


def max_indegree(graph: ActiveGraph) -> int:
    """Largest number of retained (physical or fictitious) edges entering one node."""
    if not graph.nodes:
        raise MalformedInputError("graph has no nodes")
    return max(len(graph.in_edges(n)) for n in graph.nodes)


def node_partition(graph: ActiveGraph, i: str) -> Partition:
    """Split the other nodes into upstream, downstream and their complements.

    A node that is neither an ancestor nor a descendant of ``i`` goes to the
    downstream complement when a directed path joins it (in either direction)
    to some descendant of ``i``; every remaining node goes to the upstream
    complement.  The four sets and ``{i}`` partition the node set.
    """
    graph.require(i)
    cached = graph._partitions.get(i)
    if cached is not None:
        return cached
    up = graph.ancestors(i)
    down = graph.descendants(i)
    rest = set(graph.nodes) - up - down - {i}
    down_c = set()
    for v in rest:
        related = graph.descendants(v) | graph.ancestors(v)
        if related & down:
            down_c.add(v)
    part = Partition(frozenset(up), frozenset(down), frozenset(rest - down_c), frozenset(down_c))
    graph._partitions[i] = part
    return part


def merge_set_between(graph: ActiveGraph, i: str, j: str) -> frozenset[str]:
    """Tank outlets and merge nodes met on any directed path from ``i`` to ``j``.

    The start node is excluded and ``j`` itself is included when it qualifies.
    Empty when ``j`` is not reachable from ``i``.
    """
    graph.require(i)
    graph.require(j)
    if i == j:
        on_path = {j}
    elif j in graph.descendants(i):
        on_path = (graph.descendants(i) & graph.ancestors(j)) | {j}
    else:
        return frozenset()
    tanks = set(graph.tanks)
    return frozenset(v for v in on_path if v in tanks or v in graph.merge_nodes)


def correction_edge_set(graph: ActiveGraph, i: str) -> frozenset[str]:
    """Ids of the pipes whose relaxation gap shifts the head of node ``i``.

    A pipe ``(i', j')`` qualifies when ``i`` is ``j'`` or lies downstream of it
    and no tank or merge node sits between them.
    """
    graph.require(i)
    cached = graph._corrections.get(i)
    if cached is not None:
        return cached
    out = set()
    for e in graph.pipes:
        jp = e.head
        if jp != i and i not in graph.descendants(jp):
            continue
        if not merge_set_between(graph, jp, i):
            out.add(e.id)
    result = frozenset(out)
    graph._corrections[i] = result
    return result


@dataclass(frozen=True)
class TheoremCheck:
    holds: bool
    cycles: tuple[tuple[str, ...], ...] = ()
    unvalved_edges: tuple[str, ...] = ()

    @property
    def violations(self) -> list[str]:
        out = [f"directed cycle: {' -> '.join(c + (c[0],))}" for c in self.cycles]
        out += [f"edge {e} enters a merge node without a pressure reducing valve" for e in self.unvalved_edges]
        return out

    def to_dict(self) -> dict:
        return {
            "holds": self.holds,
            "cycles": [list(c) for c in self.cycles],
            "unvalved_edges": list(self.unvalved_edges),
            "violations": self.violations,
        }


def _find_cycles(graph: ActiveGraph) -> list[tuple[str, ...]]:
    # one cycle per strongly connected component is enough to report the defect
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    stack: list[str] = []
    on_stack: set[str] = set()
    comps: list[list[str]] = []
    counter = [0]

    def strongconnect(v):
        index[v] = low[v] = counter[0]
        counter[0] += 1
        stack.append(v)
        on_stack.add(v)
        for e in graph.out_edges(v):
            w = e.head
            if w not in index:
                strongconnect(w)
                low[v] = min(low[v], low[w])
            elif w in on_stack:
                low[v] = min(low[v], index[w])
        if low[v] == index[v]:
            comp = []
            while True:
                w = stack.pop()
                on_stack.discard(w)
                comp.append(w)
                if w == v:
                    break
            comps.append(comp)

    for v in graph.nodes:
        if v not in index:
            strongconnect(v)

    cycles = []
    for comp in comps:
        if len(comp) < 2:
            continue
        members = set(comp)
        start = min(comp, key=graph.nodes.index)
        # walk inside the component until a node repeats
        path, seen, v = [], {}, start
        while v not in seen:
            seen[v] = len(path)
            path.append(v)
            v = next(e.head for e in graph.out_edges(v) if e.head in members)
        cycles.append(tuple(path[seen[v]:]))
    return cycles


def check_theorem1(graph: ActiveGraph) -> TheoremCheck:
    """Check the two sufficient conditions for an exact cone relaxation.

    1. the active graph has no directed cycle;
    2. every edge entering a merge node is a pressure reducing valve.
    """
    cycles = _find_cycles(graph)
    unvalved = []
    for m in sorted(graph.merge_nodes, key=graph.nodes.index):
        for e in graph.in_edges(m):
            if e.is_physical and e.kind is not EdgeKind.VALVE:
                unvalved.append(e.id)
    holds = not cycles and not unvalved
    return TheoremCheck(holds, tuple(cycles), tuple(unvalved))

