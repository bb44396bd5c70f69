"""Element laws, the physical constraint checker and the slot energy audit."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .errors import MalformedInputError
from .network import ActiveGraph, BigMConstants, EdgeKind, Network, NodeKind, PumpParams

__all__ = [
    "TAU_FEAS",
    "SlotInput",
    "Schedule",
    "Violation",
    "AuditReport",
    "ScenarioSlot",
    "Scenario",
    "pump_head_gain",
    "darcy_head_loss",
    "pump_energy",
    "pump_gain_bounds",
    "check_schedule",
    "energy_audit",
    "load_scenario",
    "scenario_from_dict",
    "scenario_to_dict",
]

TAU_FEAS = 1e-6
J_PER_KWH = 3.6e6


def pump_head_gain(q: float, w: float, pump: PumpParams) -> float:
    """Head added by ``pump`` at flow ``q`` (m^3/s) and relative speed ``w``."""
    return pump.a * q * q + pump.b * q * w + pump.c * w * w


def darcy_head_loss(q: float, f_d: float) -> float:
    return f_d * q * q


def pump_energy(gain: float, q: float, eta: float, rho: float, g: float, delta: float) -> float:
    """Electrical energy (J) drawn by a pump over one slot."""
    return rho * g * delta * gain * q / eta


def pump_gain_bounds(q: float, pump: PumpParams) -> tuple[float, float]:
    """Range of head gains reachable at flow ``q`` over the admissible speed window.

    For ``q >= 0`` the gain increases with speed, so the extremes sit at the
    speed bounds.
    """
    return pump_head_gain(q, pump.w_min, pump), pump_head_gain(q, pump.w_max, pump)


# ---------------------------------------------------------------------------
# data carried per slot


@dataclass(frozen=True)
class SlotInput:
    """Everything revealed at the start of slot ``k``.

    ``price`` is in $/J and ``r`` in W.  ``prev_volumes`` are the tank volumes
    at the end of the previous slot; previous heads follow as volume / area.
    """

    k: int
    demands: Mapping[str, float]
    price: float
    r: float
    prev_volumes: Mapping[str, float]
    r_bar: float | None = None

    def __post_init__(self):
        for node, d in self.demands.items():
            if d < 0:
                raise MalformedInputError(f"negative demand {d} at node {node!r}")
        if self.r < 0 or (self.r_bar is not None and self.r > self.r_bar * (1 + 1e-12)):
            raise MalformedInputError(f"signal r={self.r} outside [0, r_bar={self.r_bar}]")

    def prev_heads(self, network: Network) -> dict[str, float]:
        return {t: v / network.node(t).tank.area for t, v in self.prev_volumes.items()}

    def demand(self, node: str) -> float:
        return float(self.demands.get(node, 0.0))

    @classmethod
    def initial(cls, network: Network, demands=None, price=0.0, r=0.0, k=1, r_bar=None):
        return cls(k, dict(demands or {}), price, r, network.initial_volumes(), r_bar)


@dataclass
class Schedule:
    """Operating point for one slot.

    H: pressure head per node (m); Q: flow per edge incl. fictitious (m^3/s);
    G: pump gain or pipe/valve loss per physical edge (m); V: tank volumes (m^3);
    omega: relative pump speeds.
    """

    H: dict[str, float]
    Q: dict[str, float]
    G: dict[str, float]
    V: dict[str, float]
    omega: dict[str, float] = field(default_factory=dict)

    def copy(self) -> "Schedule":
        return Schedule(dict(self.H), dict(self.Q), dict(self.G), dict(self.V), dict(self.omega))

    def to_dict(self) -> dict:
        return {"H": self.H, "Q": self.Q, "G": self.G, "V": self.V, "omega": self.omega}

    @classmethod
    def from_dict(cls, data: Mapping) -> "Schedule":
        try:
            return cls(
                {str(k): float(v) for k, v in data["H"].items()},
                {str(k): float(v) for k, v in data["Q"].items()},
                {str(k): float(v) for k, v in data["G"].items()},
                {str(k): float(v) for k, v in data["V"].items()},
                {str(k): float(v) for k, v in data.get("omega", {}).items()},
            )
        except (KeyError, AttributeError, TypeError, ValueError) as exc:
            raise MalformedInputError(f"malformed schedule: {exc}") from None


@dataclass(frozen=True)
class Violation:
    constraint: str
    element: str
    residual: float

    def __str__(self):
        return f"{self.constraint}[{self.element}]: residual {self.residual:.3e}"


def _require_dims(graph: ActiveGraph, sched: Schedule) -> None:
    net = graph.network
    want_h = set(graph.nodes)
    want_q = {e.id for e in graph.all_edges}
    want_g = {e.id for e in graph.edges}
    want_v = set(graph.tanks)
    for name, have, want in (
        ("H", sched.H, want_h),
        ("Q", sched.Q, want_q),
        ("G", sched.G, want_g),
        ("V", sched.V, want_v),
    ):
        if set(have) != want:
            missing = sorted(want - set(have))
            extra = sorted(set(have) - want)
            raise MalformedInputError(
                f"schedule {name} does not match the active graph (missing {missing}, extra {extra})"
            )
    extra_w = set(sched.omega) - {e.id for e in graph.pumps}
    if extra_w:
        raise MalformedInputError(f"speeds given for non-pump or inactive edges {sorted(extra_w)}")
    del net


def check_schedule(
    network: Network,
    graph: ActiveGraph,
    slot: SlotInput,
    sched: Schedule,
    big_m: BigMConstants | None = None,
    tol: float = TAU_FEAS,
) -> list[Violation]:
    """Return every physical constraint violated by ``sched`` beyond ``tol``.

    Pump speeds are optional: when a pump has no entry in ``sched.omega`` its
    (flow, gain) pair is checked against the reachable region over the speed
    window instead of against a specific speed.

    Raises
    ------
    MalformedInputError
        If the schedule is not dimensioned to ``graph``.
    """
    _require_dims(graph, sched)
    big_m = big_m or network.big_m
    out: list[Violation] = []

    def bad(name, elem, res):
        out.append(Violation(name, elem, float(res)))

    def geq(name, elem, lhs, rhs):  # lhs >= rhs
        if lhs < rhs - tol:
            bad(name, elem, rhs - lhs)

    def eq(name, elem, lhs, rhs):
        if abs(lhs - rhs) > tol:
            bad(name, elem, lhs - rhs)

    for node, d in slot.demands.items():
        if d > 0 and node not in graph:
            bad("demand_outside_graph", node, d)

    total = {n: sched.H[n] + network.node(n).elevation for n in graph.nodes}
    delta = network.delta
    prev_heads = slot.prev_heads(network)

    for n in graph.nodes:
        node = network.node(n)
        inflow = sum(sched.Q[e.id] for e in graph.in_edges(n))
        outflow = sum(sched.Q[e.id] for e in graph.out_edges(n))
        if node.kind is NodeKind.JUNCTION:
            eq("flow_conservation", n, inflow - outflow, slot.demand(n))
            geq("min_pressure", n, sched.H[n], node.min_head)
        elif node.kind is NodeKind.TANK_INLET:
            eq("flow_conservation", n, inflow - outflow, 0.0)
            geq("inlet_head", n, sched.H[n], node.elevation)
        elif node.kind is NodeKind.RESERVOIR:
            eq("reservoir_head", n, sched.H[n], 0.0)
        elif node.kind is NodeKind.TANK_OUTLET:
            vol, area = sched.V[n], node.tank.area
            # volume balance written per unit time so the residual is a flow
            eq("tank_volume", n, (vol - slot.prev_volumes[n]) / delta, inflow - outflow)
            geq("tank_capacity", n, vol, 0.0)
            geq("tank_capacity", n, node.tank.capacity, vol)
            eq("tank_head", n, sched.H[n] - prev_heads[n], delta / area * (inflow - outflow))

    for e in graph.all_edges:
        q = sched.Q[e.id]
        if e.kind is EdgeKind.FICTITIOUS:
            geq("fictitious_flow_sign", e.id, q, 0.0)
            continue
        gval = sched.G[e.id]
        rise = total[e.head] - total[e.tail]
        if e.kind is EdgeKind.PUMP:
            p = e.pump
            eq("pump_coupling", e.id, rise, gval)
            geq("pump_flow_bounds", e.id, q, p.q_min)
            geq("pump_flow_bounds", e.id, p.q_max, q)
            w = sched.omega.get(e.id)
            if w is not None:
                geq("pump_speed_bounds", e.id, w, p.w_min)
                geq("pump_speed_bounds", e.id, p.w_max, w)
                eq("pump_curve", e.id, gval, pump_head_gain(q, w, p))
            else:
                lo, hi = pump_gain_bounds(max(q, 0.0), p)
                geq("pump_region", e.id, gval, lo)
                geq("pump_region", e.id, hi, gval)
        else:
            label = "valve" if e.kind is EdgeKind.VALVE else "pipe"
            eq(f"{label}_coupling", e.id, rise, -gval)
            geq(f"{label}_flow_bounds", e.id, q, big_m.m1)
            geq(f"{label}_flow_bounds", e.id, big_m.M1, q)
            if e.kind is EdgeKind.VALVE:
                geq("valve_loss_sign", e.id, gval, 0.0)
            else:
                eq("darcy_loss", e.id, gval, darcy_head_loss(q, e.f_d))
    return out


# ---------------------------------------------------------------------------
# energy audit


@dataclass
class AuditReport:
    """Slot energy balance in joules.

    ``E_p`` is the hydraulic energy added by pumps and ``E_pump_electric`` the
    electricity they draw (``E_p`` divided by efficiency, per pump).
    """

    E_p: float
    E_r: float
    E_l: float
    E_t: float
    E_d: float
    E_pump_electric: float
    breakdown: dict = field(default_factory=dict)

    @property
    def imbalance(self) -> float:
        return (self.E_p + self.E_r) - (self.E_t + self.E_l + self.E_d)

    @property
    def max_term(self) -> float:
        return max(abs(self.E_p), abs(self.E_r), abs(self.E_l), abs(self.E_t), abs(self.E_d))

    def closes(self, rel: float = 1e-4) -> bool:
        return abs(self.imbalance) <= rel * max(self.max_term, 1e-300) or self.max_term == 0.0

    def to_dict(self) -> dict:
        return {
            "E_p": self.E_p,
            "E_r": self.E_r,
            "E_l": self.E_l,
            "E_t": self.E_t,
            "E_d": self.E_d,
            "E_pump_electric": self.E_pump_electric,
            "imbalance": self.imbalance,
            "breakdown": self.breakdown,
        }

    CSV_FIELDS = ("E_p", "E_r", "E_l", "E_t", "E_d", "E_pump_electric", "imbalance")

    def csv_row(self) -> list[float]:
        d = self.to_dict()
        return [d[k] for k in self.CSV_FIELDS]


def energy_audit(network: Network, graph: ActiveGraph, slot: SlotInput, sched: Schedule) -> AuditReport:
    """Energy supplied by pumps and reservoirs against losses, storage and delivery.

    Losses on non-pump edges use total heads (pressure plus elevation) and are
    positive when head drops along the flow.  The storage term charges each
    tank's net inflow at the tank's end-of-slot total head, which is the form
    that balances exactly under the discrete tank dynamics.
    """
    _require_dims(graph, sched)
    k = network.rho * network.g * network.delta
    total = {n: sched.H[n] + network.node(n).elevation for n in graph.nodes}
    prev_heads = slot.prev_heads(network)
    per_pump, per_pump_el, per_loss, per_tank, per_res, per_dem = {}, {}, {}, {}, {}, {}
    for e in graph.all_edges:
        q = sched.Q[e.id]
        if e.kind is EdgeKind.PUMP:
            per_pump[e.id] = k * sched.G[e.id] * q
            per_pump_el[e.id] = per_pump[e.id] / e.pump.eta
        else:
            per_loss[e.id] = k * q * (total[e.tail] - total[e.head])
    for n in graph.nodes:
        node = network.node(n)
        if node.kind is NodeKind.RESERVOIR:
            outflow = sum(sched.Q[e.id] for e in graph.out_edges(n))
            per_res[n] = k * outflow * node.elevation
        elif node.kind is NodeKind.TANK_OUTLET:
            area = node.tank.area
            net_inflow = area * (sched.H[n] - prev_heads[n]) / network.delta
            per_tank[n] = k * total[n] * net_inflow
        elif node.kind is NodeKind.JUNCTION:
            d = slot.demand(n)
            if d:
                per_dem[n] = k * d * total[n]
    return AuditReport(
        E_p=math.fsum(per_pump.values()),
        E_r=math.fsum(per_res.values()),
        E_l=math.fsum(per_loss.values()),
        E_t=math.fsum(per_tank.values()),
        E_d=math.fsum(per_dem.values()),
        E_pump_electric=math.fsum(per_pump_el.values()),
        breakdown={
            "pumps": per_pump,
            "pumps_electric": per_pump_el,
            "losses": per_loss,
            "tanks": per_tank,
            "reservoirs": per_res,
            "demands": per_dem,
        },
    )


# ---------------------------------------------------------------------------
# scenario files


@dataclass(frozen=True)
class ScenarioSlot:
    k: int
    demands: dict[str, float]  # m^3/s
    price: float  # $/J
    r: float  # W


@dataclass(frozen=True)
class Scenario:
    slots: tuple[ScenarioSlot, ...]
    r_bar: float
    delta: float
    seed: int | None = None
    notes: str = ""

    def __post_init__(self):
        if not self.slots:
            raise MalformedInputError("scenario has no slots")
        if not self.r_bar > 0:
            raise MalformedInputError("r_bar must be positive")
        if not self.delta > 0:
            raise MalformedInputError("delta must be positive")
        for s in self.slots:
            if not 0 <= s.r <= self.r_bar:
                raise MalformedInputError(f"slot {s.k}: r={s.r} outside [0, r_bar]")
            if any(v < 0 for v in s.demands.values()):
                raise MalformedInputError(f"slot {s.k}: negative demand")

    @property
    def K(self) -> int:
        return len(self.slots)


_SCEN_KEYS = {"slots", "r_bar_watt", "delta_s", "seed", "notes"}
_SLOT_KEYS = {"k", "demands_m3_per_h", "price_per_kwh", "r_watt"}


def scenario_from_dict(data: Mapping) -> Scenario:
    if not isinstance(data, Mapping):
        raise MalformedInputError("scenario: expected an object")
    extra = set(data) - _SCEN_KEYS
    if extra:
        raise MalformedInputError(f"scenario: unknown keys {sorted(extra)}")
    try:
        slots = []
        for raw in data["slots"]:
            bad = set(raw) - _SLOT_KEYS
            if bad:
                raise MalformedInputError(f"scenario slot: unknown keys {sorted(bad)}")
            slots.append(
                ScenarioSlot(
                    k=int(raw["k"]),
                    demands={str(n): float(v) / 3600.0 for n, v in raw.get("demands_m3_per_h", {}).items()},
                    price=float(raw["price_per_kwh"]) / J_PER_KWH,
                    r=float(raw["r_watt"]),
                )
            )
        return Scenario(
            tuple(slots),
            float(data["r_bar_watt"]),
            float(data["delta_s"]),
            data.get("seed"),
            str(data.get("notes", "")),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, MalformedInputError):
            raise
        raise MalformedInputError(f"malformed scenario: {exc!r}") from None


def scenario_to_dict(scen: Scenario) -> dict:
    out = {
        "r_bar_watt": scen.r_bar,
        "delta_s": scen.delta,
        "slots": [
            {
                "k": s.k,
                "demands_m3_per_h": {n: v * 3600.0 for n, v in s.demands.items()},
                "price_per_kwh": s.price * J_PER_KWH,
                "r_watt": s.r,
            }
            for s in scen.slots
        ],
    }
    if scen.seed is not None:
        out["seed"] = scen.seed
    if scen.notes:
        out["notes"] = scen.notes
    return out


def load_scenario(path: str | Path) -> Scenario:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise MalformedInputError(f"scenario file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise MalformedInputError(f"scenario file {path} is not valid JSON: {exc}") from None
    return scenario_from_dict(data)
