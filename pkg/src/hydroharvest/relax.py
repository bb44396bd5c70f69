"""Program builders: exact descriptors, convexified and cone-relaxed programs, discretized MISOCPs.

All programs are built for one slot on a fixed active graph.  Switch states
are data, so big-M couplings with ``y = 1`` collapse to equalities and the
switched-off elements are simply absent.

Program names and what they contain:

``N1``
    Exact physics with pump speeds as variables, quadratic pipe losses and
    the bilinear pump-energy budget.  Reference descriptor only.
``N2``
    Pump speed eliminated; the pump region is the convex band between the
    full-speed curve and a supporting line.  Reference descriptor only.
``N3``
    ``N2`` with pipe losses relaxed to ``G = f W``, ``Q^2 <= W``.
``N4``
    ``N3`` with pump gains and tank heads on grids, the budget linearised via
    exact binary-times-flow products and a linear objective.  Solvable.
``M1-relaxed``
    ``N4`` feasible set without the budget, minimising pump energy.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, MalformedInputError
from .hydraulics import Schedule, SlotInput
from .network import ActiveGraph, BigMConstants, EdgeKind, Network, NodeKind, PumpParams
from .program import ConicProgram

__all__ = [
    "DiscretizationGrid",
    "RelaxedSolution",
    "fit_pump_lower_line",
    "pump_line",
    "build_N1",
    "build_N2",
    "build_N3",
    "discretize_pump_heads",
    "glover_linearize",
    "discretize_tank_heads",
    "add_linear_budget",
    "build_N4",
    "build_M1_relaxed",
    "decode_solution",
    "embed_schedule",
    "interpolation_weights",
    "grid_warnings",
]

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# grids and the pump lower line


@dataclass(frozen=True)
class DiscretizationGrid:
    """Pump-gain values ``zeta[0..B]`` and tank-head values ``sigma[0..C]`` (m)."""

    zeta: tuple[float, ...]
    sigma: tuple[float, ...]

    def __post_init__(self):
        for name, vals in (("zeta", self.zeta), ("sigma", self.sigma)):
            if len(vals) < 2:
                raise ConfigurationError(f"{name} grid needs at least one cell")
            if any(not math.isfinite(v) for v in vals):
                raise ConfigurationError(f"{name} grid has non-finite values")
            if any(b <= a for a, b in zip(vals, vals[1:])):
                raise ConfigurationError(f"{name} grid must be strictly increasing")

    @property
    def B(self) -> int:
        return len(self.zeta) - 1

    @property
    def C(self) -> int:
        return len(self.sigma) - 1

    @classmethod
    def uniform(cls, B: int, C: int, zeta_max: float, sigma_max: float, zeta_min: float = 0.0, sigma_min: float = 0.0):
        """Evenly spaced grids from ``*_min`` (index 0) to ``*_max`` (index B or C)."""
        if B < 1 or C < 1:
            raise ConfigurationError("grid sizes B and C must be at least 1")
        if not (zeta_max > zeta_min >= 0 and sigma_max > sigma_min >= 0):
            raise ConfigurationError("grid endpoints must satisfy 0 <= min < max")
        zeta = tuple(zeta_min + b * (zeta_max - zeta_min) / B for b in range(B + 1))
        sigma = tuple(sigma_min + c * (sigma_max - sigma_min) / C for c in range(C + 1))
        return cls(zeta, sigma)

    def refined(self) -> "DiscretizationGrid":
        """Nested grid with every cell split in two."""
        def split(v):
            out = []
            for a, b in zip(v, v[1:]):
                out += [a, 0.5 * (a + b)]
            return tuple(out + [v[-1]])

        return DiscretizationGrid(split(self.zeta), split(self.sigma))

    def to_dict(self) -> dict:
        return {"zeta": list(self.zeta), "sigma": list(self.sigma)}


def fit_pump_lower_line(pump: PumpParams) -> tuple[float, float]:
    """Tangent ``(d, e)`` to the minimum-speed curve at the mid flow.

    The minimum-speed curve is concave, so the tangent lies above it for
    every flow.

    Raises
    ------
    ConfigurationError
        If the band between the line and the maximum-speed curve is empty on
        the admissible flow range.
    """
    a, b, c, w = pump.a, pump.b, pump.c, pump.w_min
    if not (a < 0 and w > 0):
        raise ConfigurationError("lower line needs a < 0 and w_min > 0")
    q0 = 0.5 * (pump.q_min + pump.q_max)
    d = 2 * a * q0 + b * w
    e = a * q0 * q0 + b * w * q0 + c * w * w - d * q0
    _check_band(pump, d, e)
    return d, e


def _check_band(pump: PumpParams, d: float, e: float) -> None:
    # upper(q) - line(q) is concave; check its maximum over [q_min, q_max]
    bb, cc = pump.b * pump.w_max, pump.c * pump.w_max**2
    gap = lambda q: pump.a * q * q + bb * q + cc - (d * q + e)  # noqa: E731
    qv = min(max(-(bb - d) / (2 * pump.a), pump.q_min), pump.q_max)
    best = max(gap(pump.q_min), gap(pump.q_max), gap(qv))
    if best < -1e-12 * max(1.0, abs(cc)):
        raise ConfigurationError(
            f"pump band is empty on [{pump.q_min}, {pump.q_max}] (max gap {best:.3e})"
        )


def pump_line(pump: PumpParams) -> tuple[float, float]:
    """Stored lower-line coefficients, or the fitted tangent when absent."""
    if pump.d is not None and pump.e is not None:
        _check_band(pump, pump.d, pump.e)
        return pump.d, pump.e
    return fit_pump_lower_line(pump)


def grid_warnings(network: Network, graph: ActiveGraph, slot: SlotInput, grid: DiscretizationGrid) -> list[str]:
    """Grid choices that make the discretized program likely infeasible."""
    out = []
    for e in graph.pumps:
        p = e.pump
        shutoff = p.c * p.w_max**2
        if grid.zeta[-1] < shutoff:
            out.append(f"pump {e.id}: top gain {grid.zeta[-1]:g} m below shutoff head {shutoff:.4g} m")
        d, ee = pump_line(p)
        floor = min(d * q + ee for q in (p.q_min, p.q_max))
        if grid.zeta[1] > shutoff or grid.zeta[-1] < floor:
            out.append(f"pump {e.id}: no gain grid value lies in the pump band")
    prev = slot.prev_heads(network)
    for t in graph.tanks:
        tank = network.node(t).tank
        h0 = prev[t]
        if h0 > grid.sigma[-1] or h0 < grid.sigma[1]:
            out.append(f"tank {t}: previous head {h0:.4g} m outside head grid [{grid.sigma[1]:g}, {grid.sigma[-1]:g}]")
        if grid.sigma[1] > tank.max_head:
            out.append(f"tank {t}: every head grid value exceeds the tank height {tank.max_head:.4g} m")
    return out


# ---------------------------------------------------------------------------
# shared physical rows


def _base(network: Network, graph: ActiveGraph, slot: SlotInput, big_m: BigMConstants | None, name: str, sense: str):
    big_m = big_m or network.big_m
    prog = ConicProgram(name, sense)
    delta = network.delta
    prev_heads = slot.prev_heads(network)
    for node, d in slot.demands.items():
        if d > 0 and node not in graph:
            raise ConfigurationError(f"demand at {node!r} which is not in the active graph")

    for n in graph.nodes:
        prog.add_var(f"H[{n}]", element=n, symbol="H_i")
    for e in graph.all_edges:
        prog.add_var(f"Q[{e.id}]", element=e.id, symbol="Q_ij")
    for e in graph.edges:
        prog.add_var(f"G[{e.id}]", element=e.id, symbol="H_ij")
    for t in graph.tanks:
        prog.add_var(f"V[{t}]", element=t, symbol="V_i")

    def net_flow(n, scale=1.0):
        terms = {}
        for e in graph.in_edges(n):
            terms[f"Q[{e.id}]"] = terms.get(f"Q[{e.id}]", 0.0) + scale
        for e in graph.out_edges(n):
            terms[f"Q[{e.id}]"] = terms.get(f"Q[{e.id}]", 0.0) - scale
        return terms

    for n in graph.nodes:
        node = network.node(n)
        if node.kind is NodeKind.JUNCTION:
            prog.add_row(net_flow(n), "eq", slot.demand(n), "flow_conservation", n)
            prog.add_row({f"H[{n}]": 1.0}, "ge", node.min_head, "min_pressure", n)
        elif node.kind is NodeKind.TANK_INLET:
            prog.add_row(net_flow(n), "eq", 0.0, "flow_conservation", n)
            prog.add_row({f"H[{n}]": 1.0}, "ge", node.elevation, "inlet_head", n)
        elif node.kind is NodeKind.RESERVOIR:
            prog.add_row({f"H[{n}]": 1.0}, "eq", 0.0, "reservoir_head", n)
        else:
            tank = node.tank
            terms = net_flow(n, -1.0)
            terms[f"V[{n}]"] = 1.0 / delta
            prog.add_row(terms, "eq", slot.prev_volumes[n] / delta, "tank_volume", n)
            prog.add_row({f"V[{n}]": 1.0}, "ge", 0.0, "tank_capacity", n)
            prog.add_row({f"V[{n}]": 1.0}, "le", tank.capacity, "tank_capacity", n)
            terms = net_flow(n, -delta / tank.area)
            terms[f"H[{n}]"] = 1.0
            prog.add_row(terms, "eq", prev_heads[n], "tank_head", n)

    for e in graph.all_edges:
        q = f"Q[{e.id}]"
        if e.kind is EdgeKind.FICTITIOUS:
            prog.add_row({q: 1.0}, "ge", 0.0, "fictitious_flow_sign", e.id)
            continue
        el = network.node(e.tail).elevation - network.node(e.head).elevation
        rise = {f"H[{e.head}]": 1.0, f"H[{e.tail}]": -1.0}
        if e.kind is EdgeKind.PUMP:
            # total-head rise equals the pump gain
            prog.add_row({**rise, f"G[{e.id}]": -1.0}, "eq", el, "pump_coupling", e.id)
            prog.add_row({q: 1.0}, "ge", e.pump.q_min, "pump_flow_bounds", e.id)
            prog.add_row({q: 1.0}, "le", e.pump.q_max, "pump_flow_bounds", e.id)
        else:
            label = "valve" if e.kind is EdgeKind.VALVE else "pipe"
            prog.add_row({**rise, f"G[{e.id}]": 1.0}, "eq", el, f"{label}_coupling", e.id)
            prog.add_row({q: 1.0}, "ge", big_m.m1, f"{label}_flow_bounds", e.id)
            prog.add_row({q: 1.0}, "le", big_m.M1, f"{label}_flow_bounds", e.id)
            if e.kind is EdgeKind.VALVE:
                prog.add_row({f"G[{e.id}]": 1.0}, "ge", 0.0, "valve_loss_sign", e.id)

    prog.meta.update(
        {
            "network": network.name,
            "slot": slot.k,
            "rho": network.rho,
            "g": network.g,
            "delta": delta,
            "r": slot.r,
            "price": slot.price,
            "M1": big_m.M1,
            "pumps": {e.id: {"q_min": e.pump.q_min, "q_max": e.pump.q_max, "eta": e.pump.eta} for e in graph.pumps},
            "pipes": {e.id: {"f_d": e.f_d} for e in graph.pipes},
            "tanks": {t: {"area": network.node(t).tank.area, "prev_head": prev_heads[t]} for t in graph.tanks},
        }
    )
    return prog


def _pump_band(prog: ConicProgram, graph: ActiveGraph) -> None:
    for e in graph.pumps:
        p = e.pump
        q, gname = f"Q[{e.id}]", f"G[{e.id}]"
        bbar, cbar = p.b * p.w_max, p.c * p.w_max**2
        alpha = math.sqrt(-p.a)
        # G <= a Q^2 + bbar Q + cbar  as  (alpha Q)^2 <= t * 1 with t = cbar + bbar Q - G
        t = {q: bbar, gname: -1.0}
        prog.add_cone(
            [(t, cbar + 1.0), ({q: 2 * alpha}, 0.0), (t, cbar - 1.0)],
            "pump_upper_curve",
            e.id,
        )
        d, ee = pump_line(p)
        prog.add_row({gname: 1.0, q: -d}, "ge", ee, "pump_lower_line", e.id)


def _bilinear_budget(prog: ConicProgram, graph: ActiveGraph, slot: SlotInput, network: Network) -> None:
    quad = {(f"G[{e.id}]", f"Q[{e.id}]"): 1.0 / e.pump.eta for e in graph.pumps}
    prog.add_quad(quad, {}, "le", slot.r / (network.rho * network.g), "energy_budget", "pumps")


def _harvest_objective_scale(prog: ConicProgram, network: Network, graph: ActiveGraph, slot: SlotInput) -> None:
    # reported = rho g delta / 2 * sum A (H^2 - Hprev^2)
    k = network.rho * network.g * network.delta / 2.0
    prev = slot.prev_heads(network)
    prog.obj_scale = k
    prog.obj_offset = -k * sum(network.node(t).tank.area * prev[t] ** 2 for t in graph.tanks)


# ---------------------------------------------------------------------------
# descriptors


def build_N1(
    network: Network,
    graph: ActiveGraph,
    slot: SlotInput,
    big_m: BigMConstants | None = None,
    budget: bool = True,
) -> ConicProgram:
    """Exact slot model with pump speeds; nonconvex reference descriptor."""
    prog = _base(network, graph, slot, big_m, "N1", "max")
    for e in graph.pumps:
        p = e.pump
        w = prog.add_var(f"w[{e.id}]", element=e.id, symbol="omega_ij")
        prog.add_row({w: 1.0}, "ge", p.w_min, "pump_speed_bounds", e.id)
        prog.add_row({w: 1.0}, "le", p.w_max, "pump_speed_bounds", e.id)
        q, gname = f"Q[{e.id}]", f"G[{e.id}]"
        prog.add_quad({(q, q): p.a, (q, w): p.b, (w, w): p.c}, {gname: -1.0}, "eq", 0.0, "pump_curve", e.id)
    for e in graph.pipes:
        q = f"Q[{e.id}]"
        prog.add_quad({(q, q): e.f_d}, {f"G[{e.id}]": -1.0}, "eq", 0.0, "darcy_loss", e.id)
    if budget:
        _bilinear_budget(prog, graph, slot, network)
    prog.set_objective({}, quad={(f"H[{t}]", f"H[{t}]"): network.node(t).tank.area for t in graph.tanks})
    _harvest_objective_scale(prog, network, graph, slot)
    return prog


def build_N2(network: Network, graph: ActiveGraph, slot: SlotInput, big_m: BigMConstants | None = None) -> ConicProgram:
    """Convexified pump band with exact pipe losses and bilinear budget; descriptor."""
    prog = _base(network, graph, slot, big_m, "N2", "max")
    _pump_band(prog, graph)
    for e in graph.pipes:
        q = f"Q[{e.id}]"
        prog.add_quad({(q, q): e.f_d}, {f"G[{e.id}]": -1.0}, "eq", 0.0, "darcy_loss", e.id)
    _bilinear_budget(prog, graph, slot, network)
    prog.set_objective({}, quad={(f"H[{t}]", f"H[{t}]"): network.node(t).tank.area for t in graph.tanks})
    _harvest_objective_scale(prog, network, graph, slot)
    return prog


def _relaxed_losses(prog: ConicProgram, graph: ActiveGraph) -> None:
    for e in graph.pipes:
        q = f"Q[{e.id}]"
        w = prog.add_var(f"W[{e.id}]", element=e.id, symbol="W_ij")
        prog.add_row({f"G[{e.id}]": 1.0, w: -e.f_d}, "eq", 0.0, "loss_relaxed", e.id)
        # Q^2 <= W  as  ||(2Q, W - 1)|| <= W + 1
        prog.add_cone([({w: 1.0}, 1.0), ({q: 2.0}, 0.0), ({w: 1.0}, -1.0)], "loss_cone", e.id)


def build_N3(network: Network, graph: ActiveGraph, slot: SlotInput, big_m: BigMConstants | None = None) -> ConicProgram:
    """Cone-relaxed pipe losses; still carries the bilinear budget and quadratic objective."""
    prog = _base(network, graph, slot, big_m, "N3", "max")
    _pump_band(prog, graph)
    _relaxed_losses(prog, graph)
    _bilinear_budget(prog, graph, slot, network)
    prog.set_objective({}, quad={(f"H[{t}]", f"H[{t}]"): network.node(t).tank.area for t in graph.tanks})
    _harvest_objective_scale(prog, network, graph, slot)
    return prog


# ---------------------------------------------------------------------------
# discretization


def discretize_pump_heads(prog: ConicProgram, grid: DiscretizationGrid) -> ConicProgram:
    """Pump gains restricted to ``zeta[1..B]`` with one binary per cell."""
    out = prog.copy()
    M1 = out.meta.get("M1", 1e4)
    zeta = grid.zeta
    for pid in out.meta["pumps"]:
        gname = f"G[{pid}]"
        zs = [out.add_var(f"z[{pid},{b}]", binary=True, element=pid, symbol="z_ijb") for b in range(1, grid.B + 1)]
        out.add_row({gname: 1.0, **{z: -zeta[b] for b, z in enumerate(zs, 1)}}, "eq", 0.0, "pump_head_grid", pid)
        out.add_row({z: 1.0 for z in zs}, "eq", 1.0, "pump_onehot", pid)
        for b, z in enumerate(zs, 1):
            out.add_row({z: zeta[b - 1], gname: -1.0}, "le", 0.0, "pump_bin_lower", f"{pid},{b}")
            out.add_row({gname: 1.0, z: M1 - zeta[b]}, "le", M1, "pump_bin_upper", f"{pid},{b}")
        out.add_group(zs, "pump_onehot", pid)
    out.meta["grid"] = grid.to_dict()
    return out


def glover_linearize(prog: ConicProgram, pump: str, grid: DiscretizationGrid) -> ConicProgram:
    """Add ``Phi[p,b] = Q[p] z[p,b]`` as four linear rows per cell."""
    out = prog.copy()
    info = out.meta["pumps"][pump]
    ql, qu = info["q_min"], info["q_max"]
    q = f"Q[{pump}]"
    for b in range(1, grid.B + 1):
        z = f"z[{pump},{b}]"
        phi = out.add_var(f"Phi[{pump},{b}]", element=pump, symbol="Phi_ijb")
        el = f"{pump},{b}"
        out.add_row({phi: 1.0, z: -ql}, "ge", 0.0, "glover_bounds", el)
        out.add_row({phi: 1.0, z: -qu}, "le", 0.0, "glover_bounds", el)
        # Q - (1 - z) qu <= Phi <= Q - (1 - z) ql
        out.add_row({phi: 1.0, q: -1.0, z: -qu}, "ge", -qu, "glover_lower", el)
        out.add_row({phi: 1.0, q: -1.0, z: -ql}, "le", -ql, "glover_upper", el)
    return out


def add_linear_budget(prog: ConicProgram, grid: DiscretizationGrid) -> ConicProgram:
    """Pump energy budget through the cell products, divided through by rho g delta."""
    out = prog.copy()
    terms = {}
    for pid, info in out.meta["pumps"].items():
        for b in range(1, grid.B + 1):
            terms[f"Phi[{pid},{b}]"] = grid.zeta[b] / info["eta"]
    out.add_row(terms, "le", out.meta["r"] / (out.meta["rho"] * out.meta["g"]), "energy_budget", "pumps")
    return out


def discretize_tank_heads(prog: ConicProgram, grid: DiscretizationGrid) -> ConicProgram:
    """Tank heads restricted to ``sigma[1..C]``; objective becomes ``sum A sum s sigma^2``."""
    out = prog.copy()
    M1 = out.meta.get("M1", 1e4)
    sigma = grid.sigma
    obj = {}
    for t, info in out.meta["tanks"].items():
        hname = f"H[{t}]"
        ss = [out.add_var(f"s[{t},{c}]", binary=True, element=t, symbol="s_ic") for c in range(1, grid.C + 1)]
        out.add_row({hname: 1.0, **{s: -sigma[c] for c, s in enumerate(ss, 1)}}, "eq", 0.0, "tank_head_grid", t)
        out.add_row({s: 1.0 for s in ss}, "eq", 1.0, "tank_onehot", t)
        for c, s in enumerate(ss, 1):
            out.add_row({s: sigma[c - 1], hname: -1.0}, "le", 0.0, "tank_bin_lower", f"{t},{c}")
            out.add_row({hname: 1.0, s: M1 - sigma[c]}, "le", M1, "tank_bin_upper", f"{t},{c}")
            obj[s] = info["area"] * sigma[c] ** 2
        out.add_group(ss, "tank_onehot", t)
    out.set_objective(obj, sense="max")
    out.meta["grid"] = grid.to_dict()
    return out


def _discretized(network, graph, slot, grid, big_m, name):
    prog = _base(network, graph, slot, big_m, name, "max")
    _pump_band(prog, graph)
    _relaxed_losses(prog, graph)
    prog = discretize_pump_heads(prog, grid)
    for e in graph.pumps:
        prog = glover_linearize(prog, e.id, grid)
    prog = discretize_tank_heads(prog, grid)
    prog.name = name
    return prog


def build_N4(
    network: Network,
    graph: ActiveGraph,
    slot: SlotInput,
    grid: DiscretizationGrid,
    big_m: BigMConstants | None = None,
) -> ConicProgram:
    """Mixed-integer SOCP maximising stored tank energy within the pump energy budget."""
    prog = _discretized(network, graph, slot, grid, big_m, "N4")
    prog = add_linear_budget(prog, grid)
    _harvest_objective_scale(prog, network, graph, slot)
    for w in grid_warnings(network, graph, slot, grid):
        log.warning("%s", w)
    prog.meta["warnings"] = grid_warnings(network, graph, slot, grid)
    return prog


def build_M1_relaxed(
    network: Network,
    graph: ActiveGraph,
    slot: SlotInput,
    grid: DiscretizationGrid,
    big_m: BigMConstants | None = None,
) -> ConicProgram:
    """Same feasible set as ``N4`` without the budget; minimises ``sum (1/eta) sum Phi zeta``.

    The reported objective is the slot pump cost ``rho g delta price * internal``.
    """
    prog = _discretized(network, graph, slot, grid, big_m, "M1-relaxed")
    obj = {}
    for e in graph.pumps:
        for b in range(1, grid.B + 1):
            obj[f"Phi[{e.id},{b}]"] = grid.zeta[b] / e.pump.eta
    prog.set_objective(obj, sense="min")
    prog.obj_scale = network.rho * network.g * network.delta * slot.price
    prog.obj_offset = 0.0
    prog.meta["warnings"] = grid_warnings(network, graph, slot, grid)
    for w in prog.meta["warnings"]:
        log.warning("%s", w)
    return prog


# ---------------------------------------------------------------------------
# solutions


@dataclass
class RelaxedSolution:
    """Decoded program point; ``schedule.omega`` stays empty until speeds are recovered."""

    schedule: Schedule
    W: dict[str, float] = field(default_factory=dict)
    z: dict[tuple[str, int], float] = field(default_factory=dict)
    s: dict[tuple[str, int], float] = field(default_factory=dict)
    Phi: dict[tuple[str, int], float] = field(default_factory=dict)
    objective: float = math.nan
    reported_objective: float = math.nan
    gap: float = math.nan
    program: str = ""
    reconstructed: bool = False

    def copy(self) -> "RelaxedSolution":
        return RelaxedSolution(
            self.schedule.copy(), dict(self.W), dict(self.z), dict(self.s), dict(self.Phi),
            self.objective, self.reported_objective, self.gap, self.program, self.reconstructed,
        )

    def to_dict(self) -> dict:
        pair = lambda d: {f"{k[0]},{k[1]}": v for k, v in sorted(d.items())}  # noqa: E731
        return {
            "program": self.program,
            "reconstructed": self.reconstructed,
            "objective": self.objective,
            "reported_objective": self.reported_objective,
            "gap": self.gap,
            "schedule": self.schedule.to_dict(),
            "W": self.W,
            "z": pair(self.z),
            "s": pair(self.s),
            "Phi": pair(self.Phi),
        }


    @classmethod
    def from_dict(cls, data) -> "RelaxedSolution":
        """Inverse of :meth:`to_dict`; a bare schedule object is also accepted."""
        if not isinstance(data, dict):
            raise MalformedInputError("solution: expected an object")
        if "schedule" not in data:
            return cls(Schedule.from_dict(data))

        def unpair(d):
            out = {}
            for k, v in (d or {}).items():
                el, idx = str(k).rsplit(",", 1)
                out[(el, int(idx))] = float(v)
            return out

        try:
            return cls(
                Schedule.from_dict(data["schedule"]),
                {str(k): float(v) for k, v in data.get("W", {}).items()},
                unpair(data.get("z")),
                unpair(data.get("s")),
                unpair(data.get("Phi")),
                float(data.get("objective", math.nan)),
                float(data.get("reported_objective", math.nan)),
                float(data.get("gap", math.nan)),
                str(data.get("program", "")),
                bool(data.get("reconstructed", False)),
            )
        except (AttributeError, TypeError, ValueError) as exc:
            if isinstance(exc, MalformedInputError):
                raise
            raise MalformedInputError(f"malformed solution: {exc}") from None


def _split(name: str) -> tuple[str, str]:
    sym, rest = name.split("[", 1)
    return sym, rest[:-1]


def decode_solution(prog: ConicProgram, x, gap: float = math.nan) -> RelaxedSolution:
    """Turn a program point into schedule fields plus auxiliary variables."""
    x = np.asarray(x, dtype=float)
    H, Q, G, V, W, omega = {}, {}, {}, {}, {}, {}
    z, s, phi = {}, {}, {}
    for i, v in enumerate(prog.vars):
        sym, key = _split(v.name)
        val = float(x[i])
        if sym in ("z", "s", "Phi"):
            el, idx = key.rsplit(",", 1)
            {"z": z, "s": s, "Phi": phi}[sym][(el, int(idx))] = val
        else:
            {"H": H, "Q": Q, "G": G, "V": V, "W": W, "w": omega}[sym][key] = val
    return RelaxedSolution(
        Schedule(H, Q, G, V, omega),
        W,
        z,
        s,
        phi,
        prog.objective(x),
        prog.reported_objective(x),
        gap,
        prog.name,
    )


def interpolation_weights(values, v: float) -> dict[int, float]:
    """Convex weights on ``values[1..]`` reproducing ``v`` with at most two adjacent entries."""
    vals = list(values)
    if v <= vals[1]:
        return {1: 1.0}
    if v >= vals[-1]:
        return {len(vals) - 1: 1.0}
    for c in range(1, len(vals) - 1):
        lo, hi = vals[c], vals[c + 1]
        if lo <= v <= hi:
            t = (v - lo) / (hi - lo)
            if t == 0.0:
                return {c: 1.0}
            if t == 1.0:
                return {c + 1: 1.0}
            return {c: 1.0 - t, c + 1: t}
    raise AssertionError("unreachable")


def embed_schedule(prog: ConicProgram, sched: Schedule, W=None, grid: DiscretizationGrid | None = None) -> np.ndarray:
    """Program point for a schedule.

    ``W`` defaults to ``Q^2`` per pipe.  With a grid, pump gains and tank heads
    are written as convex combinations of neighbouring grid values and the
    cell products as ``Phi = Q z``; the point is integral exactly when every
    value sits on the grid.
    """
    vals: dict[str, float] = {}
    for n, h in sched.H.items():
        vals[f"H[{n}]"] = h
    for e, q in sched.Q.items():
        vals[f"Q[{e}]"] = q
    for e, g in sched.G.items():
        vals[f"G[{e}]"] = g
    for t, v in sched.V.items():
        vals[f"V[{t}]"] = v
    for p, w in sched.omega.items():
        vals[f"w[{p}]"] = w
    for i, v in enumerate(prog.vars):
        sym, key = _split(v.name)
        if sym == "W":
            vals[v.name] = (W or {}).get(key, sched.Q[key] ** 2)
    if grid is not None:
        for pid in prog.meta.get("pumps", {}):
            if not prog.has_var(f"z[{pid},1]"):
                continue
            wts = interpolation_weights(grid.zeta, sched.G[pid])
            for b in range(1, grid.B + 1):
                zb = wts.get(b, 0.0)
                vals[f"z[{pid},{b}]"] = zb
                if prog.has_var(f"Phi[{pid},{b}]"):
                    vals[f"Phi[{pid},{b}]"] = sched.Q[pid] * zb
        for t in prog.meta.get("tanks", {}):
            if not prog.has_var(f"s[{t},1]"):
                continue
            wts = interpolation_weights(grid.sigma, sched.H[t])
            for c in range(1, grid.C + 1):
                vals[f"s[{t},{c}]"] = wts.get(c, 0.0)
    vals = {k: v for k, v in vals.items() if prog.has_var(k)}
    return prog.vector(vals)
