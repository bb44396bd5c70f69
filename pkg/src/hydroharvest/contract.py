"""Online two-step demand-response contract: per-slot cost minimisation, surplus harvesting, accounting.

Each slot first solves the cost-minimising program.  When the pumps' energy
at that optimum is below the energy offered by the grid signal, the slot is
re-solved to maximise the energy stored in the tanks within the offered
budget.  Every accepted schedule is reconstructed to an exact operating
point, given pump speeds, checked and audited before the tank state moves on.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .conic.bnb import STATUS_INFEASIBLE, SolveReport, SolveSettings, branch_and_bound
from .errors import ConfigurationError, InfeasibleError
from .hydraulics import (
    J_PER_KWH,
    AuditReport,
    Scenario,
    ScenarioSlot,
    SlotInput,
    check_schedule,
    energy_audit,
    load_scenario,
    pump_energy,
    scenario_to_dict,
)
from .network import ActiveGraph, Network, build_active_subgraph, check_theorem1, load_network
from .recon import exactness_report, reconstruct, recover_pump_speeds
from .relax import DiscretizationGrid, RelaxedSolution, build_M1_relaxed, build_N4, decode_solution

__all__ = [
    "STEP1",
    "STEP2",
    "TABLE1_DEMANDS_M3H",
    "ContractConfig",
    "SlotResult",
    "ContractResult",
    "StepOutcome",
    "step1_min_cost",
    "step2_max_harvest",
    "run_contract",
    "generate_scenario",
    "LEDGER_COLUMNS",
]

log = logging.getLogger(__name__)

STEP1 = "Step1"
STEP2 = "Step2"

# uniform demand ranges (m^3/h) of the 21-node network
TABLE1_DEMANDS_M3H = {
    "9": (576.0, 864.0),
    "10": (720.0, 1008.0),
    "11": (432.0, 720.0),
    "12": (864.0, 1080.0),
    "15": (360.0, 648.0),
}


@dataclass
class ContractConfig:
    """Inputs of one contract run.

    ``K`` truncates the scenario when set.  ``r_scale`` multiplies every
    signal, so ``0`` gives the no-harvesting baseline.  ``settings`` applies
    to every branch-and-bound solve.
    """

    network_path: str | Path
    scenario_path: str | Path
    grid: DiscretizationGrid
    settings: SolveSettings = field(default_factory=lambda: SolveSettings(time_limit=120.0))
    out_dir: str | Path | None = None
    K: int | None = None
    r_scale: float = 1.0
    continue_on_failure: bool = False

    def __post_init__(self):
        if self.K is not None and self.K < 1:
            raise ConfigurationError("K must be at least 1")
        if self.grid.zeta[-1] <= 0 or self.grid.sigma[-1] <= 0:
            raise ConfigurationError("grid endpoints must be positive")
        if not 0.0 <= self.r_scale <= 1.0:
            raise ConfigurationError("r_scale must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "network": str(self.network_path),
            "scenario": str(self.scenario_path),
            "grid": self.grid.to_dict(),
            "settings": self.settings.to_dict(),
            "K": self.K,
            "r_scale": self.r_scale,
            "continue_on_failure": self.continue_on_failure,
        }


@dataclass
class StepOutcome:
    """A solved, reconstructed and sped-up schedule from one step."""

    solution: RelaxedSolution
    report: SolveReport
    pump_energy: float  # J drawn from the grid
    max_eps_before: float


@dataclass
class SlotResult:
    k: int
    step: str
    step2_attempted: bool
    fallback: bool
    solution: RelaxedSolution
    E_p: float  # J, pump electricity
    E_p_star: float  # J, Step-1 pump electricity
    gamma: float  # W
    r: float  # W
    price: float  # $/J
    imbalance_cost: float  # $
    harvested: float  # J, tank energy term of the accepted schedule
    audit: AuditReport
    reports: dict[str, SolveReport]
    tank_heads: dict[str, float]
    wall_time: float
    note: str = ""
    audit_delta: float = 0.0  # s, slot length used by the audit

    @property
    def purchased(self) -> float:
        """Energy drawn beyond what the signal offered (J)."""
        return max(self.E_p - self.r * self.audit_delta, 0.0)

    def ledger_row(self, tanks) -> list:
        rep = self.reports.get(self.step.lower()) or next(iter(self.reports.values()))
        return [
            self.k,
            self.step,
            int(self.step2_attempted),
            int(self.fallback),
            self.r,
            self.gamma,
            self.E_p,
            self.E_p_star,
            self.purchased,
            self.price,
            self.imbalance_cost,
            self.harvested,
            self.audit.imbalance,
            rep.status,
            rep.gap,
            rep.nodes,
            self.wall_time,
            *[self.tank_heads[t] for t in tanks],
        ]


LEDGER_COLUMNS = (
    "k",
    "step",
    "step2_attempted",
    "fallback",
    "r_W",
    "gamma_W",
    "E_p_J",
    "E_p_star_J",
    "purchased_J",
    "price_per_J",
    "imbalance_cost",
    "harvested_J",
    "audit_imbalance_J",
    "solver_status",
    "solver_gap",
    "solver_nodes",
    "wall_time_s",
)


@dataclass
class ContractResult:
    slots: list[SlotResult]
    tanks: tuple[str, ...]
    seed: int | None
    wall_time: float
    failures: list[str] = field(default_factory=list)

    @property
    def total_pump_energy(self) -> float:
        return math.fsum(s.E_p for s in self.slots)

    @property
    def total_purchased(self) -> float:
        return math.fsum(s.purchased for s in self.slots)

    @property
    def total_imbalance_cost(self) -> float:
        return math.fsum(s.imbalance_cost for s in self.slots)

    def summary(self) -> dict:
        return {
            "slots": len(self.slots),
            "step2_slots": [s.k for s in self.slots if s.step == STEP2],
            "fallback_slots": [s.k for s in self.slots if s.fallback],
            "total_pump_energy_J": self.total_pump_energy,
            "total_purchased_J": self.total_purchased,
            "total_imbalance_cost": self.total_imbalance_cost,
            "seed": self.seed,
            "wall_time_s": self.wall_time,
            "failures": self.failures,
        }


# ---------------------------------------------------------------------------
# steps


def _slot_pump_energy(network: Network, graph: ActiveGraph, sol: RelaxedSolution) -> float:
    sched = sol.schedule
    return math.fsum(
        pump_energy(sched.G[e.id], sched.Q[e.id], e.pump.eta, network.rho, network.g, network.delta) for e in graph.pumps
    )


def _finish(network, graph, slot, prog, rep: SolveReport) -> StepOutcome:
    sol = decode_solution(prog, rep.x, rep.gap)
    before = exactness_report(sol, graph).max_eps
    sol = reconstruct(sol, graph)
    sol.schedule.omega = recover_pump_speeds(sol.schedule, network, [e.id for e in graph.pumps])
    bad = check_schedule(network, graph, slot, sol.schedule)
    if bad:
        raise InfeasibleError(f"slot {slot.k}: reconstructed schedule violates " + "; ".join(map(str, bad[:5])), rep)
    return StepOutcome(sol, rep, _slot_pump_energy(network, graph, sol), before)


def step1_min_cost(
    network: Network,
    graph: ActiveGraph,
    slot: SlotInput,
    grid: DiscretizationGrid,
    settings: SolveSettings | None = None,
) -> StepOutcome:
    """Cost-minimising schedule of one slot and its pump energy.

    Raises
    ------
    InfeasibleError
        When no feasible schedule exists for the slot.
    """
    prog = build_M1_relaxed(network, graph, slot, grid)
    rep = branch_and_bound(prog, settings)
    if not rep.has_incumbent:
        raise InfeasibleError(f"slot {slot.k}: cost minimisation found no feasible schedule ({rep.status})", rep)
    return _finish(network, graph, slot, prog, rep)


def step2_max_harvest(
    network: Network,
    graph: ActiveGraph,
    slot: SlotInput,
    grid: DiscretizationGrid,
    E_p_star: float,
    settings: SolveSettings | None = None,
) -> StepOutcome:
    """Harvest-maximising schedule within the signal's energy budget.

    The reported objective is the tank energy change
    ``rho g delta sum (A/2)(H^2 - H_prev^2)`` evaluated at the decoded heads.

    Raises
    ------
    ValueError
        When the Step-1 energy already covers the signal, so Step 2 does not apply.
    InfeasibleError
        When the budgeted program has no feasible schedule.
    """
    if not E_p_star < slot.r * network.delta:
        raise ValueError(f"slot {slot.k}: Step 2 needs E_p* < r delta ({E_p_star:.6g} >= {slot.r * network.delta:.6g})")
    prog = build_N4(network, graph, slot, grid)
    rep = branch_and_bound(prog, settings)
    if not rep.has_incumbent:
        raise InfeasibleError(f"slot {slot.k}: harvesting program found no feasible schedule ({rep.status})", rep)
    out = _finish(network, graph, slot, prog, rep)
    prev = slot.prev_heads(network)
    k = network.rho * network.g * network.delta
    out.solution.reported_objective = k * math.fsum(
        network.node(t).tank.area / 2.0 * (out.solution.schedule.H[t] ** 2 - prev[t] ** 2) for t in graph.tanks
    )
    return out


# ---------------------------------------------------------------------------
# contract loop


def _slot_input(network: Network, scen: Scenario, s: ScenarioSlot, volumes, r_scale: float) -> SlotInput:
    return SlotInput(s.k, dict(s.demands), s.price, s.r * r_scale, dict(volumes), scen.r_bar)


def _write_json(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, default=_json_default)


def _json_default(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    raise TypeError(f"cannot serialise {type(v).__name__}")


def _harvested(network, graph, slot, sched) -> float:
    prev = slot.prev_heads(network)
    k = network.rho * network.g * network.delta
    return k * math.fsum(network.node(t).tank.area / 2.0 * (sched.H[t] ** 2 - prev[t] ** 2) for t in graph.tanks)


def run_contract(config: ContractConfig, network: Network | None = None, scenario: Scenario | None = None) -> ContractResult:
    """Run every slot in order, carrying tank volumes from one slot to the next.

    ``network``/``scenario`` skip loading the files named in ``config``.
    Writes ``ledger.csv``, ``summary.json``, ``schedules/`` and ``audit/``
    under ``config.out_dir`` when it is set.

    Raises
    ------
    InfeasibleError
        When a slot has no feasible schedule and ``continue_on_failure`` is off.
    """
    t0 = time.perf_counter()
    network = network or load_network(config.network_path)
    scen = scenario or load_scenario(config.scenario_path)
    if abs(scen.delta - network.delta) > 1e-9 * network.delta:
        log.info("slot length %.6g s from the scenario replaces the network's %.6g s", scen.delta, network.delta)
        network = network.with_changes(delta=scen.delta)
    graph = build_active_subgraph(network)
    check = check_theorem1(graph)
    if not check.holds:
        log.warning("exactness conditions fail (%s); schedules are bounds only", "; ".join(check.violations))
    slots = scen.slots[: config.K] if config.K else scen.slots
    tanks = tuple(graph.tanks)
    volumes = network.initial_volumes()
    out_dir = Path(config.out_dir) if config.out_dir else None
    results: list[SlotResult] = []
    failures: list[str] = []
    for s in slots:
        slot = _slot_input(network, scen, s, volumes, config.r_scale)
        ts = time.perf_counter()
        try:
            res = _run_slot(network, graph, slot, config)
        except InfeasibleError as exc:
            failures.append(str(exc))
            log.error("%s", exc)
            if not config.continue_on_failure:
                raise
            continue
        res.wall_time = time.perf_counter() - ts
        results.append(res)
        volumes = dict(res.solution.schedule.V)
        log.info(
            "slot %d: %s, E_p %.6g J, r delta %.6g J, heads %s (%.1f s)",
            s.k, res.step, res.E_p, slot.r * network.delta, res.tank_heads, res.wall_time,
        )
        if out_dir is not None:
            doc = res.solution.to_dict()
            doc.update({"k": s.k, "step": res.step, "fallback": res.fallback, "note": res.note})
            doc["solver"] = {name: rep.to_dict() for name, rep in res.reports.items()}
            _write_json(out_dir / "schedules" / f"slot_{s.k:03d}.json", doc)
            _write_json(out_dir / "audit" / f"slot_{s.k:03d}.json", {"k": s.k, **res.audit.to_dict()})
    result = ContractResult(results, tanks, scen.seed, time.perf_counter() - t0, failures)
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "ledger.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([*LEDGER_COLUMNS, *[f"H_{t}" for t in tanks]])
            for r in results:
                w.writerow(r.ledger_row(tanks))
        _write_json(out_dir / "summary.json", {**result.summary(), "config": config.to_dict()})
    return result


def _run_slot(network: Network, graph: ActiveGraph, slot: SlotInput, config: ContractConfig) -> SlotResult:
    one = step1_min_cost(network, graph, slot, config.grid, config.settings)
    chosen, step, fallback, note = one, STEP1, False, ""
    reports = {"step1": one.report}
    attempted = one.pump_energy < slot.r * network.delta
    if attempted:
        try:
            two = step2_max_harvest(network, graph, slot, config.grid, one.pump_energy, config.settings)
        except InfeasibleError as exc:
            fallback, note = True, f"Step 2 fell back to Step 1: {exc}"
            log.warning("%s", note)
            if exc.report is not None:
                reports["step2"] = exc.report
        else:
            chosen, step = two, STEP2
            reports["step2"] = two.report
    sched = chosen.solution.schedule
    audit = energy_audit(network, graph, slot, sched)
    gamma = chosen.pump_energy / network.delta
    res = SlotResult(
        k=slot.k,
        step=step,
        step2_attempted=attempted,
        fallback=fallback,
        solution=chosen.solution,
        E_p=chosen.pump_energy,
        E_p_star=one.pump_energy,
        gamma=gamma,
        r=slot.r,
        price=slot.price,
        imbalance_cost=slot.price * abs(gamma - slot.r) * network.delta,
        harvested=_harvested(network, graph, slot, sched),
        audit=audit,
        reports=reports,
        tank_heads={t: sched.H[t] for t in graph.tanks},
        wall_time=0.0,
        note=note,
        audit_delta=network.delta,
    )
    return res


# ---------------------------------------------------------------------------
# scenarios


def generate_scenario(
    K: int = 12,
    seed: int = 0,
    delta: float = 300.0,
    r_bar: float = 200e3,
    demand_ranges: dict[str, tuple[float, float]] | None = None,
    price_range: tuple[float, float] = (0.02, 0.10),
) -> Scenario:
    """Seeded scenario: uniform demands per node (m^3/h), prices ($/kWh) and signals in ``[0, r_bar]``."""
    if K < 1:
        raise ConfigurationError("K must be at least 1")
    rng = np.random.default_rng(seed)
    ranges = demand_ranges or TABLE1_DEMANDS_M3H
    slots = []
    for k in range(1, K + 1):
        dem = {n: float(rng.uniform(lo, hi)) / 3600.0 for n, (lo, hi) in sorted(ranges.items())}
        price = float(rng.uniform(*price_range)) / J_PER_KWH
        r = float(rng.uniform(0.0, r_bar))
        slots.append(ScenarioSlot(k, dem, price, r))
    notes = f"uniform demands per node, price U{list(price_range)} $/kWh, r U[0, {r_bar}] W; numpy default_rng({seed})"
    return Scenario(tuple(slots), r_bar, delta, seed, notes)


def write_scenario(scen: Scenario, path: str | Path) -> None:
    _write_json(Path(path), scenario_to_dict(scen))
