"""Command-line surface: topology check, single-slot solves, contract runs, audits, reconstruction, program dumps.

Exit status is 0 on success, 1 when a program is infeasible or a check
fails, and 2 on malformed input or usage errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .conic.bnb import SolveSettings
from .contract import (
    ContractConfig,
    generate_scenario,
    run_contract,
    step1_min_cost,
    step2_max_harvest,
    write_scenario,
)
from .errors import ConfigurationError, InfeasibleError, MalformedInputError, TopologyError
from .hydraulics import Scenario, SlotInput, check_schedule, energy_audit, load_scenario, scenario_to_dict
from .network import build_active_subgraph, check_theorem1, load_network
from .recon import exactness_report, reconstruct, recover_pump_speeds
from .relax import (
    DiscretizationGrid,
    RelaxedSolution,
    build_M1_relaxed,
    build_N1,
    build_N2,
    build_N3,
    build_N4,
)

__all__ = ["main", "build_parser", "DEFAULT_NETWORK", "DEFAULT_SCENARIO"]

log = logging.getLogger(__name__)

DATA = Path(__file__).parent / "data"
DEFAULT_NETWORK = DATA / "case21.json"
DEFAULT_SCENARIO = DATA / "scenario21.json"

EXIT_OK, EXIT_INFEASIBLE, EXIT_MALFORMED = 0, 1, 2


def _common(p: argparse.ArgumentParser, scenario: bool = True, grid: bool = True, solver: bool = True) -> None:
    p.add_argument("--network", default=str(DEFAULT_NETWORK), help="network JSON file")
    if scenario:
        p.add_argument("--scenario", help="scenario JSON file; omitted means a seeded demand scenario")
        p.add_argument("--seed", type=int, default=0, help="seed for the generated scenario")
        p.add_argument("--slots", type=int, default=12, help="slots in the generated scenario")
        p.add_argument("--slot", type=int, default=1, help="1-based slot index for single-slot commands")
    if grid:
        p.add_argument("--grid-b", type=int, default=10, help="pump-gain grid intervals")
        p.add_argument("--grid-c", type=int, default=10, help="tank-head grid intervals")
        p.add_argument("--zeta-max", type=float, default=40.0, help="largest pump gain on the grid (m)")
        p.add_argument("--sigma-max", type=float, default=6.5, help="largest tank head on the grid (m)")
        p.add_argument("--zeta-min", type=float, default=0.0, help="smallest pump gain on the grid (m)")
        p.add_argument("--sigma-min", type=float, default=5.5, help="smallest tank head on the grid (m)")
    if solver:
        p.add_argument("--tol-gap", type=float, default=1e-6, help="relative optimality gap")
        p.add_argument("--node-limit", type=int, default=100000, help="branch-and-bound node limit")
        p.add_argument("--time-limit", type=float, default=120.0, help="per-solve wall-clock limit (s)")
    p.add_argument("--out-dir", help="directory for outputs; stdout when omitted")
    p.add_argument("-v", "--verbose", action="count", default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hydroharvest", description="Pump scheduling and demand-response energy harvesting.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check-topology", help="check the exact-reconstruction conditions")
    _common(p, scenario=False, grid=False, solver=False)

    for name, text in (("solve-step1", "minimise pump cost for one slot"), ("solve-step2", "maximise harvest for one slot")):
        p = sub.add_parser(name, help=text)
        _common(p)
        p.add_argument("--initial-volumes", help="JSON object of tank volumes (m^3) before the slot")

    p = sub.add_parser("run-contract", help="run every slot of a scenario")
    _common(p)
    p.add_argument("--r-scale", type=float, default=1.0, help="multiply every signal; 0 gives the baseline")
    p.add_argument("--continue-on-failure", action="store_true")

    p = sub.add_parser("audit", help="check and energy-audit a schedule")
    _common(p, grid=False, solver=False)
    p.add_argument("--schedule", required=True, help="schedule or solution JSON")
    p.add_argument("--initial-volumes", help="JSON object of tank volumes (m^3) before the slot")

    p = sub.add_parser("reconstruct", help="exact point from a cone-relaxed solution")
    _common(p, scenario=False, grid=False, solver=False)
    p.add_argument("--solution", required=True, help="solution JSON with W values")

    p = sub.add_parser("dump-program", help="write a built program as JSON")
    _common(p, solver=False)
    p.add_argument("--program", choices=("N1", "N2", "N3", "N4", "M1"), default="N4")
    p.add_argument("--counts", action="store_true", help="print row and cone counts only")

    p = sub.add_parser("make-scenario", help="write a seeded demand scenario")
    _common(p, scenario=False, grid=False, solver=False)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--slots", type=int, default=12)
    p.add_argument("--r-bar", type=float, default=200e3, help="signal cap (W)")
    p.add_argument("--delta", type=float, default=300.0, help="slot length (s)")
    return parser


# ---------------------------------------------------------------------------
# helpers


def _emit(args, name: str, data) -> None:
    text = json.dumps(data, indent=2, sort_keys=True, default=float)
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text + "\n")
        print(out / name)
    else:
        print(text)


def _grid(args) -> DiscretizationGrid:
    return DiscretizationGrid.uniform(
        args.grid_b, args.grid_c, args.zeta_max, args.sigma_max, zeta_min=args.zeta_min, sigma_min=args.sigma_min
    )


def _settings(args) -> SolveSettings:
    return SolveSettings(tau_gap=args.tol_gap, node_limit=args.node_limit, time_limit=args.time_limit)


def _scenario(args) -> tuple[Scenario, str]:
    if args.scenario:
        return load_scenario(args.scenario), args.scenario
    return generate_scenario(args.slots, args.seed), ""


def _load_json(path: str):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise MalformedInputError(f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise MalformedInputError(f"{path} is not valid JSON: {exc}") from None


def _slot(args, network, scen: Scenario) -> SlotInput:
    if not 1 <= args.slot <= scen.K:
        raise MalformedInputError(f"--slot {args.slot} outside 1..{scen.K}")
    s = scen.slots[args.slot - 1]
    volumes = network.initial_volumes()
    if getattr(args, "initial_volumes", None):
        try:
            raw = json.loads(args.initial_volumes)
        except json.JSONDecodeError as exc:
            raise MalformedInputError(f"--initial-volumes is not valid JSON: {exc}") from None
        if not isinstance(raw, dict) or set(raw) - set(volumes):
            raise MalformedInputError(f"--initial-volumes must be an object over tanks {sorted(volumes)}")
        volumes.update({k: float(v) for k, v in raw.items()})
    return SlotInput(s.k, dict(s.demands), s.price, s.r, volumes, scen.r_bar)


def _setup(args, need_scenario=True):
    network = load_network(args.network)
    scen = None
    if need_scenario:
        scen, _ = _scenario(args)
        network = network.with_changes(delta=scen.delta)
    return network, build_active_subgraph(network), scen


# ---------------------------------------------------------------------------
# commands


def _check_topology(args) -> int:
    network = load_network(args.network)
    check = check_theorem1(build_active_subgraph(network))
    if check.holds:
        print("theorem1: holds")
        return EXIT_OK
    print("theorem1: fails")
    for v in check.violations:
        print(f"  {v}")
    return EXIT_INFEASIBLE


def _outcome(out, network, graph, slot) -> dict:
    sched = out.solution.schedule
    doc = out.solution.to_dict()
    doc["pump_energy_J"] = out.pump_energy
    doc["gamma_W"] = out.pump_energy / network.delta
    doc["max_eps_before_reconstruction"] = out.max_eps_before
    doc["audit"] = energy_audit(network, graph, slot, sched).to_dict()
    doc["solver"] = out.report.to_dict(include_values=False)
    return doc


def _solve_step1(args) -> int:
    network, graph, scen = _setup(args)
    slot = _slot(args, network, scen)
    out = step1_min_cost(network, graph, slot, _grid(args), _settings(args))
    _emit(args, f"step1_slot_{slot.k:03d}.json", _outcome(out, network, graph, slot))
    return EXIT_OK


def _solve_step2(args) -> int:
    network, graph, scen = _setup(args)
    slot = _slot(args, network, scen)
    one = step1_min_cost(network, graph, slot, _grid(args), _settings(args))
    if not one.pump_energy < slot.r * network.delta:
        print(
            f"step 2 refused: Step-1 energy {one.pump_energy:.6g} J is not below r*delta = {slot.r * network.delta:.6g} J",
            file=sys.stderr,
        )
        return EXIT_INFEASIBLE
    out = step2_max_harvest(network, graph, slot, _grid(args), one.pump_energy, _settings(args))
    doc = _outcome(out, network, graph, slot)
    doc["step1_pump_energy_J"] = one.pump_energy
    _emit(args, f"step2_slot_{slot.k:03d}.json", doc)
    return EXIT_OK


def _run_contract(args) -> int:
    scen, path = _scenario(args)
    cfg = ContractConfig(
        args.network,
        path or "<generated>",
        _grid(args),
        _settings(args),
        out_dir=args.out_dir,
        r_scale=args.r_scale,
        continue_on_failure=args.continue_on_failure,
    )
    if args.out_dir and not path:
        write_scenario(scen, Path(args.out_dir) / "scenario.json")
    result = run_contract(cfg, scenario=scen)
    print(json.dumps(result.summary(), indent=2, default=float))
    return EXIT_INFEASIBLE if result.failures else EXIT_OK


def _audit(args) -> int:
    network, graph, scen = _setup(args)
    slot = _slot(args, network, scen)
    sol = RelaxedSolution.from_dict(_load_json(args.schedule))
    sched = sol.schedule
    if not sched.omega:
        sched.omega = recover_pump_speeds(sched, network, [e.id for e in graph.pumps])
    bad = check_schedule(network, graph, slot, sched)
    audit = energy_audit(network, graph, slot, sched)
    _emit(
        args,
        f"audit_slot_{slot.k:03d}.json",
        {"violations": [str(v) for v in bad], "audit": audit.to_dict(), "closes": audit.closes()},
    )
    return EXIT_OK if not bad and audit.closes() else EXIT_INFEASIBLE


def _reconstruct(args) -> int:
    network = load_network(args.network)
    graph = build_active_subgraph(network)
    sol = RelaxedSolution.from_dict(_load_json(args.solution))
    before = exactness_report(sol, graph)
    out = reconstruct(sol, graph)
    doc = out.to_dict()
    doc["max_eps_before"] = before.max_eps
    doc["max_eps_after"] = exactness_report(out, graph).max_eps
    _emit(args, "reconstructed.json", doc)
    return EXIT_OK


def _dump_program(args) -> int:
    network, graph, scen = _setup(args)
    slot = _slot(args, network, scen)
    if args.program == "N1":
        prog = build_N1(network, graph, slot)
    elif args.program == "N2":
        prog = build_N2(network, graph, slot)
    elif args.program == "N3":
        prog = build_N3(network, graph, slot)
    elif args.program == "N4":
        prog = build_N4(network, graph, slot, _grid(args))
    else:
        prog = build_M1_relaxed(network, graph, slot, _grid(args))
    if args.counts:
        _emit(args, f"{prog.name}_counts.json", prog.counts())
    else:
        _emit(args, f"{prog.name}.json", prog.to_dict())
    return EXIT_OK


def _make_scenario(args) -> int:
    scen = generate_scenario(args.slots, args.seed, delta=args.delta, r_bar=args.r_bar)
    _emit(args, "scenario.json", scenario_to_dict(scen))
    return EXIT_OK


_COMMANDS = {
    "check-topology": _check_topology,
    "solve-step1": _solve_step1,
    "solve-step2": _solve_step2,
    "run-contract": _run_contract,
    "audit": _audit,
    "reconstruct": _reconstruct,
    "dump-program": _dump_program,
    "make-scenario": _make_scenario,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return _COMMANDS[args.command](args)
    except (MalformedInputError, ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    except (InfeasibleError, TopologyError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
