"""Exactness diagnosis of cone-relaxed solutions, exact reconstruction and pump-speed recovery.

A relaxed pipe carries ``G = f W`` with ``W >= Q^2``; the slack
``eps = f (W - Q^2)`` is the head the relaxation lost on that pipe.  When the
active graph is acyclic and every edge into a merge node is a valve, the slack
can be pushed into node heads: each node rises by the slack of the pipes
upstream of it with no tank or merge node in between, and the valves feeding
merge nodes absorb the difference.  Flows, volumes, pump gains, tank heads and
all discretization variables are untouched.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

from .errors import InfeasibleError, MalformedInputError, TopologyError
from .hydraulics import TAU_FEAS, Schedule
from .network import ActiveGraph, EdgeKind, Network, PumpParams, check_theorem1, correction_edge_set
from .relax import RelaxedSolution

__all__ = [
    "TAU_EXACT",
    "ExactnessReport",
    "exactness_report",
    "head_shifts",
    "reconstruct",
    "recover_speed",
    "recover_pump_speeds",
]

log = logging.getLogger(__name__)

TAU_EXACT = 1e-6  # m


@dataclass
class ExactnessReport:
    """Per-pipe relaxation slack ``eps = f (W - Q^2)`` in metres."""

    eps: dict[str, float] = field(default_factory=dict)
    tol: float = TAU_EXACT

    @property
    def max_eps(self) -> float:
        return max(self.eps.values(), default=0.0)

    @property
    def is_exact(self) -> bool:
        return self.max_eps <= self.tol

    @property
    def offending(self) -> list[str]:
        return sorted(e for e, v in self.eps.items() if v > self.tol)

    def to_dict(self) -> dict:
        return {
            "is_exact": self.is_exact,
            "max_eps": self.max_eps,
            "tol": self.tol,
            "offending": self.offending,
            "eps": self.eps,
        }


def exactness_report(
    solution: RelaxedSolution,
    graph: ActiveGraph,
    tol: float = TAU_EXACT,
    feas_tol: float = TAU_FEAS,
) -> ExactnessReport:
    """Slack of every active pipe.

    Pipes without a ``W`` entry are read as exact (``W = Q^2``).

    Raises
    ------
    MalformedInputError
        When some ``W`` sits below ``Q^2`` by more than ``feas_tol`` in head,
        i.e. the point is outside the cone.
    """
    eps = {}
    for e in graph.pipes:
        q = solution.schedule.Q[e.id]
        w = solution.W.get(e.id, q * q)
        val = e.f_d * (w - q * q)
        if val < -feas_tol:
            raise MalformedInputError(f"pipe {e.id}: W below Q^2 (slack {val:.3e} m); point violates the loss cone")
        eps[e.id] = val
    return ExactnessReport(eps, tol)


def head_shifts(graph: ActiveGraph, eps: dict[str, float]) -> dict[str, float]:
    """Head rise of each node: the slack summed over its correction set."""
    return {n: math.fsum(max(eps.get(e, 0.0), 0.0) for e in sorted(correction_edge_set(graph, n))) for n in graph.nodes}


def reconstruct(solution: RelaxedSolution, graph: ActiveGraph, tol: float = TAU_EXACT) -> RelaxedSolution:
    """Exact point with the same flows, volumes, pump gains and tank heads.

    Raises
    ------
    TopologyError
        When the graph has a directed cycle or an unvalved edge into a merge
        node, since the slack then has nowhere safe to go.
    """
    check = check_theorem1(graph)
    if not check.holds:
        raise TopologyError("cannot reconstruct an exact point: " + "; ".join(check.violations))
    report = exactness_report(solution, graph, tol)
    net: Network = graph.network
    out = solution.copy()
    out.reconstructed = True
    sched = out.schedule
    # negative slack within the feasibility tolerance is roundoff; treat it as zero
    psi = head_shifts(graph, report.eps)
    for n, shift in psi.items():
        sched.H[n] += shift
    for t in graph.tanks:
        if psi[t] != 0.0:
            raise AssertionError(f"tank {t} head moved by {psi[t]}")
    total = {n: sched.H[n] + net.node(n).elevation for n in graph.nodes}
    for e in graph.edges:
        if e.kind is EdgeKind.PIPE:
            q = sched.Q[e.id]
            sched.G[e.id] = e.f_d * q * q
            out.W[e.id] = q * q
        elif e.kind is EdgeKind.VALVE:
            sched.G[e.id] = total[e.tail] - total[e.head]
        elif e.kind is EdgeKind.PUMP and abs(psi[e.head] - psi[e.tail]) > tol:
            raise AssertionError(f"pump {e.id} gain would change by {psi[e.head] - psi[e.tail]}")
    # heads only rise, so minimum-head rows stay satisfied; kept as a guard
    for n in graph.nodes:
        if sched.H[n] < solution.schedule.H[n]:
            raise AssertionError(f"node {n} head dropped during reconstruction")
    return out


def recover_speed(q: float, gain: float, pump: PumpParams) -> float:
    """Nonnegative speed at which ``pump`` adds ``gain`` metres at flow ``q``.

    Solves ``c w^2 + b q w + a q^2 = gain`` through the cancellation-free
    form ``w = 2 (gain - a q^2) / (b q + sqrt(disc))``.

    Raises
    ------
    InfeasibleError
        When no real speed exists.
    """
    a, b, c = pump.a, pump.b, pump.c
    disc = (b * q) ** 2 - 4.0 * c * (a * q * q - gain)
    if disc < 0:
        raise InfeasibleError(f"no real pump speed for Q={q}, gain={gain} (discriminant {disc:.3e})")
    root = math.sqrt(disc)
    den = b * q + root
    if den <= 0:
        return 0.0
    return max(2.0 * (gain - a * q * q) / den, 0.0)


def recover_pump_speeds(
    schedule: Schedule,
    network: Network,
    pumps=None,
    clamp_tol: float = 1e-6,
) -> dict[str, float]:
    """Speed of every pump in ``schedule.G``, clamped into its window with a warning.

    ``pumps`` restricts the pump ids; by default every pump of ``network``
    present in the schedule is recovered.  A speed outside the window by more
    than ``clamp_tol`` (relative to the window) raises.

    Raises
    ------
    InfeasibleError
        On a negative discriminant or a speed far outside the window.
    """
    ids = pumps if pumps is not None else [e.id for e in network.pumps if e.id in schedule.G]
    out = {}
    for pid in ids:
        p = network.edge(pid).pump
        w = recover_speed(schedule.Q[pid], schedule.G[pid], p)
        lo, hi = p.w_min, p.w_max
        slack = clamp_tol * max(1.0, hi - lo)
        if w < lo or w > hi:
            if w < lo - slack or w > hi + slack:
                raise InfeasibleError(f"pump {pid}: recovered speed {w:.6g} outside [{lo}, {hi}]")
            clamped = min(max(w, lo), hi)
            log.warning("pump %s: speed %.10g clamped to %.10g", pid, w, clamped)
            w = clamped
        out[pid] = w
    return out
