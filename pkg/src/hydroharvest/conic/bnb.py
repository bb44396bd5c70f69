"""Continuous relaxation solves and best-bound branch-and-bound over binaries."""

from __future__ import annotations

import heapq
import itertools
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..program import ConicProgram
from .ipm import FAILED, INACCURATE, INFEASIBLE, OPTIMAL, UNBOUNDED, IPMSettings, solve_standard
from .standard import BoundPropagator, PresolveInfeasible, to_standard

__all__ = [
    "SolveSettings",
    "SolveReport",
    "Relaxation",
    "solve_relaxation",
    "solve_socp",
    "branch_and_bound",
    "relative_gap",
    "objective_lattice",
    "STATUS_OPTIMAL",
    "STATUS_INFEASIBLE",
    "STATUS_NODE_LIMIT",
    "STATUS_TIME_LIMIT",
]

log = logging.getLogger(__name__)

STATUS_OPTIMAL = "Optimal"
STATUS_INFEASIBLE = "Infeasible"
STATUS_NODE_LIMIT = "NodeLimit"
STATUS_TIME_LIMIT = "TimeLimit"


@dataclass
class SolveSettings:
    tau_feas: float = 1e-6
    tau_gap: float = 1e-6
    tau_int: float = 1e-5
    node_limit: int = 20000
    time_limit: float = 600.0
    branching: str = "group_dichotomy"  # or "most_fractional"
    dive_nodes: int = 300  # depth-first budget before the first incumbent; 0 disables
    ipm: IPMSettings = field(default_factory=IPMSettings)

    def __post_init__(self):
        if min(self.tau_feas, self.tau_gap, self.tau_int) <= 0:
            raise ValueError("tolerances must be positive")
        if self.node_limit <= 0 or self.time_limit <= 0:
            raise ValueError("limits must be positive")
        if self.dive_nodes < 0:
            raise ValueError("dive_nodes must be nonnegative")
        if self.branching not in ("group_dichotomy", "most_fractional"):
            raise ValueError(f"unknown branching rule {self.branching!r}")

    def to_dict(self) -> dict:
        return {
            "tau_feas": self.tau_feas,
            "tau_gap": self.tau_gap,
            "tau_int": self.tau_int,
            "node_limit": self.node_limit,
            "time_limit": self.time_limit,
            "branching": self.branching,
            "dive_nodes": self.dive_nodes,
        }


@dataclass
class Relaxation:
    """Outcome of one continuous solve; ``objective`` is in the program's sense."""

    status: str
    x: np.ndarray | None = None
    objective: float = math.nan
    iterations: int = 0
    reason: str = ""

    @property
    def solved(self) -> bool:
        return self.status in (OPTIMAL, INACCURATE)


def solve_relaxation(prog: ConicProgram, lb=None, ub=None, ipm: IPMSettings | None = None) -> Relaxation:
    """Solve the continuous relaxation with the given bounds (binaries relaxed to [0, 1])."""
    try:
        sf = to_standard(prog, lb, ub)
    except PresolveInfeasible as exc:
        return Relaxation(INFEASIBLE, reason=exc.reason)
    if sf.n == 0:
        # presolve fixed everything; rows and cones were already verified
        x = sf.expand(np.zeros(0))
        return Relaxation(OPTIMAL, x, prog.objective(x))
    res = solve_standard(sf, ipm)
    if res.status in (OPTIMAL, INACCURATE):
        x = sf.expand(res.x)
        return Relaxation(res.status, x, prog.objective(x), res.iterations)
    return Relaxation(res.status, iterations=res.iterations, reason=str(res.info.get("reason", "")))


def solve_socp(prog: ConicProgram, settings: SolveSettings | None = None) -> Relaxation:
    """Continuous relaxation of ``prog`` over its own bounds."""
    st = settings or SolveSettings()
    return solve_relaxation(prog, ipm=st.ipm)


def relative_gap(incumbent: float, bound: float) -> float:
    if not (math.isfinite(incumbent) and math.isfinite(bound)):
        return math.inf
    return abs(incumbent - bound) / max(1.0, abs(incumbent))


@dataclass
class SolveReport:
    status: str
    x: np.ndarray | None
    objective: float
    bound: float
    gap: float
    nodes: int
    wall_time: float
    ipm_iterations: int = 0
    names: list[str] = field(default_factory=list)
    messages: list[str] = field(default_factory=list)

    @property
    def has_incumbent(self) -> bool:
        return self.x is not None

    def values(self) -> dict[str, float]:
        if self.x is None:
            return {}
        return {n: float(v) for n, v in zip(self.names, self.x)}

    def to_dict(self, include_values: bool = True) -> dict:
        out = {
            "status": self.status,
            "objective": _num(self.objective),
            "bound": _num(self.bound),
            "gap": _num(self.gap),
            "nodes": self.nodes,
            "wall_time_s": self.wall_time,
            "ipm_iterations": self.ipm_iterations,
            "messages": self.messages,
        }
        if include_values:
            out["incumbent"] = self.values() if self.x is not None else None
        return out


def _num(v):
    return v if math.isfinite(v) else None


@dataclass(order=True)
class _Node:
    key: float
    seq: int
    lb: np.ndarray = field(compare=False)
    ub: np.ndarray = field(compare=False)
    bound: float = field(compare=False)
    depth: int = field(compare=False, default=0)


class _Tree:
    def __init__(self, prog: ConicProgram, st: SolveSettings):
        self.prog = prog
        self.st = st
        self.maximize = prog.sense == "max"
        self.groups = [list(g.members) for g in prog.groups]
        grouped = {i for g in self.groups for i in g}
        self.loose = [i for i in prog.binaries if i not in grouped]
        self.binaries = np.array(prog.binaries, dtype=np.int_)
        self.rows = BoundPropagator(prog)
        # groups the objective reads, directly or through a shared row, are split first
        touched = set(prog.obj_lin)
        for r in prog.rows:
            if touched.intersection(r.coeffs):
                touched.update(i for i in r.coeffs if prog.vars[i].binary)
        self.in_objective = [bool(touched.intersection(g)) for g in self.groups]
        self.implied = [self._implications(g, grouped) for g in self.groups]

    def _implications(self, members, grouped):
        """``{var: {member: (lo, hi)}}`` implied on a continuous var when a member is 1.

        Read from rows over exactly one member and one non-binary variable.
        """
        out: dict[int, dict[int, list]] = {}
        mset = set(members)
        for r in self.prog.rows:
            if len(r.coeffs) != 2:
                continue
            (i, a), (j, c) = r.coeffs.items()
            if j in mset:
                (i, a), (j, c) = (j, c), (i, a)
            if i not in mset or j in grouped or self.prog.vars[j].binary or c == 0:
                continue
            lo, hi = -math.inf, math.inf
            val = (r.rhs - a) / c
            if r.sense == "eq":
                lo = hi = val
            elif c > 0:
                hi = val
            else:
                lo = val
            box = out.setdefault(j, {}).setdefault(i, [-math.inf, math.inf])
            box[0], box[1] = max(box[0], lo), min(box[1], hi)
        return out

    def better(self, a: float, b: float) -> bool:
        return a > b if self.maximize else a < b

    def key(self, bound: float) -> float:
        return -bound if self.maximize else bound

    def propagate(self, lb, ub) -> bool:
        """Tighten node bounds from the one-hot groups.  False if the node is empty.

        The last live member of a group is fixed to 1.  A continuous variable
        linked to a group is bounded by the union of the intervals its live
        members imply, and members whose interval misses the variable's
        bounds are dropped.  Interval propagation through the linear rows
        runs on a scratch copy and only its binary fixings are kept: the
        continuous bounds it derives are implied by the rows anyway, and
        pinning them would hand presolve values that are off by roundoff.
        """
        if not self._settle(lb, ub):
            return False
        wlb, wub = lb.copy(), ub.copy()
        for _ in range(10):
            before = (wlb.copy(), wub.copy())
            if not self.rows.tighten(wlb, wub) or not self._settle(wlb, wub):
                return False
            if np.array_equal(before[0], wlb) and np.array_equal(before[1], wub):
                break
        b = self.binaries
        if np.array_equal(lb[b], wlb[b]) and np.array_equal(ub[b], wub[b]):
            return True
        lb[b], ub[b] = wlb[b], wub[b]
        return self._settle(lb, ub)

    def _settle(self, lb, ub) -> bool:
        for _ in range(10):
            before = (lb.copy(), ub.copy())
            if not self._propagate_once(lb, ub):
                return False
            if np.array_equal(before[0], lb) and np.array_equal(before[1], ub):
                break
        return True

    def _propagate_once(self, lb, ub) -> bool:
        tol = self.st.tau_feas
        for g, implied in zip(self.groups, self.implied):
            for j, boxes in implied.items():
                lo, hi = math.inf, -math.inf
                for i in g:
                    if ub[i] < 0.5:
                        continue
                    blo, bhi = boxes.get(i, (-math.inf, math.inf))
                    if blo > ub[j] + tol or bhi < lb[j] - tol:
                        ub[i] = 0.0
                        continue
                    lo, hi = min(lo, blo), max(hi, bhi)
                if lo > hi:
                    return False
                lb[j], ub[j] = max(lb[j], lo), min(ub[j], hi)
                if lb[j] > ub[j]:
                    if lb[j] - ub[j] > tol:
                        return False
                    lb[j] = ub[j] = 0.5 * (lb[j] + ub[j])
            live = [i for i in g if ub[i] > 0.5]
            if not live or any(lb[i] > ub[i] for i in g):
                return False
            ones = [i for i in g if lb[i] > 0.5]
            if len(ones) > 1:
                return False
            if len(ones) == 1:
                for i in live:
                    if i != ones[0]:
                        ub[i] = 0.0
            elif len(live) == 1:
                lb[live[0]] = 1.0
        return True

    def fractional(self, x) -> bool:
        tol = self.st.tau_int
        return any(min(x[i], 1.0 - x[i]) > tol for i in self.prog.binaries)

    def branch(self, x, lb, ub):
        """Two (lb, ub) children, or None if nothing is left to branch on."""
        tol = self.st.tau_int
        if self.st.branching == "group_dichotomy":
            best = None
            for gi, g in enumerate(self.groups):
                live = [i for i in g if ub[i] > 0.5 and lb[i] < 0.5]
                if len(live) < 2:
                    continue
                vals = [min(max(x[i], 0.0), 1.0) for i in live] if x is not None else [0.0] * len(live)
                if x is not None and all(min(v, 1.0 - v) <= tol for v in vals):
                    continue
                conv = (0 if self.in_objective[gi] else 1, max(vals))
                if best is None or conv < best[0]:
                    best = (conv, gi, live, vals)
            if best is not None:
                _, _, live, vals = best
                total = sum(vals)
                cut = len(live) - 1
                acc = 0.0
                if total > 0:
                    for k, v in enumerate(vals):
                        acc += v
                        if acc >= 0.5 * total:
                            cut = k + 1
                            break
                cut = min(max(cut, 1), len(live) - 1)
                left, right = live[:cut], live[cut:]
                children = []
                for off in (right, left):
                    clb, cub = lb.copy(), ub.copy()
                    cub[off] = 0.0
                    children.append((clb, cub))
                return children
        # single-variable branching: most fractional, ties to the lowest index
        cand = None
        for i in self.prog.binaries:
            if lb[i] > 0.5 or ub[i] < 0.5:
                continue
            frac = min(x[i], 1.0 - x[i]) if x is not None else 0.5
            if x is not None and frac <= tol:
                continue
            if cand is None or frac > cand[0] + 1e-12:
                cand = (frac, i)
        if cand is None and x is None:
            free = [i for i in self.prog.binaries if lb[i] < 0.5 < ub[i]]
            if free:
                cand = (0.0, free[0])
        if cand is None:
            return None
        i = cand[1]
        down_lb, down_ub = lb.copy(), ub.copy()
        down_ub[i] = 0.0
        up_lb, up_ub = lb.copy(), ub.copy()
        up_lb[i] = 1.0
        return [(up_lb, up_ub), (down_lb, down_ub)]


def objective_lattice(prog: ConicProgram, ub=None, cap: int = 200_000) -> np.ndarray | None:
    """Every value the objective can take at an integral point, or None.

    Available when the objective is linear in binaries that each sit in one
    one-hot group; each group then contributes one of its members'
    coefficients.  Members with ``ub < 0.5`` are left out.  Returns None past
    ``cap`` distinct values.
    """
    if prog.obj_quad or not prog.obj_lin:
        return None
    owner: dict[int, int] = {}
    for gi, g in enumerate(prog.groups):
        for i in g.members:
            if i in owner:
                return None
            owner[i] = gi
    if any(i not in owner for i in prog.obj_lin):
        return None
    values = np.array([prog.obj_const])
    for gi in sorted({owner[i] for i in prog.obj_lin}):
        opts = np.unique([prog.obj_lin.get(i, 0.0) for i in prog.groups[gi].members if ub is None or ub[i] > 0.5])
        values = np.unique((values[:, None] + opts[None, :]).ravel())
        if values.size > cap:
            return None
    return values


def branch_and_bound(prog: ConicProgram, settings: SolveSettings | None = None) -> SolveReport:
    """Best-bound branch-and-bound; one-hot groups are split as dichotomies.

    Every incumbent is polished by fixing its binaries to the rounded values
    and re-solving, so binaries are exactly 0/1 and presolve pins the
    continuous variables they determine.  When the objective only takes
    values on a finite lattice (see :func:`objective_lattice`), node bounds
    are rounded to the best lattice value they admit.
    """
    st = settings or SolveSettings()
    t0 = time.perf_counter()
    tree = _Tree(prog, st)
    maximize = tree.maximize
    has_lattice = objective_lattice(prog) is not None

    def snap(bound: float, ub) -> float:
        if not has_lattice or not math.isfinite(bound):
            return bound
        lattice = objective_lattice(prog, ub)
        if lattice is None:
            return bound
        slack = st.tau_gap * max(1.0, abs(bound))
        if maximize:
            k = int(np.searchsorted(lattice, bound + slack, side="right"))
            return float(lattice[k - 1]) if k > 0 else -math.inf
        k = int(np.searchsorted(lattice, bound - slack, side="left"))
        return float(lattice[k]) if k < lattice.size else math.inf
    lb0 = np.array([v.lb for v in prog.vars])
    ub0 = np.array([v.ub for v in prog.vars])
    msgs: list[str] = []
    seq = itertools.count()
    inc_x, inc_obj = None, (-math.inf if maximize else math.inf)
    nodes = 0
    ipm_iters = 0
    heap: list[_Node] = []
    # depth-first until an incumbent exists, then best-bound over what is left
    stack: list[_Node] = []
    diving = st.dive_nodes > 0
    if tree.propagate(lb0, ub0):
        root_bound = math.inf if maximize else -math.inf
        root = _Node(tree.key(root_bound), next(seq), lb0, ub0, root_bound)
        (stack.append if diving else heap.append)(root)
    else:
        msgs.append("one-hot group infeasible at the root")
    status = None
    failed_bounds: list[float] = []

    def prunable(bound):
        if inc_x is None:
            return False
        if not tree.better(bound, inc_obj):
            return True
        return relative_gap(inc_obj, bound) <= st.tau_gap

    while heap or stack:
        if diving and (inc_x is not None or nodes >= st.dive_nodes or not stack):
            diving = False
            heap.extend(stack)
            stack.clear()
            heapq.heapify(heap)
            continue
        if nodes >= st.node_limit:
            status = STATUS_NODE_LIMIT
            break
        if time.perf_counter() - t0 > st.time_limit:
            status = STATUS_TIME_LIMIT
            break
        if nodes and nodes % 250 == 0 and log.isEnabledFor(logging.DEBUG):
            pending = [n.bound for n in heap] + [n.bound for n in stack]
            top = (max if maximize else min)(pending)
            log.debug("node %d: %d open, best open bound %.10g, incumbent %.10g", nodes, len(pending), top, inc_obj)
        node = stack.pop() if diving else heapq.heappop(heap)
        if prunable(node.bound):
            continue
        nodes += 1
        rel = solve_relaxation(prog, node.lb, node.ub, st.ipm)
        ipm_iters += rel.iterations
        if rel.status in (INFEASIBLE,):
            continue
        if rel.status == UNBOUNDED:
            msgs.append(f"node {nodes}: relaxation unbounded")
            status = STATUS_INFEASIBLE if inc_x is None else None
            break
        x = rel.x if rel.solved else None
        bound = rel.objective if rel.solved else node.bound
        if not rel.solved:
            msgs.append(f"node {nodes}: relaxation {rel.status} ({rel.reason}); branching blind")
        elif tree.better(bound, node.bound) and math.isfinite(node.bound):
            # a child cannot beat its parent; clamp roundoff
            bound = node.bound
        if rel.solved:
            bound = snap(bound, node.ub)
            if bound == (-math.inf if maximize else math.inf):
                continue  # no integral objective value fits under the bound
        if prunable(bound):
            continue
        if x is not None and not tree.fractional(x):
            cand = _polish(prog, x, node, st)
            if cand is not None:
                cx, cobj, iters = cand
                ipm_iters += iters
                if inc_x is None or tree.better(cobj, inc_obj):
                    inc_x, inc_obj = cx, cobj
                    log.debug("node %d: incumbent %.10g (open bound %.10g, %d open)", nodes, cobj, node.bound, len(heap))
                continue
            msgs.append(f"node {nodes}: integral relaxation failed polishing; branching on")
        children = tree.branch(x, node.lb, node.ub)
        if children is None:
            if not rel.solved:
                failed_bounds.append(bound)
            continue
        kids = [
            _Node(tree.key(bound), next(seq), clb, cub, bound, node.depth + 1)
            for clb, cub in children
            if tree.propagate(clb, cub)
        ]
        if diving:
            # the child keeping more of the relaxation's mass is explored first
            if x is not None:
                kids.sort(key=lambda k: float(x[tree.binaries] @ (k.ub[tree.binaries] > 0.5)))
            stack.extend(kids)
        else:
            for k in kids:
                heapq.heappush(heap, k)

    open_bounds = [n.bound for n in heap] + [n.bound for n in stack] + failed_bounds
    if status is None:
        if inc_x is None:
            status = STATUS_INFEASIBLE
            if failed_bounds:
                msgs.append("no incumbent; some leaves failed numerically")
        else:
            status = STATUS_OPTIMAL
    if inc_x is not None:
        candidates = [inc_obj] + open_bounds
        bound = max(candidates) if maximize else min(candidates)
    elif open_bounds:
        bound = max(open_bounds) if maximize else min(open_bounds)
    else:
        bound = math.nan
    if status == STATUS_OPTIMAL and failed_bounds and relative_gap(inc_obj, bound) > st.tau_gap:
        msgs.append("numerical failures leave the gap open")
        status = STATUS_NODE_LIMIT
    gap = relative_gap(inc_obj, bound) if inc_x is not None else math.inf
    if status == STATUS_OPTIMAL:
        gap = min(gap, st.tau_gap)
    return SolveReport(
        status=status,
        x=inc_x,
        objective=inc_obj if inc_x is not None else math.nan,
        bound=bound,
        gap=gap,
        nodes=nodes,
        wall_time=time.perf_counter() - t0,
        ipm_iterations=ipm_iters,
        names=prog.names,
        messages=msgs,
    )


def _polish(prog: ConicProgram, x, node: _Node, st: SolveSettings):
    lb, ub = node.lb.copy(), node.ub.copy()
    for i in prog.binaries:
        v = 1.0 if x[i] >= 0.5 else 0.0
        lb[i] = ub[i] = v
    rel = solve_relaxation(prog, lb, ub, st.ipm)
    if not rel.solved:
        return None
    cx = rel.x.copy()
    for i in prog.binaries:
        cx[i] = lb[i]
    snapped = _snap_determined(prog, cx)
    if not prog.violations(snapped, st.tau_feas):
        cx = snapped
    elif prog.violations(cx, st.tau_feas):
        return None
    return cx, prog.objective(cx), rel.iterations


def _snap_determined(prog: ConicProgram, x):
    """Copy of ``x`` where every variable fixed by an equality row over binaries is recomputed exactly.

    With the binaries integral, rows such as ``H = sum sigma_c s_c`` leave a
    single continuous variable; the solver returns it up to roundoff, and
    this puts it back on the grid value.
    """
    out = x.copy()
    fixed = set(prog.binaries)
    for row in prog.rows:
        if row.sense != "eq":
            continue
        free = [i for i in row.coeffs if i not in fixed]
        if len(free) != 1:
            continue
        (j,) = free
        rest = math.fsum(c * out[i] for i, c in row.coeffs.items() if i != j)
        out[j] = (row.rhs - rest) / row.coeffs[j]
    return out
