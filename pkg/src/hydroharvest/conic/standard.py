"""Presolve a :class:`ConicProgram` relaxation into the solver's standard form.

Standard form::

    minimize    c'x
    subject to  A x = b
                G x + s = h,   s in K = R^l_+ x Q^{q_1} x ... x Q^{q_r}

Presolve substitutes fixed variables, turns singleton rows into bounds, merges
opposite inequality pairs into equalities, drops duplicate rows and reports
infeasibility it can prove along the way.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..program import ConicProgram

__all__ = ["StandardForm", "PresolveInfeasible", "BoundPropagator", "to_standard"]


class PresolveInfeasible(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass
class StandardForm:
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    G: np.ndarray
    h: np.ndarray
    l: int
    q: np.ndarray
    free: np.ndarray  # program indices of the standard-form columns
    fixed_x: np.ndarray  # full-length values, nan where the column is free
    obj_sign: float  # +1 for min, -1 for max
    obj_const: float  # constant part of the internal (sign-adjusted) objective

    @property
    def n(self) -> int:
        return self.c.shape[0]

    def expand(self, xr) -> np.ndarray:
        x = self.fixed_x.copy()
        x[self.free] = xr
        return x

    def program_objective(self, xr) -> float:
        """Objective in the program's own sense for a standard-form point."""
        return self.obj_sign * (float(self.c @ xr) + self.obj_const)


class BoundPropagator:
    """Interval propagation of variable bounds through the linear rows.

    Each row ``a.x <= r`` bounds every variable by what the others can
    contribute at their extremes.  Equalities act as two inequalities and
    binary bounds are rounded inward.
    """

    def __init__(self, prog: ConicProgram):
        rows, cols, vals, rhs = [], [], [], []
        k = 0
        for r in prog.rows:
            for sgn in ((1.0, -1.0) if r.sense == "eq" else (1.0,)):
                for i, c in r.coeffs.items():
                    if c != 0:
                        rows.append(k)
                        cols.append(i)
                        vals.append(sgn * c)
                rhs.append(sgn * r.rhs)
                k += 1
        self.m, self.n = k, prog.n
        self.row = np.array(rows, dtype=np.int_)
        self.col = np.array(cols, dtype=np.int_)
        self.val = np.array(vals, dtype=float)
        self.rhs = np.array(rhs, dtype=float)
        self.binary = np.array([v.binary for v in prog.vars], dtype=bool)

    def tighten(self, lb, ub, passes: int = 20, tol: float = 1e-9) -> bool:
        """Tighten ``lb``/``ub`` in place.  False when the box is provably empty."""
        r, c, a = self.row, self.col, self.val
        if a.size == 0:
            return True
        pos = a > 0
        for _ in range(passes):
            with np.errstate(invalid="ignore"):
                low = np.where(pos, a * lb[c], a * ub[c])
            inf = np.isinf(low)
            finite = np.where(inf, 0.0, low)
            n_inf = np.bincount(r, weights=inf, minlength=self.m)
            fin = np.bincount(r, weights=finite, minlength=self.m)
            # minimum activity of the other entries in the row, where finite
            ok = (n_inf[r] - inf) == 0
            if not ok.any():
                return True
            lim = (self.rhs[r] - (fin[r] - finite)) / a
            lim = lim + np.where(pos, 1.0, -1.0) * tol * np.maximum(1.0, np.abs(lim))
            up = np.full(self.n, np.inf)
            dn = np.full(self.n, -np.inf)
            sel = ok & pos
            np.minimum.at(up, c[sel], lim[sel])
            sel = ok & ~pos
            np.maximum.at(dn, c[sel], lim[sel])
            up = np.where(self.binary, np.floor(up + 1e-6), up)
            dn = np.where(self.binary, np.ceil(dn - 1e-6), dn)
            new_ub = np.minimum(ub, up)
            new_lb = np.maximum(lb, dn)
            if np.any(new_lb > new_ub + 1e-7 * np.maximum(1.0, np.abs(new_ub))):
                return False
            new_lb = np.minimum(new_lb, new_ub)
            scale = np.maximum(1.0, np.minimum(np.abs(np.where(np.isfinite(new_ub), new_ub, 0.0)), 1e6))
            moved = (new_ub < ub - 1e-6 * scale) | (new_lb > lb + 1e-6 * scale)
            lb[:], ub[:] = new_lb, new_ub
            if not moved.any():
                break
        return True


def _collapsed(lo: float, hi: float) -> bool:
    return bool(np.isfinite(lo) and np.isfinite(hi) and hi - lo <= 1e-12 * max(1.0, abs(lo)))


def to_standard(
    prog: ConicProgram,
    lb: np.ndarray | None = None,
    ub: np.ndarray | None = None,
    tol: float = 1e-9,
) -> StandardForm:
    """Presolve and convert. Binary variables are relaxed to their bounds.

    ``lb``/``ub`` override the program's bounds (used for branching).

    Raises
    ------
    PresolveInfeasible
        When bounds or rows are provably inconsistent.
    """
    if not prog.is_convex:
        raise ValueError("program has nonconvex parts and cannot be solved directly")
    n = prog.n
    lo = np.array([v.lb for v in prog.vars]) if lb is None else np.array(lb, dtype=float)
    hi = np.array([v.ub for v in prog.vars]) if ub is None else np.array(ub, dtype=float)
    if np.any(lo > hi + tol):
        bad = int(np.argmax(lo - hi))
        raise PresolveInfeasible(f"empty bounds on {prog.vars[bad].name}")

    fixed = np.full(n, np.nan)
    for i in range(n):
        if _collapsed(lo[i], hi[i]):
            fixed[i] = lo[i]

    rows = [(dict(r.coeffs), r.sense, r.rhs, r.tag) for r in prog.rows]
    changed = True
    while changed:
        changed = False
        keep = []
        for coeffs, sense, rhs, tag in rows:
            live = {}
            for i, a in coeffs.items():
                if np.isnan(fixed[i]):
                    live[i] = a
                else:
                    rhs -= a * fixed[i]
            if not live:
                if (sense == "eq" and abs(rhs) > tol) or (sense == "le" and rhs < -tol):
                    raise PresolveInfeasible(f"row {tag} violated by fixed values ({rhs:.3e})")
                changed = True
                continue
            if len(live) == 1:
                (i, a), = live.items()
                val = rhs / a
                if sense == "eq":
                    if val < lo[i] - tol or val > hi[i] + tol:
                        raise PresolveInfeasible(f"row {tag} fixes {prog.vars[i].name} outside its bounds")
                    fixed[i] = min(max(val, lo[i]), hi[i])
                elif a > 0:
                    if val < hi[i]:
                        hi[i] = val
                else:
                    if val > lo[i]:
                        lo[i] = val
                if lo[i] > hi[i] + tol:
                    raise PresolveInfeasible(f"row {tag} empties the bounds of {prog.vars[i].name}")
                if np.isnan(fixed[i]) and _collapsed(lo[i], hi[i]):
                    fixed[i] = lo[i]
                changed = True
                continue
            keep.append((live, sense, rhs, tag))
        rows = keep

    rows = _merge_parallel(rows, tol)

    free = np.flatnonzero(np.isnan(fixed))
    col = {int(i): k for k, i in enumerate(free)}
    nf = len(free)

    c_full = np.zeros(n)
    for i, a in prog.obj_lin.items():
        c_full[i] = a
    sign = 1.0 if prog.sense == "min" else -1.0
    c_full *= sign
    fixed_vals = np.where(np.isnan(fixed), 0.0, fixed)
    obj_const = sign * prog.obj_const + float(c_full @ fixed_vals)
    c = c_full[free]

    eq_rows = [(r[0], r[2]) for r in rows if r[1] == "eq"]
    le_rows = [(r[0], r[2]) for r in rows if r[1] == "le"]
    A = np.zeros((len(eq_rows), nf))
    b = np.zeros(len(eq_rows))
    for k, (coeffs, rhs) in enumerate(eq_rows):
        for i, a in coeffs.items():
            A[k, col[i]] = a
        b[k] = rhs

    g_rows: list[np.ndarray] = []
    h_vals: list[float] = []
    for coeffs, rhs in le_rows:
        g = np.zeros(nf)
        for i, a in coeffs.items():
            g[col[i]] = a
        g_rows.append(g)
        h_vals.append(rhs)
    for i in free:
        if np.isfinite(lo[i]):
            g = np.zeros(nf)
            g[col[i]] = -1.0
            g_rows.append(g)
            h_vals.append(-lo[i])
        if np.isfinite(hi[i]):
            g = np.zeros(nf)
            g[col[i]] = 1.0
            g_rows.append(g)
            h_vals.append(hi[i])
    l = len(g_rows)

    qdims = []
    for cone in prog.cones:
        block_g, block_h = [], []
        for coeffs, const in cone.forms:
            g = np.zeros(nf)
            val = const
            for i, a in coeffs.items():
                if np.isnan(fixed[i]):
                    g[col[i]] -= a
                else:
                    val += a * fixed[i]
            block_g.append(g)
            block_h.append(val)
        if not np.any(block_g):
            u = np.array(block_h)
            if u[0] < np.linalg.norm(u[1:]) - tol:
                raise PresolveInfeasible(f"cone {cone.tag}[{cone.element}] violated by fixed values")
            continue
        g_rows.extend(block_g)
        h_vals.extend(block_h)
        qdims.append(len(block_g))

    G = np.array(g_rows).reshape(len(g_rows), nf)
    h = np.array(h_vals, dtype=float)
    return StandardForm(
        c=c,
        A=A,
        b=b,
        G=G,
        h=h,
        l=l,
        q=np.array(qdims, dtype=np.int_),
        free=free,
        fixed_x=np.where(np.isnan(fixed), np.nan, fixed),
        obj_sign=sign,
        obj_const=obj_const,
    )


def _merge_parallel(rows, tol):
    """Collapse rows with proportional coefficient vectors.

    Two inequalities ``a x <= r1`` and ``-a x <= r2`` with ``r1 = -r2`` become
    an equality; same-direction duplicates keep the tighter right-hand side.
    """
    groups: dict[tuple, list] = {}
    order = []
    for coeffs, sense, rhs, tag in rows:
        items = sorted(coeffs.items())
        scale = max(abs(a) for _, a in items)
        lead = items[0][1]
        sgn = 1.0 if lead > 0 else -1.0
        key = tuple((i, round(sgn * a / scale, 12)) for i, a in items)
        nrhs = rhs / scale
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append((sense, sgn, nrhs, tag))
    out = []
    for key in order:
        entries = groups[key]
        coeffs = dict(key)
        eqs = [(s * r) for sense, s, r, _ in entries if sense == "eq"]
        upper = [r for sense, s, r, _ in entries if sense == "le" and s > 0]  # k.x <= r
        lower = [-r for sense, s, r, _ in entries if sense == "le" and s < 0]  # k.x >= -r
        tag = entries[0][3]
        if eqs:
            val = eqs[0]
            for v in eqs[1:]:
                if abs(v - val) > tol:
                    raise PresolveInfeasible(f"inconsistent parallel equalities ({tag})")
            if (upper and val > min(upper) + tol) or (lower and val < max(lower) - tol):
                raise PresolveInfeasible(f"equality outside parallel inequality ({tag})")
            out.append((coeffs, "eq", val, tag))
            continue
        up = min(upper) if upper else math.inf
        lw = max(lower) if lower else -math.inf
        if lw > up + tol:
            raise PresolveInfeasible(f"opposite parallel inequalities do not overlap ({tag})")
        if upper and lower and up - lw <= tol * max(1.0, abs(up)):
            out.append((coeffs, "eq", 0.5 * (up + lw), tag))
            continue
        if upper:
            out.append((coeffs, "le", up, tag))
        if lower:
            out.append(({i: -a for i, a in coeffs.items()}, "le", -lw, tag))
    return out
