"""Solver-agnostic mixed-integer conic program container.

Variables are named (``H[n3]``, ``Q[e2]``, ``z[p1,4]``...) and carry bounds and
provenance.  Constraints are sparse linear rows, second-order cones and, for
reference descriptors only, nonconvex quadratic rows.  A second-order cone is
a list of affine forms ``u_k = a_k . x + c_k`` with ``u_0 >= ||u_1..||``.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import MalformedInputError

__all__ = [
    "Var",
    "LinRow",
    "Cone",
    "QuadRow",
    "OneHot",
    "ConicProgram",
    "ProgramViolation",
    "load_program",
]

FORMAT = "hydroharvest-program/1"


@dataclass
class Var:
    name: str
    lb: float = -math.inf
    ub: float = math.inf
    binary: bool = False
    element: str | None = None
    symbol: str | None = None


@dataclass
class LinRow:
    """``sum(coeffs[i] * x[i]) <sense> rhs`` with sense in ``eq``, ``le``."""

    coeffs: dict[int, float]
    sense: str
    rhs: float
    tag: str
    element: str = ""


@dataclass
class Cone:
    """Second-order cone over affine forms ``(coeffs, const)``."""

    forms: list[tuple[dict[int, float], float]]
    tag: str
    element: str = ""


@dataclass
class QuadRow:
    """Reference-only nonconvex row: ``x'Qx + a.x <sense> rhs``."""

    quad: dict[tuple[int, int], float]
    lin: dict[int, float]
    sense: str
    rhs: float
    tag: str
    element: str = ""


@dataclass
class OneHot:
    members: tuple[int, ...]
    tag: str
    element: str = ""


@dataclass(frozen=True)
class ProgramViolation:
    tag: str
    element: str
    residual: float


class ConicProgram:
    """A named-variable MISOCP (plus optional nonconvex reference rows).

    Builders mutate a fresh instance and hand it out; consumers treat it as
    read-only.  ``copy()`` gives an independent instance for extension.
    """

    def __init__(self, name: str = "program", sense: str = "min"):
        if sense not in ("min", "max"):
            raise ValueError("sense must be 'min' or 'max'")
        self.name = name
        self.sense = sense
        self.vars: list[Var] = []
        self.index: dict[str, int] = {}
        self.rows: list[LinRow] = []
        self.cones: list[Cone] = []
        self.quads: list[QuadRow] = []
        self.groups: list[OneHot] = []
        self.obj_lin: dict[int, float] = {}
        self.obj_quad: dict[tuple[int, int], float] = {}
        self.obj_const: float = 0.0
        # reported objective = obj_scale * (internal objective) + obj_offset
        self.obj_scale: float = 1.0
        self.obj_offset: float = 0.0
        self.meta: dict = {}

    # construction ----------------------------------------------------------
    def add_var(self, name, lb=-math.inf, ub=math.inf, binary=False, element=None, symbol=None) -> int:
        if name in self.index:
            raise ValueError(f"duplicate variable {name!r}")
        if binary:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        self.index[name] = len(self.vars)
        self.vars.append(Var(name, float(lb), float(ub), binary, element, symbol))
        return self.index[name]

    def var(self, name: str) -> int:
        try:
            return self.index[name]
        except KeyError:
            raise KeyError(f"program {self.name!r} has no variable {name!r}") from None

    def has_var(self, name: str) -> bool:
        return name in self.index

    def _coeffs(self, terms) -> dict[int, float]:
        out: dict[int, float] = {}
        items = terms.items() if isinstance(terms, Mapping) else terms
        for key, coef in items:
            i = self.var(key) if isinstance(key, str) else int(key)
            out[i] = out.get(i, 0.0) + float(coef)
        return {i: c for i, c in out.items() if c != 0.0}

    def add_row(self, terms, sense: str, rhs: float, tag: str, element: str = "") -> None:
        if sense == "ge":
            terms = {k: -v for k, v in self._coeffs(terms).items()}
            sense, rhs = "le", -rhs
        if sense not in ("eq", "le"):
            raise ValueError(f"bad row sense {sense!r}")
        self.rows.append(LinRow(self._coeffs(terms), sense, float(rhs), tag, element))

    def add_cone(self, forms, tag: str, element: str = "") -> None:
        self.cones.append(Cone([(self._coeffs(t), float(c)) for t, c in forms], tag, element))

    def add_quad(self, quad, lin, sense, rhs, tag, element="") -> None:
        qd = {}
        for (a, b), coef in quad.items():
            ia = self.var(a) if isinstance(a, str) else a
            ib = self.var(b) if isinstance(b, str) else b
            qd[(ia, ib)] = qd.get((ia, ib), 0.0) + float(coef)
        self.quads.append(QuadRow(qd, self._coeffs(lin), sense, float(rhs), tag, element))

    def add_group(self, members: Iterable, tag: str, element: str = "") -> None:
        idx = tuple(self.var(m) if isinstance(m, str) else int(m) for m in members)
        for i in idx:
            if not self.vars[i].binary:
                raise ValueError(f"one-hot member {self.vars[i].name} is not binary")
            for g in self.groups:
                if i in g.members:
                    raise ValueError(f"{self.vars[i].name} already belongs to a one-hot group")
        self.groups.append(OneHot(idx, tag, element))

    def set_objective(self, terms, sense=None, const=0.0, quad=None) -> None:
        if sense is not None:
            if sense not in ("min", "max"):
                raise ValueError("sense must be 'min' or 'max'")
            self.sense = sense
        self.obj_lin = self._coeffs(terms)
        self.obj_const = float(const)
        self.obj_quad = {}
        for (a, b), coef in (quad or {}).items():
            ia = self.var(a) if isinstance(a, str) else a
            ib = self.var(b) if isinstance(b, str) else b
            self.obj_quad[(ia, ib)] = self.obj_quad.get((ia, ib), 0.0) + float(coef)

    def copy(self) -> "ConicProgram":
        return copy.deepcopy(self)

    # queries ---------------------------------------------------------------
    @property
    def n(self) -> int:
        return len(self.vars)

    @property
    def binaries(self) -> list[int]:
        return [i for i, v in enumerate(self.vars) if v.binary]

    @property
    def names(self) -> list[str]:
        return [v.name for v in self.vars]

    @property
    def is_convex(self) -> bool:
        """True when the continuous relaxation is an SOCP the solver accepts."""
        return not self.quads and not self.obj_quad

    def tags(self) -> set[str]:
        return {r.tag for r in self.rows} | {c.tag for c in self.cones} | {q.tag for q in self.quads}

    def counts(self) -> dict:
        by_tag: dict[str, int] = {}
        for item in (*self.rows, *self.cones, *self.quads):
            by_tag[item.tag] = by_tag.get(item.tag, 0) + 1
        return {
            "variables": self.n,
            "binaries": len(self.binaries),
            "rows_eq": sum(1 for r in self.rows if r.sense == "eq"),
            "rows_le": sum(1 for r in self.rows if r.sense == "le"),
            "cones": len(self.cones),
            "cone_dims": sorted(len(c.forms) for c in self.cones),
            "quads": len(self.quads),
            "groups": len(self.groups),
            "by_tag": dict(sorted(by_tag.items())),
        }

    def vector(self, values: Mapping[str, float], default: float = math.nan) -> np.ndarray:
        x = np.full(self.n, default)
        for k, v in values.items():
            x[self.var(k)] = v
        return x

    def values(self, x) -> dict[str, float]:
        return {v.name: float(x[i]) for i, v in enumerate(self.vars)}

    def objective(self, x) -> float:
        """Internal objective value at ``x`` (as optimised)."""
        val = self.obj_const + sum(c * x[i] for i, c in self.obj_lin.items())
        val += sum(c * x[i] * x[j] for (i, j), c in self.obj_quad.items())
        return float(val)

    def reported_objective(self, x) -> float:
        return self.obj_scale * self.objective(x) + self.obj_offset

    def violations(self, x, tol: float = 1e-6, integrality: bool = True) -> list[ProgramViolation]:
        """Every bound, row, cone, quadratic row and integrality breach beyond ``tol``."""
        x = np.asarray(x, dtype=float)
        out = []
        for i, v in enumerate(self.vars):
            if not np.isfinite(x[i]):
                out.append(ProgramViolation("value", v.name, math.nan))
                continue
            if x[i] < v.lb - tol:
                out.append(ProgramViolation("lower_bound", v.name, v.lb - x[i]))
            if x[i] > v.ub + tol:
                out.append(ProgramViolation("upper_bound", v.name, x[i] - v.ub))
            if integrality and v.binary and min(abs(x[i]), abs(1 - x[i])) > tol:
                out.append(ProgramViolation("integrality", v.name, min(abs(x[i]), abs(1 - x[i]))))
        for r in self.rows:
            lhs = math.fsum(c * x[i] for i, c in r.coeffs.items())
            res = lhs - r.rhs
            if (r.sense == "eq" and abs(res) > tol) or (r.sense == "le" and res > tol):
                out.append(ProgramViolation(r.tag, r.element, res))
        for c in self.cones:
            u = [const + math.fsum(a * x[i] for i, a in t.items()) for t, const in c.forms]
            res = math.hypot(*u[1:]) - u[0]
            if res > tol:
                out.append(ProgramViolation(c.tag, c.element, res))
        for q in self.quads:
            val = sum(co * x[i] * x[j] for (i, j), co in q.quad.items())
            val += sum(co * x[i] for i, co in q.lin.items()) - q.rhs
            if (q.sense == "eq" and abs(val) > tol) or (q.sense == "le" and val > tol):
                out.append(ProgramViolation(q.tag, q.element, val))
        return out

    # serialisation -----------------------------------------------------------
    def to_dict(self) -> dict:
        def terms(d):
            return [[self.vars[i].name, c] for i, c in sorted(d.items())]

        return {
            "format": FORMAT,
            "name": self.name,
            "sense": self.sense,
            "variables": [
                {
                    "name": v.name,
                    "lb": _enc(v.lb),
                    "ub": _enc(v.ub),
                    "binary": v.binary,
                    "element": v.element,
                    "symbol": v.symbol,
                }
                for v in self.vars
            ],
            "rows": [
                {"tag": r.tag, "element": r.element, "sense": r.sense, "rhs": r.rhs, "terms": terms(r.coeffs)}
                for r in self.rows
            ],
            "cones": [
                {
                    "tag": c.tag,
                    "element": c.element,
                    "forms": [{"terms": terms(t), "const": k} for t, k in c.forms],
                }
                for c in self.cones
            ],
            "quads": [
                {
                    "tag": q.tag,
                    "element": q.element,
                    "sense": q.sense,
                    "rhs": q.rhs,
                    "quad": [[self.vars[i].name, self.vars[j].name, c] for (i, j), c in sorted(q.quad.items())],
                    "lin": terms(q.lin),
                }
                for q in self.quads
            ],
            "groups": [
                {"tag": g.tag, "element": g.element, "members": [self.vars[i].name for i in g.members]}
                for g in self.groups
            ],
            "objective": {
                "terms": terms(self.obj_lin),
                "quad": [[self.vars[i].name, self.vars[j].name, c] for (i, j), c in sorted(self.obj_quad.items())],
                "const": self.obj_const,
                "scale": self.obj_scale,
                "offset": self.obj_offset,
            },
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ConicProgram":
        if not isinstance(data, Mapping) or data.get("format") != FORMAT:
            raise MalformedInputError(f"not a program dump (expected format {FORMAT!r})")
        try:
            prog = cls(data["name"], data["sense"])
            for v in data["variables"]:
                prog.add_var(v["name"], _dec(v["lb"]), _dec(v["ub"]), v["binary"], v.get("element"), v.get("symbol"))
            for r in data["rows"]:
                prog.rows.append(
                    LinRow(prog._coeffs(r["terms"]), r["sense"], float(r["rhs"]), r["tag"], r["element"])
                )
            for c in data["cones"]:
                prog.add_cone([(f["terms"], f["const"]) for f in c["forms"]], c["tag"], c["element"])
            for q in data["quads"]:
                prog.add_quad({(a, b): co for a, b, co in q["quad"]}, q["lin"], q["sense"], q["rhs"], q["tag"],
                              q["element"])
            for g in data["groups"]:
                prog.add_group(g["members"], g["tag"], g["element"])
            obj = data["objective"]
            prog.set_objective(obj["terms"], const=obj["const"], quad={(a, b): c for a, b, c in obj["quad"]})
            prog.obj_scale = float(obj.get("scale", 1.0))
            prog.obj_offset = float(obj.get("offset", 0.0))
            prog.meta = dict(data.get("meta", {}))
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedInputError(f"malformed program dump: {exc!r}") from None
        return prog

    def dump(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=False)
            fh.write("\n")


def _enc(v: float):
    # JSON has no infinity literal
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def _dec(v) -> float:
    return float(v)


def load_program(path: str | Path) -> ConicProgram:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise MalformedInputError(f"program file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise MalformedInputError(f"program file {path} is not valid JSON: {exc}") from None
    return ConicProgram.from_dict(data)
