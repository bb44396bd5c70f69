"""Primal-dual interior-point method for second-order cone programs.

Homogeneous self-dual embedding with Nesterov-Todd scaling and a Mehrotra
predictor-corrector, in the style of ECOS.  Linear algebra is dense: the
reduced KKT system ``[[G'W^-2 G, A'], [A, 0]]`` is regularised, LU-factored
once per iteration and polished by iterative refinement.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import kernels as K
from .standard import StandardForm

log = logging.getLogger(__name__)

__all__ = ["IPMSettings", "IPMResult", "solve_standard", "OPTIMAL", "INFEASIBLE", "UNBOUNDED",
           "INACCURATE", "FAILED"]

OPTIMAL = "optimal"
INACCURATE = "optimal_inaccurate"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
FAILED = "numerical_error"


@dataclass
class IPMSettings:
    feastol: float = 1e-8
    abstol: float = 1e-8
    reltol: float = 1e-8
    # looser thresholds accepted when progress stalls
    feastol_inacc: float = 1e-6
    abstol_inacc: float = 1e-6
    reltol_inacc: float = 1e-6
    max_iter: int = 100
    ruiz_iters: int = 12
    static_reg: float = 1e-9
    refine_steps: int = 8
    step_fraction: float = 0.99


@dataclass
class IPMResult:
    status: str
    x: np.ndarray | None = None  # standard-form primal
    y: np.ndarray | None = None
    z: np.ndarray | None = None
    s: np.ndarray | None = None
    pobj: float = math.nan
    dobj: float = math.nan
    iterations: int = 0
    pres: float = math.nan
    dres: float = math.nan
    gap: float = math.nan
    info: dict = field(default_factory=dict)


class _Scaled:
    """Ruiz-equilibrated copy of a standard form and the maps back."""

    def __init__(self, sf: StandardForm, iters: int):
        A, G = sf.A.copy(), sf.G.copy()
        n = sf.n
        e = np.ones(n)
        da = np.ones(A.shape[0])
        dg = np.ones(G.shape[0])
        blocks = []
        off = sf.l
        for dim in sf.q:
            blocks.append((off, off + int(dim)))
            off += int(dim)
        for _ in range(iters):
            colmax = np.zeros(n)
            if A.size:
                colmax = np.maximum(colmax, np.abs(A).max(axis=0))
            if G.size:
                colmax = np.maximum(colmax, np.abs(G).max(axis=0))
            colmax[colmax == 0] = 1.0
            fc = 1.0 / np.sqrt(colmax)
            rmax_a = np.abs(A).max(axis=1) if A.size else np.zeros(A.shape[0])
            rmax_a[rmax_a == 0] = 1.0
            fa = 1.0 / np.sqrt(rmax_a)
            rmax_g = np.abs(G).max(axis=1) if G.size else np.zeros(G.shape[0])
            for a, b in blocks:
                rmax_g[a:b] = rmax_g[a:b].max()
            rmax_g[rmax_g == 0] = 1.0
            fg = 1.0 / np.sqrt(rmax_g)
            A = fa[:, None] * A * fc[None, :]
            G = fg[:, None] * G * fc[None, :]
            e *= fc
            da *= fa
            dg *= fg
        self.A, self.G = A, G
        self.e, self.da, self.dg = e, da, dg
        self.b = da * sf.b
        self.h = dg * sf.h
        c = e * sf.c
        self.cscale = max(1.0, float(np.abs(c).max()) if c.size else 1.0)
        self.c = c / self.cscale

    def unscale(self, x, y, z, s):
        return (
            self.e * x,
            self.da * y * self.cscale,
            self.dg * z * self.cscale,
            s / self.dg,
        )


def _inf(v) -> float:
    return float(np.abs(v).max()) if v.size else 0.0


class _KKT:
    """Factorisation of the reduced KKT system at the current scaling."""

    def __init__(self, A, G, scaling, l, q, reg, refine):
        self.A, self.G = A, G
        self.scaling, self.l, self.q = scaling, l, q
        w, eta, wbar = scaling
        self.WiG = K.scale_mat_rows(G, w, eta, wbar, l, q, True) if G.shape[0] else G.copy()
        H = self.WiG.T @ self.WiG
        n, p = A.shape[1], A.shape[0]
        self.n, self.p = n, p
        M = np.zeros((n + p, n + p))
        M[:n, :n] = H
        M[:n, n:] = A.T
        M[n:, :n] = A
        # the primal block needs a relative floor or the shift vanishes in roundoff
        self.reg = reg
        M[np.arange(n), np.arange(n)] += reg + 1e-13 * np.abs(np.diag(H))
        M[n:, n:] -= reg * np.eye(p)
        self.lu = sla.lu_factor(M, check_finite=False)
        self.refine = refine

    def w_inv(self, v):
        w, eta, wbar = self.scaling
        return K.scale_vec(v, w, eta, wbar, self.l, self.q, True)

    def w_mul(self, v):
        w, eta, wbar = self.scaling
        return K.scale_vec(v, w, eta, wbar, self.l, self.q, False)

    def _reduced(self, r1, r2, r3):
        wr3 = self.w_inv(r3)
        rhs = np.concatenate([r1 + self.WiG.T @ wr3, r2])
        sol = sla.lu_solve(self.lu, rhs, check_finite=False)
        dx, dy = sol[: self.n], sol[self.n :]
        dz = self.w_inv(self.WiG @ dx - wr3)
        return dx, dy, dz

    def solve(self, r1, r2, r3):
        """Solve ``[[0, A', G'], [A, 0, 0], [G, 0, -W^2]] [x; y; z] = [r1; r2; r3]``.

        Iterative refinement runs against the unreduced system, which stays
        accurate when the scaling is badly conditioned near the cone boundary.
        """
        dx, dy, dz = self._reduced(r1, r2, r3)
        scale = max(1.0, _inf(r1), _inf(r2), _inf(r3))
        for _ in range(self.refine):
            e1 = r1 - self.A.T @ dy - self.G.T @ dz
            e2 = r2 - self.A @ dx
            e3 = r3 - self.G @ dx + self.w_mul(self.w_mul(dz))
            if max(_inf(e1), _inf(e2), _inf(e3)) <= 1e-14 * scale:
                break
            cx, cy, cz = self._reduced(e1, e2, e3)
            dx, dy, dz = dx + cx, dy + cy, dz + cz
        return dx, dy, dz


def _shift_into_cone(v, l, q):
    margins = K.cone_residuals(v, l, q)
    if margins.size == 0:
        return v
    worst = -float(margins.min())
    if worst < 0:
        return v
    return v + (1.0 + worst) * K.cone_identity(l, q)


def solve_standard(sf: StandardForm, settings: IPMSettings | None = None) -> IPMResult:
    """Solve a standard-form SOCP.  Never raises on numerical trouble; check ``status``."""
    st = settings or IPMSettings()
    l, q = sf.l, sf.q
    m = sf.G.shape[0]
    if m == 0 and sf.A.shape[0] == 0:
        # unconstrained: bounded only if c = 0
        if sf.n == 0 or not np.any(sf.c):
            x = np.zeros(sf.n)
            return IPMResult(OPTIMAL, x, np.zeros(0), np.zeros(0), np.zeros(0), 0.0, 0.0, 0, 0.0, 0.0, 0.0)
        return IPMResult(UNBOUNDED, info={"reason": "no constraints"})
    try:
        with np.errstate(all="ignore"):
            return _hsde(sf, st)
    except (np.linalg.LinAlgError, ValueError, FloatingPointError, ZeroDivisionError) as exc:
        return IPMResult(FAILED, info={"reason": f"linear algebra failure: {exc}"})


def _hsde(sf: StandardForm, st: IPMSettings) -> IPMResult:
    sc = _Scaled(sf, st.ruiz_iters)
    A, G, b, h, c = sc.A, sc.G, sc.b, sc.h, sc.c
    l, q = sf.l, sf.q
    n, p, m = A.shape[1], A.shape[0], G.shape[0]
    degree = l + len(q)
    e = K.cone_identity(l, q)
    ident = (np.ones(l), np.ones(len(q)), np.concatenate([np.eye(1, int(d), 0).ravel() for d in q])
             if len(q) else np.zeros(0))

    kkt = _KKT(A, G, ident, l, q, st.static_reg, st.refine_steps)
    x, y, zp = kkt.solve(np.zeros(n), b, h)
    s = _shift_into_cone(-zp, l, q)
    _, y, z = kkt.solve(-c, np.zeros(p), np.zeros(m))
    z = _shift_into_cone(z, l, q)
    tau, kappa = 1.0, 1.0

    bnorm = max(1.0, _inf(b), _inf(h))
    cnorm = max(1.0, _inf(c))
    best = None
    info = {}
    stall = 0
    for it in range(st.max_iter + 1):
        rx = A.T @ y + G.T @ z + c * tau
        ry = A @ x - b * tau
        rz = G @ x + s - h * tau
        cx, by, hz = float(c @ x), float(b @ y), float(h @ z)
        rt = kappa + cx + by + hz
        sz = float(s @ z)
        mu = (sz + tau * kappa) / (degree + 1)

        pres = max(_inf(ry), _inf(rz)) / tau / bnorm
        dres = _inf(rx) / tau / cnorm
        pobj = cx / tau
        dobj = -(by + hz) / tau
        gap = sz / tau**2
        relgap = gap / max(min(abs(pobj), abs(dobj)), 1e-12) if pobj * dobj > 0 else math.inf

        if pres <= st.feastol and dres <= st.feastol and (gap <= st.abstol or relgap <= st.reltol):
            return _finish(sf, sc, OPTIMAL, x / tau, y / tau, z / tau, s / tau, it, pres, dres, gap)
        # infeasibility certificates
        if by + hz < 0:
            scale = -(by + hz)
            if _inf(A.T @ y + G.T @ z) / scale <= st.feastol * cnorm * 10:
                return IPMResult(INFEASIBLE, iterations=it, info={"certificate": "dual ray"})
        if cx < 0:
            scale = -cx
            if max(_inf(A @ x), _inf(G @ x + s)) / scale <= st.feastol * bnorm * 10:
                return IPMResult(UNBOUNDED, iterations=it, info={"certificate": "primal ray"})
        # remember the best point in case we have to stop early
        merit = max(pres, dres, min(gap, relgap))
        log.debug("it %2d pres %.2e dres %.2e gap %.2e rel %.2e tau %.2e kappa %.2e", it, pres, dres, gap, relgap, tau, kappa)
        if best is None or merit < best[0]:
            best = (merit, x / tau, y / tau, z / tau, s / tau, it, pres, dres, gap, relgap)
            stall = 0
        elif kappa <= tau:
            # a shrinking tau is progress towards a certificate, not a stall
            stall += 1
        if it == st.max_iter or stall > 4:
            break

        w, eta, wbar, lam = K.nt_scaling(s, z, l, q)
        try:
            kkt = _KKT(A, G, (w, eta, wbar), l, q, st.static_reg, st.refine_steps)
        except (np.linalg.LinAlgError, ValueError):
            info["reason"] = "singular KKT system"
            break
        x1, y1, z1 = kkt.solve(-c, b, h)
        den = float(c @ x1 + b @ y1 + h @ z1) - kappa / tau

        def direction(ds_rhs, dk_rhs, beta):
            r3 = -beta * rz - kkt.w_mul(K.jordan_div(lam, ds_rhs, l, q))
            x0, y0, z0 = kkt.solve(-beta * rx, -beta * ry, r3)
            dtau = (-beta * rt - dk_rhs / tau - float(c @ x0 + b @ y0 + h @ z0)) / den
            dx, dy, dz = x0 + dtau * x1, y0 + dtau * y1, z0 + dtau * z1
            ds = kkt.w_mul(K.jordan_div(lam, ds_rhs, l, q) - kkt.w_mul(dz))
            dkappa = (dk_rhs - kappa * dtau) / tau
            return dx, dy, dz, ds, dtau, dkappa

        def steplen(dz, ds, dtau, dkappa):
            alpha = min(K.max_step(s, ds, l, q), K.max_step(z, dz, l, q))
            if dtau < 0:
                alpha = min(alpha, -tau / dtau)
            if dkappa < 0:
                alpha = min(alpha, -kappa / dkappa)
            return alpha

        lamlam = K.jordan_prod(lam, lam, l, q)
        aff = direction(-lamlam, -tau * kappa, 1.0)
        alpha_a = min(1.0, steplen(aff[2], aff[3], aff[4], aff[5]))
        sigma = min(1.0, max(0.0, (1.0 - alpha_a) ** 3))
        corr = K.jordan_prod(kkt.w_inv(aff[3]), kkt.w_mul(aff[2]), l, q)
        ds_rhs = -lamlam - corr + sigma * mu * e
        dk_rhs = -tau * kappa - aff[4] * aff[5] + sigma * mu
        dx, dy, dz, ds, dtau, dkappa = direction(ds_rhs, dk_rhs, 1.0 - sigma)
        alpha = min(1.0, st.step_fraction * steplen(dz, ds, dtau, dkappa))
        if not np.isfinite(alpha) or alpha <= 1e-14:
            info["reason"] = "step length collapsed"
            break
        x = x + alpha * dx
        y = y + alpha * dy
        z = z + alpha * dz
        s = s + alpha * ds
        tau = tau + alpha * dtau
        kappa = kappa + alpha * dkappa
        if not (np.all(np.isfinite(x)) and np.isfinite(tau)):
            info["reason"] = "non-finite iterate"
            break
        # renormalise the embedding to keep magnitudes sane
        norm = max(tau, kappa)
        if norm > 1e6 or norm < 1e-6:
            x, y, z, s = x / norm, y / norm, z / norm, s / norm
            tau, kappa = tau / norm, kappa / norm

    if best is not None:
        merit, bx, byv, bz, bs, it_b, pres, dres, gap, relgap = best
        if pres <= st.feastol_inacc and dres <= st.feastol_inacc and (
            gap <= st.abstol_inacc or relgap <= st.reltol_inacc
        ):
            res = _finish(sf, sc, INACCURATE, bx, byv, bz, bs, it_b, pres, dres, gap)
            res.info.update(info)
            return res
    info.setdefault("reason", "iteration limit")
    return IPMResult(FAILED, iterations=it, info=info)


def _finish(sf, sc, status, x, y, z, s, it, pres, dres, gap):
    xu, yu, zu, su = sc.unscale(x, y, z, s)
    pobj = float(sf.c @ xu)
    dobj = -float(sf.b @ yu + sf.h @ zu)
    return IPMResult(status, xu, yu, zu, su, pobj, dobj, it, pres, dres, gap)
