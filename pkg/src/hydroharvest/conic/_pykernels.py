"""Pure-Python cone kernels (numpy).

A cone vector of length ``l + sum(q)`` holds ``l`` nonnegative-orthant
entries followed by one block per second-order cone of size ``q[k]``.  Each
SOC block ``u`` must satisfy ``u[0] >= ||u[1:]||``.

The scaling is the Nesterov-Todd point, packed as ``(w, eta, wbar)``: ``w`` is
the diagonal orthant scaling, ``eta`` one factor per cone and ``wbar`` the
normalised scaling vectors of all cones laid end to end.
"""

from __future__ import annotations

import math

import numpy as np

BACKEND = "python"


def _blocks(l, q):
    off = l
    for dim in q:
        yield off, off + dim
        off += dim


def nt_scaling(s, z, l, q):
    """Return ``(w, eta, wbar, lam)`` with ``lam = W z = W^{-1} s``."""
    s = np.asarray(s, dtype=float)
    z = np.asarray(z, dtype=float)
    w = np.sqrt(s[:l] / z[:l])
    lam = np.empty_like(s)
    lam[:l] = np.sqrt(s[:l] * z[:l])
    eta = np.empty(len(q))
    wbar = np.empty(len(s) - l)
    for k, (a, b) in enumerate(_blocks(l, q)):
        sk, zk = s[a:b], z[a:b]
        sres = _soc_det(sk)
        zres = _soc_det(zk)
        # clamp: points on the boundary from roundoff
        sres = max(sres, 1e-300)
        zres = max(zres, 1e-300)
        snorm, znorm = math.sqrt(sres), math.sqrt(zres)
        sb, zb = sk / snorm, zk / znorm
        gamma = math.sqrt(max((1.0 + sb @ zb) / 2.0, 1e-300))
        wb = sb.copy()
        wb[0] += zb[0]
        wb[1:] -= zb[1:]
        wb /= 2.0 * gamma
        eta[k] = (sres / zres) ** 0.25
        wbar[a - l : b - l] = wb
        lk = _apply_block(zk, eta[k], wb, inverse=False)
        # pin det(lam) = sqrt(det(s) det(z)); roundoff otherwise drifts it to zero
        n1 = math.sqrt(lk[1:] @ lk[1:])
        target = math.sqrt(max(lk[0] * lk[0] - snorm * znorm, 0.0))
        if n1 > 0.0:
            lk[1:] *= target / n1
        lam[a:b] = lk
    return w, eta, wbar, lam


def _soc_det(u):
    # u0^2 - ||u1||^2 without cancellation
    n1 = math.sqrt(u[1:] @ u[1:])
    return (u[0] - n1) * (u[0] + n1)


def _apply_block(v, eta, wb, inverse):
    w0, w1 = wb[0], wb[1:]
    t = w1 @ v[1:]
    out = np.empty_like(v)
    if inverse:
        out[0] = w0 * v[0] - t
        out[1:] = v[1:] + (-v[0] + t / (1.0 + w0)) * w1
        return out / eta
    out[0] = w0 * v[0] + t
    out[1:] = v[1:] + (v[0] + t / (1.0 + w0)) * w1
    return out * eta


def scale_vec(v, w, eta, wbar, l, q, inverse=False):
    """``W v`` or ``W^{-1} v``."""
    v = np.asarray(v, dtype=float)
    out = np.empty_like(v)
    out[:l] = v[:l] / w if inverse else v[:l] * w
    for k, (a, b) in enumerate(_blocks(l, q)):
        out[a:b] = _apply_block(v[a:b], eta[k], wbar[a - l : b - l], inverse)
    return out


def scale_mat_rows(G, w, eta, wbar, l, q, inverse=True):
    """``W^{-1} G`` (or ``W G``) for a dense matrix whose rows follow the cone layout."""
    G = np.asarray(G, dtype=float)
    out = np.empty_like(G)
    out[:l] = G[:l] / w[:, None] if inverse else G[:l] * w[:, None]
    for k, (a, b) in enumerate(_blocks(l, q)):
        blk = G[a:b]
        wb = wbar[a - l : b - l]
        w0, w1 = wb[0], wb[1:]
        t = w1 @ blk[1:]
        res = np.empty_like(blk)
        sign = -1.0 if inverse else 1.0
        res[0] = w0 * blk[0] + sign * t
        res[1:] = blk[1:] + np.outer(w1, sign * blk[0] + t / (1.0 + w0))
        out[a:b] = res / eta[k] if inverse else res * eta[k]
    return out


def jordan_prod(u, v, l, q):
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    out = np.empty_like(u)
    out[:l] = u[:l] * v[:l]
    for a, b in _blocks(l, q):
        out[a] = u[a:b] @ v[a:b]
        out[a + 1 : b] = u[a] * v[a + 1 : b] + v[a] * u[a + 1 : b]
    return out


def jordan_div(lam, d, l, q):
    """Solve ``lam o u = d`` for ``u``."""
    lam = np.asarray(lam, dtype=float)
    d = np.asarray(d, dtype=float)
    out = np.empty_like(d)
    out[:l] = d[:l] / lam[:l]
    for a, b in _blocks(l, q):
        l0, l1 = lam[a], lam[a + 1 : b]
        d0, d1 = d[a], d[a + 1 : b]
        n1 = math.sqrt(l1 @ l1)
        det = (l0 - n1) * (l0 + n1)
        u0 = (l0 * d0 - l1 @ d1) / det
        out[a] = u0
        out[a + 1 : b] = (d1 - u0 * l1) / l0
    return out


def max_step(x, d, l, q):
    """Largest ``alpha >= 0`` with ``x + alpha d`` in the cone (``inf`` if unbounded).

    ``x`` must lie in the interior.
    """
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    alpha = math.inf
    if l:
        neg = d[:l] < 0
        if neg.any():
            alpha = float(np.min(-x[:l][neg] / d[:l][neg]))
    for a, b in _blocks(l, q):
        alpha = min(alpha, _soc_step(x[a:b], d[a:b]))
    return alpha


def _soc_step(x, d):
    qa = d[0] * d[0] - d[1:] @ d[1:]
    qb = 2.0 * (x[0] * d[0] - x[1:] @ d[1:])
    qc = x[0] * x[0] - x[1:] @ x[1:]
    return _first_root(qa, qb, qc, x[0], d[0])


def _first_root(qa, qb, qc, x0, d0):
    # smallest positive root of qa t^2 + qb t + qc, with qc > 0 at t = 0
    best = math.inf
    if d0 < 0:
        best = -x0 / d0
    if qc <= 0:
        return 0.0
    if qa == 0.0:
        if qb < 0:
            best = min(best, -qc / qb)
        return best
    disc = qb * qb - 4.0 * qa * qc
    if disc < 0:
        return best
    sq = math.sqrt(disc)
    # numerically stable pair of roots
    tmp = -0.5 * (qb + math.copysign(sq, qb))
    roots = []
    if tmp != 0.0:
        roots.append(qc / tmp)
    roots.append(tmp / qa)
    pos = [r for r in roots if r > 0]
    if pos:
        best = min(best, min(pos))
    return best


def cone_identity(l, q):
    e = np.zeros(l + int(sum(q)))
    e[:l] = 1.0
    for a, _ in _blocks(l, q):
        e[a] = 1.0
    return e


def cone_residuals(v, l, q):
    """Per-cone margins: ``v_i`` for the orthant, ``v0 - ||v1||`` per SOC block."""
    v = np.asarray(v, dtype=float)
    out = [v[:l]]
    soc = np.array([v[a] - np.linalg.norm(v[a + 1 : b]) for a, b in _blocks(l, q)])
    out.append(soc)
    return np.concatenate(out)
