# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled cone kernels; same signatures and semantics as ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, copysign, INFINITY

cnp.import_array()

BACKEND = "cython"


cdef inline void _apply_block(const double[:] v, Py_ssize_t a, Py_ssize_t b,
                              double eta, const double[:] wb, Py_ssize_t wa,
                              bint inverse, double[:] out) nogil:
    cdef Py_ssize_t i, n = b - a
    cdef double w0 = wb[wa], t = 0.0, coef, sign = -1.0 if inverse else 1.0
    cdef double scale = 1.0 / eta if inverse else eta
    for i in range(1, n):
        t += wb[wa + i] * v[a + i]
    out[a] = (w0 * v[a] + sign * t) * scale
    coef = sign * v[a] + t / (1.0 + w0)
    for i in range(1, n):
        out[a + i] = (v[a + i] + coef * wb[wa + i]) * scale


def nt_scaling(s_in, z_in, Py_ssize_t l, q_in):
    cdef double[:] s = np.ascontiguousarray(s_in, dtype=float)
    cdef double[:] z = np.ascontiguousarray(z_in, dtype=float)
    cdef long[:] q = np.ascontiguousarray(q_in, dtype=np.int_)
    cdef Py_ssize_t m = s.shape[0], nc = q.shape[0], k, i, a, b, n
    w_arr = np.empty(l)
    lam_arr = np.empty(m)
    eta_arr = np.empty(nc)
    wbar_arr = np.empty(m - l)
    cdef double[:] w = w_arr, lam = lam_arr, eta = eta_arr, wbar = wbar_arr
    cdef double sres, zres, snorm, znorm, dot, gamma, s1, z1
    for i in range(l):
        w[i] = sqrt(s[i] / z[i])
        lam[i] = sqrt(s[i] * z[i])
    a = l
    for k in range(nc):
        n = q[k]
        b = a + n
        s1 = 0.0
        z1 = 0.0
        for i in range(1, n):
            s1 += s[a + i] * s[a + i]
            z1 += z[a + i] * z[a + i]
        s1 = sqrt(s1)
        z1 = sqrt(z1)
        sres = (s[a] - s1) * (s[a] + s1)
        zres = (z[a] - z1) * (z[a] + z1)
        if sres < 1e-300:
            sres = 1e-300
        if zres < 1e-300:
            zres = 1e-300
        snorm = sqrt(sres)
        znorm = sqrt(zres)
        dot = 0.0
        for i in range(n):
            dot += (s[a + i] / snorm) * (z[a + i] / znorm)
        gamma = (1.0 + dot) / 2.0
        if gamma < 1e-300:
            gamma = 1e-300
        gamma = sqrt(gamma)
        wbar[a - l] = (s[a] / snorm + z[a] / znorm) / (2.0 * gamma)
        for i in range(1, n):
            wbar[a - l + i] = (s[a + i] / snorm - z[a + i] / znorm) / (2.0 * gamma)
        eta[k] = sqrt(sqrt(sres / zres))
        _apply_block(z, a, b, eta[k], wbar, a - l, False, lam)
        # pin det(lam) = sqrt(det(s) det(z)); roundoff otherwise drifts it to zero
        s1 = 0.0
        for i in range(1, n):
            s1 += lam[a + i] * lam[a + i]
        s1 = sqrt(s1)
        z1 = lam[a] * lam[a] - snorm * znorm
        z1 = sqrt(z1) if z1 > 0.0 else 0.0
        if s1 > 0.0:
            for i in range(1, n):
                lam[a + i] *= z1 / s1
        a = b
    return w_arr, eta_arr, wbar_arr, lam_arr


def scale_vec(v_in, w_in, eta_in, wbar_in, Py_ssize_t l, q_in, bint inverse=False):
    cdef double[:] v = np.ascontiguousarray(v_in, dtype=float)
    cdef double[:] w = np.ascontiguousarray(w_in, dtype=float)
    cdef double[:] eta = np.ascontiguousarray(eta_in, dtype=float)
    cdef double[:] wbar = np.ascontiguousarray(wbar_in, dtype=float)
    cdef long[:] q = np.ascontiguousarray(q_in, dtype=np.int_)
    cdef Py_ssize_t i, k, a = l
    out_arr = np.empty(v.shape[0])
    cdef double[:] out = out_arr
    for i in range(l):
        out[i] = v[i] / w[i] if inverse else v[i] * w[i]
    for k in range(q.shape[0]):
        _apply_block(v, a, a + q[k], eta[k], wbar, a - l, inverse, out)
        a += q[k]
    return out_arr


def scale_mat_rows(G_in, w_in, eta_in, wbar_in, Py_ssize_t l, q_in, bint inverse=True):
    cdef double[:, ::1] G = np.ascontiguousarray(G_in, dtype=float)
    cdef double[:] w = np.ascontiguousarray(w_in, dtype=float)
    cdef double[:] eta = np.ascontiguousarray(eta_in, dtype=float)
    cdef double[:] wbar = np.ascontiguousarray(wbar_in, dtype=float)
    cdef long[:] q = np.ascontiguousarray(q_in, dtype=np.int_)
    cdef Py_ssize_t m = G.shape[0], ncol = G.shape[1], i, j, k, a = l, n
    out_arr = np.empty((m, ncol))
    cdef double[:, ::1] out = out_arr
    cdef double f, w0, t, coef, scale, sign = -1.0 if inverse else 1.0
    with nogil:
        for i in range(l):
            f = 1.0 / w[i] if inverse else w[i]
            for j in range(ncol):
                out[i, j] = G[i, j] * f
        for k in range(q.shape[0]):
            n = q[k]
            w0 = wbar[a - l]
            scale = 1.0 / eta[k] if inverse else eta[k]
            for j in range(ncol):
                t = 0.0
                for i in range(1, n):
                    t += wbar[a - l + i] * G[a + i, j]
                out[a, j] = (w0 * G[a, j] + sign * t) * scale
                coef = sign * G[a, j] + t / (1.0 + w0)
                for i in range(1, n):
                    out[a + i, j] = (G[a + i, j] + coef * wbar[a - l + i]) * scale
            a += n
    return out_arr


def jordan_prod(u_in, v_in, Py_ssize_t l, q_in):
    cdef double[:] u = np.ascontiguousarray(u_in, dtype=float)
    cdef double[:] v = np.ascontiguousarray(v_in, dtype=float)
    cdef long[:] q = np.ascontiguousarray(q_in, dtype=np.int_)
    cdef Py_ssize_t i, k, a = l, n
    cdef double dot
    out_arr = np.empty(u.shape[0])
    cdef double[:] out = out_arr
    for i in range(l):
        out[i] = u[i] * v[i]
    for k in range(q.shape[0]):
        n = q[k]
        dot = 0.0
        for i in range(n):
            dot += u[a + i] * v[a + i]
        out[a] = dot
        for i in range(1, n):
            out[a + i] = u[a] * v[a + i] + v[a] * u[a + i]
        a += n
    return out_arr


def jordan_div(lam_in, d_in, Py_ssize_t l, q_in):
    cdef double[:] lam = np.ascontiguousarray(lam_in, dtype=float)
    cdef double[:] d = np.ascontiguousarray(d_in, dtype=float)
    cdef long[:] q = np.ascontiguousarray(q_in, dtype=np.int_)
    cdef Py_ssize_t i, k, a = l, n
    cdef double det, u0, l0, dd
    out_arr = np.empty(d.shape[0])
    cdef double[:] out = out_arr
    for i in range(l):
        out[i] = d[i] / lam[i]
    for k in range(q.shape[0]):
        n = q[k]
        l0 = lam[a]
        det = 0.0
        dd = l0 * d[a]
        for i in range(1, n):
            det += lam[a + i] * lam[a + i]
            dd -= lam[a + i] * d[a + i]
        det = sqrt(det)
        det = (l0 - det) * (l0 + det)
        u0 = dd / det
        out[a] = u0
        for i in range(1, n):
            out[a + i] = (d[a + i] - u0 * lam[a + i]) / l0
        a += n
    return out_arr


cdef double _first_root(double qa, double qb, double qc, double x0, double d0) nogil:
    cdef double best = INFINITY, disc, sq, tmp, r
    if d0 < 0:
        best = -x0 / d0
    if qc <= 0:
        return 0.0
    if qa == 0.0:
        if qb < 0 and -qc / qb < best:
            best = -qc / qb
        return best
    disc = qb * qb - 4.0 * qa * qc
    if disc < 0:
        return best
    sq = sqrt(disc)
    tmp = -0.5 * (qb + copysign(sq, qb))
    if tmp != 0.0:
        r = qc / tmp
        if r > 0 and r < best:
            best = r
    r = tmp / qa
    if r > 0 and r < best:
        best = r
    return best


def max_step(x_in, d_in, Py_ssize_t l, q_in):
    cdef double[:] x = np.ascontiguousarray(x_in, dtype=float)
    cdef double[:] d = np.ascontiguousarray(d_in, dtype=float)
    cdef long[:] q = np.ascontiguousarray(q_in, dtype=np.int_)
    cdef Py_ssize_t i, k, a = l, n
    cdef double alpha = INFINITY, r, qa, qb, qc
    for i in range(l):
        if d[i] < 0:
            r = -x[i] / d[i]
            if r < alpha:
                alpha = r
    for k in range(q.shape[0]):
        n = q[k]
        qa = d[a] * d[a]
        qb = x[a] * d[a]
        qc = x[a] * x[a]
        for i in range(1, n):
            qa -= d[a + i] * d[a + i]
            qb -= x[a + i] * d[a + i]
            qc -= x[a + i] * x[a + i]
        r = _first_root(qa, 2.0 * qb, qc, x[a], d[a])
        if r < alpha:
            alpha = r
        a += n
    return alpha
