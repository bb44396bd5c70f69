"""Cone kernels: every backend against dense-matrix oracles and against each other."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hydroharvest.conic import kernels
from hydroharvest.conic.kernels import backends, cone_identity, cone_residuals

BACKENDS = backends()


def test_compiled_backend_is_available():
    # the build ships the extension; the fallback exists for environments without a compiler
    assert "cython" in BACKENDS
    assert kernels.BACKEND in BACKENDS


@pytest.fixture(params=sorted(BACKENDS))
def kb(request):
    return BACKENDS[request.param]


def interior(rng, l, q, scale=1.0):
    v = np.empty(l + sum(q))
    v[:l] = rng.uniform(0.1, 2.0, l) * scale
    off = l
    for d in q:
        tail = rng.normal(size=d - 1)
        v[off + 1 : off + d] = tail * scale
        v[off] = (np.linalg.norm(tail) + rng.uniform(0.05, 1.0)) * scale
        off += d
    return v


def layout(rng):
    l = int(rng.integers(0, 5))
    q = [int(d) for d in rng.integers(2, 6, size=rng.integers(0 if l else 1, 4))]
    return l, q


def dense_w(w, eta, wbar, l, q):
    """NT scaling as a dense matrix: diag(w), then per cone eta [[w0, w1'], [w1, I + w1 w1' / (1 + w0)]]."""
    n = l + sum(q)
    W = np.zeros((n, n))
    W[:l, :l] = np.diag(w)
    off = l
    for k, d in enumerate(q):
        wb = wbar[off - l : off - l + d]
        assert wb[0] ** 2 - wb[1:] @ wb[1:] == pytest.approx(1.0, rel=1e-9)
        blk = np.empty((d, d))
        blk[0, 0] = wb[0]
        blk[0, 1:] = blk[1:, 0] = wb[1:]
        blk[1:, 1:] = np.eye(d - 1) + np.outer(wb[1:], wb[1:]) / (1.0 + wb[0])
        W[off : off + d, off : off + d] = eta[k] * blk
        off += d
    return W


def dense_arrow(u, l, q):
    n = l + sum(q)
    L = np.zeros((n, n))
    L[:l, :l] = np.diag(u[:l])
    off = l
    for d in q:
        blk = u[off : off + d]
        A = blk[0] * np.eye(d)
        A[0, 1:] = blk[1:]
        A[1:, 0] = blk[1:]
        L[off : off + d, off : off + d] = A
        off += d
    return L


seeds = st.integers(0, 2**32 - 1)


class TestNTScaling:
    @settings(max_examples=60, deadline=None)
    @given(seeds)
    def test_scaling_identity(self, seed):
        rng = np.random.default_rng(seed)
        l, q = layout(rng)
        s, z = interior(rng, l, q), interior(rng, l, q)
        for kb in BACKENDS.values():
            w, eta, wbar, lam = kb.nt_scaling(s, z, l, q)
            W = dense_w(w, eta, wbar, l, q)
            np.testing.assert_allclose(W, W.T, atol=1e-12)
            assert np.all(np.linalg.eigvalsh(W) > 0)
            np.testing.assert_allclose(W @ z, lam, rtol=1e-8, atol=1e-10)
            np.testing.assert_allclose(np.linalg.solve(W, s), lam, rtol=1e-8, atol=1e-10)

    @settings(max_examples=40, deadline=None)
    @given(seeds)
    def test_scale_vec_and_rows(self, seed):
        rng = np.random.default_rng(seed)
        l, q = layout(rng)
        n = l + sum(q)
        s, z = interior(rng, l, q), interior(rng, l, q)
        v = rng.normal(size=n)
        G = rng.normal(size=(n, 3))
        for kb in BACKENDS.values():
            w, eta, wbar, _ = kb.nt_scaling(s, z, l, q)
            W = dense_w(w, eta, wbar, l, q)
            Winv = np.linalg.inv(W)
            np.testing.assert_allclose(kb.scale_vec(v, w, eta, wbar, l, q), W @ v, rtol=1e-9, atol=1e-10)
            np.testing.assert_allclose(kb.scale_vec(v, w, eta, wbar, l, q, True), Winv @ v, rtol=1e-8, atol=1e-9)
            np.testing.assert_allclose(kb.scale_mat_rows(G, w, eta, wbar, l, q), Winv @ G, rtol=1e-8, atol=1e-9)
            np.testing.assert_allclose(kb.scale_mat_rows(G, w, eta, wbar, l, q, False), W @ G, rtol=1e-9, atol=1e-10)


class TestJordan:
    @settings(max_examples=60, deadline=None)
    @given(seeds)
    def test_product_is_arrow_matrix(self, seed):
        rng = np.random.default_rng(seed)
        l, q = layout(rng)
        u, v = rng.normal(size=l + sum(q)), rng.normal(size=l + sum(q))
        for kb in BACKENDS.values():
            np.testing.assert_allclose(kb.jordan_prod(u, v, l, q), dense_arrow(u, l, q) @ v, atol=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(seeds)
    def test_division_inverts_product(self, seed):
        rng = np.random.default_rng(seed)
        l, q = layout(rng)
        lam = interior(rng, l, q)
        d = rng.normal(size=len(lam))
        for kb in BACKENDS.values():
            u = kb.jordan_div(lam, d, l, q)
            np.testing.assert_allclose(kb.jordan_prod(lam, u, l, q), d, rtol=1e-8, atol=1e-9)

    def test_identity_element(self, kb):
        l, q = 2, [3, 4]
        e = cone_identity(l, q)
        u = np.arange(1.0, 10.0)
        np.testing.assert_allclose(kb.jordan_prod(e, u, l, q), u)


class TestMaxStep:
    @settings(max_examples=60, deadline=None)
    @given(seeds)
    def test_step_reaches_boundary(self, seed):
        rng = np.random.default_rng(seed)
        l, q = layout(rng)
        x = interior(rng, l, q)
        d = rng.normal(size=len(x)) * 3
        for kb in BACKENDS.values():
            a = kb.max_step(x, d, l, q)
            if np.isinf(a):
                # unbounded steps stay inside for any length
                assert cone_residuals(x + 1e6 * d, l, q).min() >= -1e-6 * 1e6
                continue
            assert a > 0
            inside = cone_residuals(x + 0.999 * a * d, l, q)
            assert inside.min() >= -1e-9
            edge = cone_residuals(x + a * d, l, q)
            assert abs(edge.min()) <= 1e-7 * max(1.0, np.abs(x).max(), a * np.abs(d).max())
            beyond = cone_residuals(x + 1.001 * a * d, l, q)
            assert beyond.min() < 0

    def test_unbounded_direction(self, kb):
        x = np.array([1.0, 2.0, 0.0, 0.0])
        d = np.array([1.0, 1.0, 0.5, 0.0])
        assert np.isinf(kb.max_step(x, d, 1, [3]))

    def test_orthant_only(self, kb):
        assert kb.max_step(np.array([1.0, 2.0]), np.array([-1.0, -4.0]), 2, []) == pytest.approx(0.5)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_backends_agree(seed):
    if len(BACKENDS) < 2:
        pytest.skip("only one backend built")
    rng = np.random.default_rng(seed)
    l, q = layout(rng)
    s, z = interior(rng, l, q), interior(rng, l, q)
    d = rng.normal(size=len(s))
    G = rng.normal(size=(len(s), 4))
    py, cy = BACKENDS["python"], BACKENDS["cython"]
    a, b = py.nt_scaling(s, z, l, q), cy.nt_scaling(s, z, l, q)
    for u, v in zip(a, b):
        np.testing.assert_allclose(u, v, rtol=1e-12, atol=1e-14)
    w, eta, wbar, lam = a
    np.testing.assert_allclose(py.scale_vec(d, w, eta, wbar, l, q), cy.scale_vec(d, w, eta, wbar, l, q), rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(
        py.scale_mat_rows(G, w, eta, wbar, l, q), cy.scale_mat_rows(G, w, eta, wbar, l, q), rtol=1e-12, atol=1e-14
    )
    np.testing.assert_allclose(py.jordan_prod(s, d, l, q), cy.jordan_prod(s, d, l, q), rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(py.jordan_div(lam, d, l, q), cy.jordan_div(lam, d, l, q), rtol=1e-12, atol=1e-14)
    assert py.max_step(s, d, l, q) == pytest.approx(cy.max_step(s, d, l, q), rel=1e-12)
