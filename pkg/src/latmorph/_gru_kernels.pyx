# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled GRU step kernels.

Matrix products go through the BLAS bound by scipy; the gate nonlinearities
and their adjoints run as single fused C loops instead of a dozen numpy
temporaries per step.  Arrays are row-major and contiguous.
"""

import numpy as np
from libc.math cimport exp, expf, tanh, tanhf
from scipy.linalg.cython_blas cimport dgemm, sgemm

ctypedef fused real:
    float
    double


cdef inline void _gemm(bint trans_a, bint trans_b, int m, int n, int k,
                       real alpha, real* a, int lda, real* b, int ldb,
                       real beta, real* c, int ldc) noexcept nogil:
    # row-major C[m, n] = alpha * op(A) @ op(B) + beta * C, via the column-major
    # identity C^T = op(B)^T op(A)^T
    cdef char ta = b'T' if trans_a else b'N'
    cdef char tb = b'T' if trans_b else b'N'
    if real is float:
        sgemm(&tb, &ta, &n, &m, &k, &alpha, b, &ldb, a, &lda, &beta, c, &ldc)
    else:
        dgemm(&tb, &ta, &n, &m, &k, &alpha, b, &ldb, a, &lda, &beta, c, &ldc)


cdef inline real _sig(real x) noexcept nogil:
    cdef real e
    if real is float:
        e = expf(-x if x >= 0 else x)
    else:
        e = exp(-x if x >= 0 else x)
    if x >= 0:
        return 1 / (1 + e)
    return e / (1 + e)


cdef inline real _tanh(real x) noexcept nogil:
    if real is float:
        return tanhf(x)
    return tanh(x)


def _forward(real[:, ::1] x, real[:, ::1] h, real[:, ::1] w_ih, real[:, ::1] w_hh,
             real[::1] b, real[:, ::1] gx, real[:, ::1] gh, real[:, ::1] z,
             real[:, ::1] r, real[:, ::1] n, real[:, ::1] rh, real[:, ::1] out):
    cdef int N = h.shape[0], H = h.shape[1], I = x.shape[1]
    cdef int i, j
    cdef real zz
    with nogil:
        _gemm(False, True, N, 3 * H, I, <real>1, &x[0, 0], I, &w_ih[0, 0], I,
              <real>0, &gx[0, 0], 3 * H)
        _gemm(False, True, N, 2 * H, H, <real>1, &h[0, 0], H, &w_hh[0, 0], H,
              <real>0, &gh[0, 0], 2 * H)
        for i in range(N):
            for j in range(H):
                z[i, j] = _sig(gx[i, j] + b[j] + gh[i, j])
                r[i, j] = _sig(gx[i, H + j] + b[H + j] + gh[i, H + j])
                rh[i, j] = r[i, j] * h[i, j]
        # candidate pre-activation reuses the first H columns of gh
        _gemm(False, True, N, H, H, <real>1, &rh[0, 0], H, &w_hh[2 * H, 0], H,
              <real>0, &gh[0, 0], 2 * H)
        for i in range(N):
            for j in range(H):
                n[i, j] = _tanh(gx[i, 2 * H + j] + b[2 * H + j] + gh[i, j])
                zz = z[i, j]
                out[i, j] = h[i, j] + zz * (n[i, j] - h[i, j])


def _backward(real[:, ::1] dh_new, real[:, ::1] x, real[:, ::1] h, real[:, ::1] w_ih,
              real[:, ::1] w_hh, real[:, ::1] z, real[:, ::1] r, real[:, ::1] n,
              real[:, ::1] rh, real[:, ::1] da, real[:, ::1] drh, real[:, ::1] dx,
              real[:, ::1] dh, real[:, ::1] dw_ih, real[:, ::1] dw_hh, real[::1] db):
    cdef int N = h.shape[0], H = h.shape[1], I = x.shape[1]
    cdef int i, j
    cdef real g, zz, nn, rr
    with nogil:
        for i in range(N):
            for j in range(H):
                g = dh_new[i, j]
                zz = z[i, j]
                nn = n[i, j]
                da[i, j] = g * (nn - h[i, j]) * zz * (1 - zz)
                da[i, 2 * H + j] = g * zz * (1 - nn * nn)
        _gemm(False, False, N, H, H, <real>1, &da[0, 2 * H], 3 * H, &w_hh[2 * H, 0], H,
              <real>0, &drh[0, 0], H)
        for i in range(N):
            for j in range(H):
                rr = r[i, j]
                da[i, H + j] = drh[i, j] * h[i, j] * rr * (1 - rr)
                dh[i, j] = dh_new[i, j] * (1 - z[i, j]) + drh[i, j] * rr
        _gemm(False, False, N, H, 2 * H, <real>1, &da[0, 0], 3 * H, &w_hh[0, 0], H,
              <real>1, &dh[0, 0], H)
        _gemm(False, False, N, I, 3 * H, <real>1, &da[0, 0], 3 * H, &w_ih[0, 0], I,
              <real>0, &dx[0, 0], I)
        _gemm(True, False, 3 * H, I, N, <real>1, &da[0, 0], 3 * H, &x[0, 0], I,
              <real>0, &dw_ih[0, 0], I)
        _gemm(True, False, 2 * H, H, N, <real>1, &da[0, 0], 3 * H, &h[0, 0], H,
              <real>0, &dw_hh[0, 0], H)
        _gemm(True, False, H, H, N, <real>1, &da[0, 2 * H], 3 * H, &rh[0, 0], H,
              <real>0, &dw_hh[2 * H, 0], H)
        for j in range(3 * H):
            db[j] = 0
        for i in range(N):
            for j in range(3 * H):
                db[j] += da[i, j]


def gru_forward(x, h, w_ih, w_hh, b):
    N, H = h.shape
    dt = h.dtype
    x = np.ascontiguousarray(x, dtype=dt)
    w_ih = np.ascontiguousarray(w_ih, dtype=dt)
    w_hh = np.ascontiguousarray(w_hh, dtype=dt)
    b = np.ascontiguousarray(b, dtype=dt)
    gx = np.empty((N, 3 * H), dtype=dt)
    gh = np.empty((N, 2 * H), dtype=dt)
    z = np.empty((N, H), dtype=dt)
    r = np.empty((N, H), dtype=dt)
    n = np.empty((N, H), dtype=dt)
    rh = np.empty((N, H), dtype=dt)
    out = np.empty((N, H), dtype=dt)
    if N:
        _forward(x, h, w_ih, w_hh, b, gx, gh, z, r, n, rh, out)
    return out, (z, r, n, rh)


def gru_backward(dh_new, x, h, w_ih, w_hh, cache):
    z, r, n, rh = cache
    N, H = h.shape
    I = x.shape[1]
    dt = h.dtype
    dh_new = np.ascontiguousarray(dh_new, dtype=dt)
    x = np.ascontiguousarray(x, dtype=dt)
    w_ih = np.ascontiguousarray(w_ih, dtype=dt)
    w_hh = np.ascontiguousarray(w_hh, dtype=dt)
    da = np.empty((N, 3 * H), dtype=dt)
    drh = np.empty((N, H), dtype=dt)
    dx = np.empty((N, I), dtype=dt)
    dh = np.empty((N, H), dtype=dt)
    dw_ih = np.zeros((3 * H, I), dtype=dt)
    dw_hh = np.zeros((3 * H, H), dtype=dt)
    db = np.zeros(3 * H, dtype=dt)
    if N:
        _backward(dh_new, x, h, w_ih, w_hh, z, r, n, rh, da, drh, dx, dh, dw_ih, dw_hh, db)
    return dx, dh, dw_ih, dw_hh, db
