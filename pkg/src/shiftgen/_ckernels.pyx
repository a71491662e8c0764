# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: row softmax (forward/backward), layer norm
(forward/backward) and run-length extraction.

Mirrors _kernels_np.py; the dispatcher in kernels.py picks whichever is
available (or forced via SHIFTGEN_PURE_PYTHON=1).
"""

import numpy as np

cimport cython
from libc.math cimport exp, expf, sqrt

ctypedef fused floating:
    float
    double


def softmax2d(floating[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1]
    cdef Py_ssize_t i, j
    cdef double mx, s
    out_np = np.empty((n, d), dtype=np.asarray(x).dtype)
    cdef floating[:, ::1] out = out_np
    for i in range(n):
        mx = x[i, 0]
        for j in range(1, d):
            if x[i, j] > mx:
                mx = x[i, j]
        s = 0.0
        for j in range(d):
            # single-precision exp for float32 inputs: double exp dominates
            # the runtime otherwise
            if floating is float:
                out[i, j] = expf(x[i, j] - <float>mx)
            else:
                out[i, j] = exp(x[i, j] - mx)
            s += out[i, j]
        for j in range(d):
            out[i, j] = <floating>(out[i, j] / s)
    return out_np


def softmax2d_grad(floating[:, ::1] p, floating[:, ::1] g):
    cdef Py_ssize_t n = p.shape[0], d = p.shape[1]
    cdef Py_ssize_t i, j
    cdef double inner
    out_np = np.empty((n, d), dtype=np.asarray(p).dtype)
    cdef floating[:, ::1] out = out_np
    for i in range(n):
        inner = 0.0
        for j in range(d):
            inner += g[i, j] * p[i, j]
        for j in range(d):
            out[i, j] = <floating>(p[i, j] * (g[i, j] - inner))
    return out_np


def layer_norm2d(floating[:, ::1] x, floating[::1] gain, floating[::1] bias,
                 double eps):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1]
    cdef Py_ssize_t i, j
    cdef double mean, var, rs, xv
    dtype = np.asarray(x).dtype
    y_np = np.empty((n, d), dtype=dtype)
    xhat_np = np.empty((n, d), dtype=dtype)
    rstd_np = np.empty(n, dtype=dtype)
    cdef floating[:, ::1] y = y_np
    cdef floating[:, ::1] xhat = xhat_np
    cdef floating[::1] rstd = rstd_np
    for i in range(n):
        mean = 0.0
        for j in range(d):
            mean += x[i, j]
        mean /= d
        var = 0.0
        for j in range(d):
            xv = x[i, j] - mean
            var += xv * xv
        var /= d
        rs = 1.0 / sqrt(var + eps)
        rstd[i] = <floating>rs
        for j in range(d):
            xhat[i, j] = <floating>((x[i, j] - mean) * rs)
            y[i, j] = <floating>(xhat[i, j] * gain[j] + bias[j])
    return y_np, xhat_np, rstd_np


def layer_norm2d_grad(floating[:, ::1] xhat, floating[::1] rstd,
                      floating[::1] gain, floating[:, ::1] g):
    cdef Py_ssize_t n = xhat.shape[0], d = xhat.shape[1]
    cdef Py_ssize_t i, j
    cdef double m1, m2, gx
    dtype = np.asarray(xhat).dtype
    gx_np = np.empty((n, d), dtype=dtype)
    ggain_np = np.zeros(d, dtype=dtype)
    gbias_np = np.zeros(d, dtype=dtype)
    cdef floating[:, ::1] gxv = gx_np
    cdef floating[::1] ggain = ggain_np
    cdef floating[::1] gbias = gbias_np
    for i in range(n):
        m1 = 0.0
        m2 = 0.0
        for j in range(d):
            gx = g[i, j] * gain[j]
            m1 += gx
            m2 += gx * xhat[i, j]
        m1 /= d
        m2 /= d
        for j in range(d):
            gxv[i, j] = <floating>(rstd[i] * (g[i, j] * gain[j] - m1 - xhat[i, j] * m2))
            ggain[j] += g[i, j] * xhat[i, j]
            gbias[j] += g[i, j]
    return gx_np, ggain_np, gbias_np


def find_runs(codes_in, mask_in):
    cdef long[::1] codes = np.ascontiguousarray(codes_in, dtype=np.int64)
    cdef long[::1] mask = np.ascontiguousarray(mask_in, dtype=np.int64)
    cdef Py_ssize_t n = codes.shape[0]
    cdef Py_ssize_t i, m = 0
    out_np = np.empty((n, 3), dtype=np.int64)
    cdef long[:, ::1] out = out_np
    cdef Py_ssize_t start = -1
    cdef long cur = -1
    for i in range(n):
        if mask[i] and codes[i] == cur and start >= 0:
            continue
        if start >= 0:
            out[m, 0] = start
            out[m, 1] = i
            out[m, 2] = cur
            m += 1
            start = -1
            cur = -1
        if mask[i]:
            start = i
            cur = codes[i]
    if start >= 0:
        out[m, 0] = start
        out[m, 1] = n
        out[m, 2] = cur
        m += 1
    return out_np[:m]
