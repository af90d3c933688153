# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled row-wise kernels; same API as ``_pykernels``.

Accumulation is done in double precision for both float32 and float64
inputs.
"""

import numpy as np

cimport cython
from cython cimport floating
from libc.math cimport exp, expf, log, sqrt, INFINITY


cdef inline floating _exp(floating v) noexcept nogil:
    # single-precision exp for float32 rows; sums still accumulate in double
    if floating is float:
        return expf(v)
    else:
        return exp(v)


cdef inline double _row_exp(floating[:, ::1] x, const unsigned char[:, ::1] mask, bint use_mask,
                            floating[:, ::1] out, Py_ssize_t r, double* row_max) noexcept nogil:
    """Write exp(x[r] - max) into out[r] over allowed entries; return their sum (0 if none)."""
    cdef Py_ssize_t c, cols = x.shape[1]
    cdef floating m
    cdef floating v
    cdef double s = 0.0
    cdef bint found = False
    if use_mask:
        for c in range(cols):
            if mask[r, c] and (not found or x[r, c] > m):
                m = x[r, c]
                found = True
        if not found:
            return 0.0
        row_max[0] = m
        for c in range(cols):
            if mask[r, c]:
                v = _exp(x[r, c] - m)
                out[r, c] = v
                s += v
    else:
        m = x[r, 0]
        for c in range(1, cols):
            if x[r, c] > m:
                m = x[r, c]
        row_max[0] = m
        for c in range(cols):
            v = _exp(x[r, c] - m)
            out[r, c] = v
            s += v
    return s


def softmax_forward(floating[:, ::1] x, const unsigned char[:, ::1] mask=None):
    cdef Py_ssize_t rows = x.shape[0], cols = x.shape[1], r, c
    cdef double s, m
    cdef floating inv
    cdef bint use_mask = mask is not None
    dtype = np.float32 if floating is float else np.float64
    out = np.zeros((rows, cols), dtype=dtype)
    cdef floating[:, ::1] y = out
    with nogil:
        for r in range(rows):
            s = _row_exp(x, mask, use_mask, y, r, &m)
            if s == 0.0:
                continue
            inv = <floating>(1.0 / s)
            for c in range(cols):
                y[r, c] = y[r, c] * inv
    return out


def softmax_backward(floating[:, ::1] y, floating[:, ::1] gy):
    cdef Py_ssize_t rows = y.shape[0], cols = y.shape[1], r, c
    cdef double dot
    dtype = np.float32 if floating is float else np.float64
    out = np.empty((rows, cols), dtype=dtype)
    cdef floating[:, ::1] gx = out
    with nogil:
        for r in range(rows):
            dot = 0.0
            for c in range(cols):
                dot += gy[r, c] * y[r, c]
            for c in range(cols):
                gx[r, c] = <floating>(y[r, c] * (gy[r, c] - dot))
    return out


def layernorm_forward(floating[:, ::1] x, floating[::1] gamma, floating[::1] beta, double eps):
    cdef Py_ssize_t rows = x.shape[0], cols = x.shape[1], r, c
    cdef double mean, var, d, rs
    dtype = np.float32 if floating is float else np.float64
    y_arr = np.empty((rows, cols), dtype=dtype)
    xhat_arr = np.empty((rows, cols), dtype=dtype)
    rstd_arr = np.empty(rows, dtype=dtype)
    cdef floating[:, ::1] y = y_arr
    cdef floating[:, ::1] xhat = xhat_arr
    cdef floating[::1] rstd = rstd_arr
    with nogil:
        for r in range(rows):
            mean = 0.0
            for c in range(cols):
                mean += x[r, c]
            mean /= cols
            var = 0.0
            for c in range(cols):
                d = x[r, c] - mean
                var += d * d
            var /= cols
            rs = 1.0 / sqrt(var + eps)
            rstd[r] = <floating>rs
            for c in range(cols):
                d = (x[r, c] - mean) * rs
                xhat[r, c] = <floating>d
                y[r, c] = <floating>(d * gamma[c] + beta[c])
    return y_arr, xhat_arr, rstd_arr


def layernorm_backward(floating[:, ::1] gy, floating[:, ::1] xhat, floating[::1] rstd, floating[::1] gamma):
    cdef Py_ssize_t rows = gy.shape[0], cols = gy.shape[1], r, c
    cdef double m1, m2, g
    dtype = np.float32 if floating is float else np.float64
    gx_arr = np.empty((rows, cols), dtype=dtype)
    acc_gamma = np.zeros(cols, dtype=np.float64)
    acc_beta = np.zeros(cols, dtype=np.float64)
    cdef floating[:, ::1] gx = gx_arr
    cdef double[::1] gg = acc_gamma
    cdef double[::1] gb = acc_beta
    with nogil:
        for r in range(rows):
            m1 = 0.0
            m2 = 0.0
            for c in range(cols):
                g = gy[r, c] * gamma[c]
                m1 += g
                m2 += g * xhat[r, c]
                gg[c] += gy[r, c] * xhat[r, c]
                gb[c] += gy[r, c]
            m1 /= cols
            m2 /= cols
            for c in range(cols):
                g = gy[r, c] * gamma[c]
                gx[r, c] = <floating>(rstd[r] * (g - m1 - xhat[r, c] * m2))
    return gx_arr, acc_gamma.astype(dtype), acc_beta.astype(dtype)


def xent_forward(floating[:, ::1] x, const long long[::1] targets, const unsigned char[:, ::1] mask=None):
    cdef Py_ssize_t rows = x.shape[0], cols = x.shape[1], r, c
    cdef double s, m
    cdef floating inv
    cdef bint use_mask = mask is not None
    dtype = np.float32 if floating is float else np.float64
    loss_arr = np.empty(rows, dtype=dtype)
    probs_arr = np.zeros((rows, cols), dtype=dtype)
    cdef floating[::1] loss = loss_arr
    cdef floating[:, ::1] p = probs_arr
    with nogil:
        for r in range(rows):
            s = _row_exp(x, mask, use_mask, p, r, &m)
            if s == 0.0 or (use_mask and not mask[r, targets[r]]):
                loss[r] = <floating>INFINITY
                if s == 0.0:
                    continue
            else:
                loss[r] = <floating>(log(s) - (x[r, targets[r]] - m))
            inv = <floating>(1.0 / s)
            for c in range(cols):
                p[r, c] = p[r, c] * inv
    return loss_arr, probs_arr


def xent_backward(floating[:, ::1] probs, const long long[::1] targets, floating[::1] row_scale):
    cdef Py_ssize_t rows = probs.shape[0], cols = probs.shape[1], r, c
    dtype = np.float32 if floating is float else np.float64
    out = np.empty((rows, cols), dtype=dtype)
    cdef floating[:, ::1] gx = out
    with nogil:
        for r in range(rows):
            for c in range(cols):
                gx[r, c] = probs[r, c] * row_scale[r]
            gx[r, targets[r]] -= row_scale[r]
    return out
