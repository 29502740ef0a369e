# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled convolution/pooling kernels (hot path of toy-model training).

Loop order keeps the innermost dimension contiguous so the C compiler can
vectorize.  Semantics match schoolsweep._kernels._numpy exactly.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def conv3x3_forward(double[:, :, :, ::1] x, double[:, :, :, ::1] w, double[::1] b):
    cdef Py_ssize_t n = x.shape[0], cin = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t cout = w.shape[0]
    out_arr = np.empty((n, cout, h, wd), dtype=np.float64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t ni, co, ci, kh, kw, oh, ow, ih
    cdef double wk
    for ni in range(n):
        for co in range(cout):
            for oh in range(h):
                for ow in range(wd):
                    out[ni, co, oh, ow] = b[co]
            for ci in range(cin):
                for kh in range(3):
                    for oh in range(h):
                        ih = oh + kh - 1
                        if ih < 0 or ih >= h:
                            continue
                        for kw in range(3):
                            wk = w[co, ci, kh, kw]
                            if wk == 0.0:
                                continue
                            # ow + kw - 1 = iw must lie in [0, wd)
                            for ow in range(max(0, 1 - kw), min(wd, wd + 1 - kw)):
                                out[ni, co, oh, ow] += wk * x[ni, ci, ih, ow + kw - 1]
    return out_arr


def conv3x3_backward(double[:, :, :, ::1] x, double[:, :, :, ::1] w, double[:, :, :, ::1] dout):
    cdef Py_ssize_t n = x.shape[0], cin = x.shape[1], h = x.shape[2], wd = x.shape[3]
    cdef Py_ssize_t cout = w.shape[0]
    dx_arr = np.zeros((n, cin, h, wd), dtype=np.float64)
    dw_arr = np.zeros((cout, cin, 3, 3), dtype=np.float64)
    db_arr = np.zeros(cout, dtype=np.float64)
    cdef double[:, :, :, ::1] dx = dx_arr
    cdef double[:, :, :, ::1] dw = dw_arr
    cdef double[::1] db = db_arr
    cdef Py_ssize_t ni, co, ci, kh, kw, oh, ow, ih
    cdef double acc, g, wk
    for ni in range(n):
        for co in range(cout):
            acc = 0.0
            for oh in range(h):
                for ow in range(wd):
                    acc += dout[ni, co, oh, ow]
            db[co] += acc
            for ci in range(cin):
                for kh in range(3):
                    for kw in range(3):
                        acc = 0.0
                        for oh in range(h):
                            ih = oh + kh - 1
                            if ih < 0 or ih >= h:
                                continue
                            for ow in range(max(0, 1 - kw), min(wd, wd + 1 - kw)):
                                acc += dout[ni, co, oh, ow] * x[ni, ci, ih, ow + kw - 1]
                        dw[co, ci, kh, kw] += acc
                        wk = w[co, ci, kh, kw]
                        if wk == 0.0:
                            continue
                        for oh in range(h):
                            ih = oh + kh - 1
                            if ih < 0 or ih >= h:
                                continue
                            for ow in range(max(0, 1 - kw), min(wd, wd + 1 - kw)):
                                dx[ni, ci, ih, ow + kw - 1] += wk * dout[ni, co, oh, ow]
    return dx_arr, dw_arr, db_arr


def maxpool2_forward(double[:, :, :, ::1] x):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    if h % 2 or w % 2:
        raise ValueError(f"maxpool2 needs even spatial dims, got {h}x{w}")
    cdef Py_ssize_t h2 = h // 2, w2 = w // 2
    out_arr = np.empty((n, c, h2, w2), dtype=np.float64)
    idx_arr = np.empty((n, c, h2, w2), dtype=np.int8)
    cdef double[:, :, :, ::1] out = out_arr
    cdef signed char[:, :, :, ::1] idx = idx_arr
    cdef Py_ssize_t ni, ci, i, j, k
    cdef double best, v
    cdef signed char arg
    for ni in range(n):
        for ci in range(c):
            for i in range(h2):
                for j in range(w2):
                    best = x[ni, ci, 2 * i, 2 * j]
                    arg = 0
                    v = x[ni, ci, 2 * i, 2 * j + 1]
                    if v > best:
                        best = v
                        arg = 1
                    v = x[ni, ci, 2 * i + 1, 2 * j]
                    if v > best:
                        best = v
                        arg = 2
                    v = x[ni, ci, 2 * i + 1, 2 * j + 1]
                    if v > best:
                        best = v
                        arg = 3
                    out[ni, ci, i, j] = best
                    idx[ni, ci, i, j] = arg
    return out_arr, idx_arr


def maxpool2_backward(double[:, :, :, ::1] dout, signed char[:, :, :, ::1] idx):
    cdef Py_ssize_t n = dout.shape[0], c = dout.shape[1], h2 = dout.shape[2], w2 = dout.shape[3]
    dx_arr = np.zeros((n, c, h2 * 2, w2 * 2), dtype=np.float64)
    cdef double[:, :, :, ::1] dx = dx_arr
    cdef Py_ssize_t ni, ci, i, j
    cdef signed char a
    for ni in range(n):
        for ci in range(c):
            for i in range(h2):
                for j in range(w2):
                    a = idx[ni, ci, i, j]
                    dx[ni, ci, 2 * i + (a >> 1), 2 * j + (a & 1)] = dout[ni, ci, i, j]
    return dx_arr
