# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for dilated convolution and 2x2 max pooling.

Every function here has a NumPy twin in :mod:`dsnet._fallback` with the same
signature and bitwise-identical results.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def im2col(const double[:, :, :, ::1] x, int kernel, int dilation, int padding):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t oh = h + 2 * padding - dilation * (kernel - 1)
    cdef Py_ssize_t ow = w + 2 * padding - dilation * (kernel - 1)
    if oh <= 0 or ow <= 0:
        raise ValueError(f"kernel footprint exceeds padded input ({h}x{w})")
    out = np.zeros((n, c * kernel * kernel, oh * ow), dtype=np.float64)
    cdef double[:, :, ::1] cols = out
    cdef Py_ssize_t b, ch, ki, kj, oy, ox, iy, ix, row, y0, y1, x0, x1
    for b in range(n):
        for ch in range(c):
            for ki in range(kernel):
                iy = ki * dilation - padding
                # rows of output whose source row lies inside the input
                y0 = 0 if iy >= 0 else -iy
                y1 = oh if h - iy >= oh else h - iy
                for kj in range(kernel):
                    ix = kj * dilation - padding
                    x0 = 0 if ix >= 0 else -ix
                    x1 = ow if w - ix >= ow else w - ix
                    row = (ch * kernel + ki) * kernel + kj
                    for oy in range(y0, y1):
                        for ox in range(x0, x1):
                            cols[b, row, oy * ow + ox] = x[b, ch, oy + iy, ox + ix]
    return out


def col2im(const double[:, :, ::1] cols, tuple shape, int kernel, int dilation, int padding):
    cdef Py_ssize_t n = shape[0], c = shape[1], h = shape[2], w = shape[3]
    cdef Py_ssize_t oh = h + 2 * padding - dilation * (kernel - 1)
    cdef Py_ssize_t ow = w + 2 * padding - dilation * (kernel - 1)
    out = np.zeros((n, c, h, w), dtype=np.float64)
    cdef double[:, :, :, ::1] dx = out
    cdef Py_ssize_t b, ch, ki, kj, oy, ox, iy, ix, row, y0, y1, x0, x1
    # accumulation order matches the fallback: taps outer, pixels inner
    for b in range(n):
        for ch in range(c):
            for ki in range(kernel):
                iy = ki * dilation - padding
                y0 = 0 if iy >= 0 else -iy
                y1 = oh if h - iy >= oh else h - iy
                for kj in range(kernel):
                    ix = kj * dilation - padding
                    x0 = 0 if ix >= 0 else -ix
                    x1 = ow if w - ix >= ow else w - ix
                    row = (ch * kernel + ki) * kernel + kj
                    for oy in range(y0, y1):
                        for ox in range(x0, x1):
                            dx[b, ch, oy + iy, ox + ix] += cols[b, row, oy * ow + ox]
    return out


def maxpool2x2_forward(const double[:, :, :, ::1] x):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t oh = h // 2, ow = w // 2
    out = np.empty((n, c, oh, ow), dtype=np.float64)
    arg = np.empty((n, c, oh, ow), dtype=np.int8)
    cdef double[:, :, :, ::1] o = out
    cdef signed char[:, :, :, ::1] a = arg
    cdef Py_ssize_t b, ch, i, j
    cdef double best, v
    cdef signed char k
    for b in range(n):
        for ch in range(c):
            for i in range(oh):
                for j in range(ow):
                    # strict > keeps the first maximum in row-major scan order
                    best = x[b, ch, 2 * i, 2 * j]
                    k = 0
                    v = x[b, ch, 2 * i, 2 * j + 1]
                    if v > best:
                        best = v
                        k = 1
                    v = x[b, ch, 2 * i + 1, 2 * j]
                    if v > best:
                        best = v
                        k = 2
                    v = x[b, ch, 2 * i + 1, 2 * j + 1]
                    if v > best:
                        best = v
                        k = 3
                    o[b, ch, i, j] = best
                    a[b, ch, i, j] = k
    return out, arg


def maxpool2x2_backward(const double[:, :, :, ::1] grad, const signed char[:, :, :, ::1] arg):
    cdef Py_ssize_t n = grad.shape[0], c = grad.shape[1], oh = grad.shape[2], ow = grad.shape[3]
    out = np.zeros((n, c, 2 * oh, 2 * ow), dtype=np.float64)
    cdef double[:, :, :, ::1] dx = out
    cdef Py_ssize_t b, ch, i, j
    cdef signed char k
    for b in range(n):
        for ch in range(c):
            for i in range(oh):
                for j in range(ow):
                    k = arg[b, ch, i, j]
                    dx[b, ch, 2 * i + (k >> 1), 2 * j + (k & 1)] = grad[b, ch, i, j]
    return out
