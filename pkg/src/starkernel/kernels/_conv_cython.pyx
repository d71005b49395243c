# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled grouped convolution (cross-correlation) backend.

Plain nested loops over output positions with implicit zero padding via
bounds checks; single-threaded and bit-deterministic.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def conv2d_forward(x, w, int stride, int padding, int groups):
    xc = np.ascontiguousarray(x, dtype=np.float64)
    wc = np.ascontiguousarray(w, dtype=np.float64)
    cdef double[:, :, :, ::1] xv = xc
    cdef double[:, :, :, ::1] wv = wc
    cdef Py_ssize_t n = xv.shape[0], c = xv.shape[1], h = xv.shape[2], wd = xv.shape[3]
    cdef Py_ssize_t cout = wv.shape[0], cg = wv.shape[1], kh = wv.shape[2], kw = wv.shape[3]
    cdef Py_ssize_t ho = (h + 2 * padding - kh) // stride + 1
    cdef Py_ssize_t wo = (wd + 2 * padding - kw) // stride + 1
    cdef Py_ssize_t og = cout // groups
    out = np.zeros((n, cout, ho, wo), dtype=np.float64)
    cdef double[:, :, :, ::1] ov = out
    cdef Py_ssize_t b, o, g, ci, i, j, k, l, hi, wi
    cdef double acc
    with nogil:
        for b in range(n):
            for o in range(cout):
                g = o // og
                for i in range(ho):
                    for j in range(wo):
                        acc = 0.0
                        for ci in range(cg):
                            for k in range(kh):
                                hi = i * stride + k - padding
                                if hi < 0 or hi >= h:
                                    continue
                                for l in range(kw):
                                    wi = j * stride + l - padding
                                    if wi < 0 or wi >= wd:
                                        continue
                                    acc += xv[b, g * cg + ci, hi, wi] * wv[o, ci, k, l]
                        ov[b, o, i, j] = acc
    return out


def conv2d_grad_input(gy, w, x_shape, int stride, int padding, int groups):
    gyc = np.ascontiguousarray(gy, dtype=np.float64)
    wc = np.ascontiguousarray(w, dtype=np.float64)
    cdef double[:, :, :, ::1] gv = gyc
    cdef double[:, :, :, ::1] wv = wc
    cdef Py_ssize_t n = x_shape[0], c = x_shape[1], h = x_shape[2], wd = x_shape[3]
    cdef Py_ssize_t cout = wv.shape[0], cg = wv.shape[1], kh = wv.shape[2], kw = wv.shape[3]
    cdef Py_ssize_t ho = gv.shape[2], wo = gv.shape[3]
    cdef Py_ssize_t og = cout // groups
    gx = np.zeros((n, c, h, wd), dtype=np.float64)
    cdef double[:, :, :, ::1] xv = gx
    cdef Py_ssize_t b, o, g, ci, i, j, k, l, hi, wi
    cdef double gval
    with nogil:
        for b in range(n):
            for o in range(cout):
                g = o // og
                for i in range(ho):
                    for j in range(wo):
                        gval = gv[b, o, i, j]
                        for ci in range(cg):
                            for k in range(kh):
                                hi = i * stride + k - padding
                                if hi < 0 or hi >= h:
                                    continue
                                for l in range(kw):
                                    wi = j * stride + l - padding
                                    if wi < 0 or wi >= wd:
                                        continue
                                    xv[b, g * cg + ci, hi, wi] += gval * wv[o, ci, k, l]
    return gx


def conv2d_grad_weight(gy, x, w_shape, int stride, int padding, int groups):
    gyc = np.ascontiguousarray(gy, dtype=np.float64)
    xc = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, :, :, ::1] gv = gyc
    cdef double[:, :, :, ::1] xv = xc
    cdef Py_ssize_t n = xv.shape[0], c = xv.shape[1], h = xv.shape[2], wd = xv.shape[3]
    cdef Py_ssize_t cout = w_shape[0], cg = w_shape[1], kh = w_shape[2], kw = w_shape[3]
    cdef Py_ssize_t ho = gv.shape[2], wo = gv.shape[3]
    cdef Py_ssize_t og = cout // groups
    gw = np.zeros((cout, cg, kh, kw), dtype=np.float64)
    cdef double[:, :, :, ::1] wv = gw
    cdef Py_ssize_t b, o, g, ci, i, j, k, l, hi, wi
    cdef double gval
    with nogil:
        for b in range(n):
            for o in range(cout):
                g = o // og
                for i in range(ho):
                    for j in range(wo):
                        gval = gv[b, o, i, j]
                        for ci in range(cg):
                            for k in range(kh):
                                hi = i * stride + k - padding
                                if hi < 0 or hi >= h:
                                    continue
                                for l in range(kw):
                                    wi = j * stride + l - padding
                                    if wi < 0 or wi >= wd:
                                        continue
                                    wv[o, ci, k, l] += gval * xv[b, g * cg + ci, hi, wi]
    return gw
