# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels; see ``_pykernels`` for the reference semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, log1p, INFINITY, NAN

cnp.import_array()

cdef double PROB_CLAMP = 1e-12


cdef inline double _expit(double z) nogil:
    cdef double e
    if z >= 0.0:
        return 1.0 / (1.0 + exp(-z))
    e = exp(z)
    return e / (1.0 + e)


def ray_entry_batch(ox, oy, dir_x, dir_y, ring):
    cdef const double[:] vox = np.ascontiguousarray(ox, dtype=np.float64)
    cdef const double[:] voy = np.ascontiguousarray(oy, dtype=np.float64)
    cdef const double[:] vdx = np.ascontiguousarray(dir_x, dtype=np.float64)
    cdef const double[:] vdy = np.ascontiguousarray(dir_y, dtype=np.float64)
    cdef const double[:, :] vr = np.ascontiguousarray(ring, dtype=np.float64)
    cdef Py_ssize_t n = vox.shape[0]
    cdef Py_ssize_t m = vr.shape[0]
    dist_arr = np.empty(n, dtype=np.float64)
    inside_arr = np.zeros(n, dtype=np.bool_)
    cdef double[:] dist = dist_arr
    cdef cnp.npy_bool[:] inside = inside_arr
    cdef Py_ssize_t i, k, k2
    cdef double px, py, dx, dy, x1, y1, x2, y2, ex, ey, den, wx, wy, t, u, best, xc
    cdef int crossings

    with nogil:
        for i in range(n):
            px = vox[i]
            py = voy[i]
            dx = vdx[i]
            dy = vdy[i]
            best = INFINITY
            crossings = 0
            for k in range(m):
                k2 = k + 1
                if k2 == m:
                    k2 = 0
                x1 = vr[k, 0]
                y1 = vr[k, 1]
                x2 = vr[k2, 0]
                y2 = vr[k2, 1]
                ex = x2 - x1
                ey = y2 - y1
                den = dx * ey - dy * ex
                if den != 0.0:
                    wx = x1 - px
                    wy = y1 - py
                    t = (wx * ey - wy * ex) / den
                    u = (wx * dy - wy * dx) / den
                    if t >= 0.0 and u >= 0.0 and u <= 1.0 and t < best:
                        best = t
                if (y1 > py) != (y2 > py):
                    xc = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
                    if px < xc:
                        crossings += 1
            inside[i] = (crossings % 2 == 1) or best == 0.0
            dist[i] = best if best != INFINITY else NAN
    return dist_arr, inside_arr


def loglik_grad(double a, double b, double c, double d, y, x, bint want_grad=True):
    cdef const double[:] vx = np.ascontiguousarray(x, dtype=np.float64)
    cdef const cnp.int8_t[:] vy = np.ascontiguousarray(y, dtype=np.int8)
    cdef Py_ssize_t n = vx.shape[0]
    cdef Py_ssize_t i
    cdef double lo = PROB_CLAMP
    cdef double hi = 1.0 - PROB_CLAMP
    cdef double ll = 0.0, ga = 0.0, gb = 0.0, gc = 0.0, gd = 0.0
    cdef double z, s, p, w, ds
    cdef long nclamp = 0
    cdef bint clamped

    with nogil:
        for i in range(n):
            z = vx[i] - c
            s = _expit(b * z)
            p = d + (a - d) * s
            clamped = False
            if p < lo:
                p = lo
                clamped = True
            elif p > hi:
                p = hi
                clamped = True
            if clamped:
                nclamp += 1
            if vy[i] == 1:
                ll += log(p)
                w = 1.0 / p
            else:
                ll += log1p(-p)
                w = -1.0 / (1.0 - p)
            if want_grad and not clamped:
                ds = s * (1.0 - s)
                ga += w * s
                gb += w * ds * z
                gc += w * ds
                gd += w * (1.0 - s)
    if not want_grad:
        return ll, None, nclamp
    grad = np.array([ga, (a - d) * gb, -(a - d) * b * gc, gd])
    return ll, grad, nclamp
