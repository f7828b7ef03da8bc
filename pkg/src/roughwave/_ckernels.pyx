# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, pow

cnp.import_array()


def outer_prefix(a, b, cells):
    cdef const double[:, :, ::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef const double[:, :, ::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef const double[:, :, :, ::1] cv = np.ascontiguousarray(cells, dtype=np.float64)
    cdef Py_ssize_t m = av.shape[0], n = av.shape[1], p = av.shape[2], q = bv.shape[2]
    out = np.zeros((m, n + 1, p, q))
    cdef double[:, :, :, ::1] ov = out
    cdef Py_ssize_t r, k, i, j
    for r in range(m):
        for k in range(n):
            for i in range(p):
                for j in range(q):
                    ov[r, k + 1, i, j] = ov[r, k, i, j] + av[r, k, i] * bv[r, k, j] + cv[r, k, i, j]
    return out


def dyadic_sup(x, t, double alpha):
    cdef const double[:, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[::1] tv = np.ascontiguousarray(t, dtype=np.float64)
    cdef Py_ssize_t m = xv.shape[0], npts = xv.shape[1], d = xv.shape[2]
    best = np.zeros(m)
    cdef double[::1] bv = best
    cdef Py_ssize_t r, h, i, c
    cdef double acc, diff, ratio
    for r in range(m):
        h = 1
        while h < npts:
            for i in range(npts - h):
                acc = 0.0
                for c in range(d):
                    diff = xv[r, i + h, c] - xv[r, i, c]
                    acc += diff * diff
                ratio = sqrt(acc) / pow(tv[i + h] - tv[i], alpha)
                if ratio > bv[r]:
                    bv[r] = ratio
            h *= 2
    return best


def hosking_fgn(gamma, z):
    cdef const double[::1] g = np.ascontiguousarray(gamma, dtype=np.float64)
    cdef const double[:, ::1] zv = np.ascontiguousarray(z, dtype=np.float64)
    cdef Py_ssize_t m = zv.shape[0], n = zv.shape[1]
    out = np.empty((m, n))
    cdef double[:, ::1] ov = out
    cdef double[::1] phi = np.zeros(n)
    cdef double[::1] tmp = np.zeros(n)
    cdef double v = g[0], kappa, acc, sv
    cdef Py_ssize_t k, j, r
    sv = sqrt(v)
    for r in range(m):
        ov[r, 0] = sv * zv[r, 0]
    for k in range(1, n):
        acc = g[k]
        for j in range(1, k):
            acc -= phi[j] * g[k - j]
        kappa = acc / v
        for j in range(1, k):
            tmp[j] = phi[j] - kappa * phi[k - j]
        for j in range(1, k):
            phi[j] = tmp[j]
        phi[k] = kappa
        v *= 1.0 - kappa * kappa
        sv = sqrt(v)
        for r in range(m):
            acc = 0.0
            for j in range(1, k + 1):
                acc += phi[j] * ov[r, k - j]
            ov[r, k] = acc + sv * zv[r, k]
    return out


def linear_recurrence(z0, dG, dcurl, F):
    cdef const double[::1] z0v = np.ascontiguousarray(z0, dtype=np.float64)
    cdef const double[:, :, ::1] gv = np.ascontiguousarray(dG, dtype=np.float64)
    cdef const double[:, :, :, ::1] cv = np.ascontiguousarray(dcurl, dtype=np.float64)
    cdef const double[:, :, :, ::1] fv = np.ascontiguousarray(F, dtype=np.float64)
    cdef Py_ssize_t n = gv.shape[0], K = gv.shape[1], d1 = gv.shape[2], d2 = cv.shape[3]
    out = np.empty((n + 1, d1))
    cdef double[:, ::1] ov = out
    cdef double[:, ::1] zp = np.zeros((K, d2))
    cdef Py_ssize_t i, k, a, l, mm
    cdef double acc
    for a in range(d1):
        ov[0, a] = z0v[a]
    for i in range(n):
        for k in range(K):
            for l in range(d2):
                acc = 0.0
                for mm in range(K):
                    acc += ov[i, mm] * fv[i, mm, k, l]
                zp[k, l] = acc
        for a in range(d1):
            acc = ov[i, a]
            for k in range(K):
                acc += ov[i, k] * gv[i, k, a]
                for l in range(d2):
                    acc += zp[k, l] * cv[i, k, a, l]
            ov[i + 1, a] = acc
    return out
