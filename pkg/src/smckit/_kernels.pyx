# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel core.

Mirrors `_kernels_py` operation for operation.  All reductions are plain
sequential loops, matching the fallback's pinned summation order, so the
two backends return bit-identical results (verified in the test suite).
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def normalize_logw(double[::1] logw):
    # exp/log go through numpy (their SIMD kernels differ from libm by an
    # ulp); the sequential sum and in-place divide are exactly rounded and
    # match the fallback's pinned reduction order bit for bit.
    cdef Py_ssize_t n = logw.shape[0]
    cdef Py_ssize_t i
    cdef double m = logw[0]
    for i in range(1, n):
        if logw[i] > m:
            m = logw[i]
    out = np.exp(np.asarray(logw) - m)
    cdef double[::1] w = out
    cdef double s = 0.0
    for i in range(n):
        s += w[i]
    for i in range(n):
        w[i] /= s
    return out, m + float(np.log(s)) - float(np.log(<double> n))


def ess(double[::1] probs):
    cdef Py_ssize_t n = probs.shape[0]
    cdef Py_ssize_t i
    cdef double s = 0.0
    for i in range(n):
        s += probs[i] * probs[i]
    return 1.0 / s


cdef void _lookup_sorted(double[::1] cumw, double[::1] points,
                         cnp.int64_t[::1] out) noexcept:
    # points ascending; two-pointer walk equivalent to
    # searchsorted(cumw, p, side='right') clamped to the last index.
    cdef Py_ssize_t n = cumw.shape[0]
    cdef Py_ssize_t m = points.shape[0]
    cdef Py_ssize_t i = 0, j
    for j in range(m):
        while i < n - 1 and points[j] >= cumw[i]:
            i += 1
        out[j] = i


def inverse_cdf_lookup(double[::1] cumw, double[::1] points):
    out = np.empty(points.shape[0], dtype=np.int64)
    _lookup_sorted(cumw, points, out)
    return out


def systematic_ids(double[::1] probs, Py_ssize_t n_out, double u0):
    cdef Py_ssize_t n = probs.shape[0]
    cdef Py_ssize_t i
    cumw_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] cumw = cumw_arr
    cdef double acc = 0.0
    for i in range(n):
        acc += probs[i]
        cumw[i] = acc
    points_arr = np.empty(n_out, dtype=np.float64)
    cdef double[::1] points = points_arr
    for i in range(n_out):
        points[i] = ((<double> i) + u0) / (<double> n_out)
    out = np.empty(n_out, dtype=np.int64)
    _lookup_sorted(cumw, points, out)
    return out


def multinomial_ids(double[::1] probs, uniforms):
    cdef Py_ssize_t n = probs.shape[0]
    cdef Py_ssize_t i
    cumw_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] cumw = cumw_arr
    cdef double acc = 0.0
    for i in range(n):
        acc += probs[i]
        cumw[i] = acc
    pts_arr = np.sort(uniforms)
    cdef double[::1] pts = pts_arr
    out = np.empty(pts_arr.shape[0], dtype=np.int64)
    _lookup_sorted(cumw, pts, out)
    return out


def weighted_quantiles(values, double[::1] probs, qs):
    order = np.argsort(values, kind="stable")
    cdef cnp.int64_t[::1] order_v = order.astype(np.int64, copy=False)
    cdef double[::1] vals = np.ascontiguousarray(values, dtype=np.float64)
    cdef double[::1] qv = np.ascontiguousarray(qs, dtype=np.float64)
    cdef Py_ssize_t n = probs.shape[0]
    cdef Py_ssize_t m = qv.shape[0]
    cumw_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] cumw = cumw_arr
    cdef double acc = 0.0
    cdef Py_ssize_t i
    for i in range(n):
        acc += probs[order_v[i]]
        cumw[i] = acc
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] ov = out
    cdef Py_ssize_t lo
    for i in range(m):
        # searchsorted side='left': first index with cumw[idx] >= q
        lo = _bisect_left(cumw, qv[i], n)
        if lo > n - 1:
            lo = n - 1
        ov[i] = vals[order_v[lo]]
    return out


cdef Py_ssize_t _bisect_left(double[::1] a, double x, Py_ssize_t n) noexcept:
    cdef Py_ssize_t lo = 0, hi = n, mid
    while lo < hi:
        mid = (lo + hi) // 2
        if a[mid] < x:
            lo = mid + 1
        else:
            hi = mid
    return lo
