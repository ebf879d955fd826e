# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled simplex inner kernels (eta file transforms and dual ratio test)."""
import numpy as np
cimport numpy as cnp

cnp.import_array()

DEF AT_LOWER = 1
DEF AT_UPPER = 2


def ftran_etas(double[::1] x, Py_ssize_t n_eta, const long[::1] start, const int[::1] idx,
               const double[::1] val, const long[::1] rows, const double[::1] pivs):
    cdef Py_ssize_t e, p, r
    cdef double t
    for e in range(n_eta):
        r = rows[e]
        t = x[r] / pivs[e]
        if t != 0.0:
            for p in range(start[e], start[e + 1]):
                x[idx[p]] -= val[p] * t
        x[r] = t


def btran_etas(double[::1] y, Py_ssize_t n_eta, const long[::1] start, const int[::1] idx,
               const double[::1] val, const long[::1] rows, const double[::1] pivs):
    cdef Py_ssize_t e, p, r
    cdef double s
    for e in range(n_eta - 1, -1, -1):
        r = rows[e]
        s = 0.0
        for p in range(start[e], start[e + 1]):
            s += val[p] * y[idx[p]]
        y[r] = y[r] - (s - y[r]) / pivs[e]


def dual_ratio_test(const double[::1] alpha, const double[::1] d, const signed char[::1] state,
                    const double[::1] lb, const double[::1] ub, double sgn, double slope0,
                    double piv_tol, double dual_tol, bint bland):
    cdef Py_ssize_t n = alpha.shape[0], j, i, nc = 0, k
    cdef double at, dj
    cdef cnp.ndarray[cnp.int64_t, ndim=1] js_buf = np.empty(n, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] a_buf = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dt_buf = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] r_buf = np.empty(n)
    for j in range(n):
        at = sgn * alpha[j]
        if state[j] == AT_LOWER and at > piv_tol:
            dj = d[j]
        elif state[j] == AT_UPPER and at < -piv_tol:
            dj = -d[j]
        else:
            continue
        if dj < 0.0:
            dj = 0.0
        js_buf[nc] = j
        a_buf[nc] = alpha[j] if alpha[j] > 0 else -alpha[j]
        dt_buf[nc] = dj
        r_buf[nc] = dj / a_buf[nc]
        nc += 1
    empty = np.zeros(0, dtype=np.int64)
    if nc == 0:
        return -1, empty
    order = np.lexsort((js_buf[:nc], r_buf[:nc]))
    cdef cnp.int64_t[::1] js = js_buf[:nc][order]
    cdef double[::1] a = a_buf[:nc][order]
    cdef double[::1] dt = dt_buf[:nc][order]
    cdef double[::1] ratio = r_buf[:nc][order]
    cdef cnp.int64_t q
    if bland:
        q = js[0]
        for i in range(nc):
            if ratio[i] > ratio[0]:
                break
            if js[i] < q:
                q = js[i]
        return int(q), empty

    cdef double slope = slope0
    k = nc
    for i in range(nc):
        slope -= a[i] * (ub[js[i]] - lb[js[i]])
        if slope <= 1e-9 * (1.0 + slope0):
            k = i
            break
    if k == nc:
        return -1, np.asarray(js).copy()
    cdef double bound = np.inf, h, best_a = -1.0
    for i in range(k, nc):
        h = (dt[i] + dual_tol) / a[i]
        if h < bound:
            bound = h
    q = -1
    for i in range(k, nc):
        if ratio[i] <= bound and a[i] > best_a:
            best_a = a[i]
            q = js[i]
    return int(q), np.asarray(js[:k]).copy()
