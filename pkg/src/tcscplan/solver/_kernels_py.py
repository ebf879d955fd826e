"""Pure-Python/numpy versions of the simplex inner kernels.

Same contract as ``_kernels.pyx``. Summation order differs (numpy uses
pairwise sums), so the two backends agree to rounding, not bit for bit.
"""
import numpy as np

AT_LOWER, AT_UPPER, FIXED = 1, 2, 3


def ftran_etas(x, n_eta, start, idx, val, rows, pivs):
    """Apply eta transforms ``E_1^-1 ... E_n^-1`` to ``x`` in place."""
    for e in range(n_eta):
        r = rows[e]
        t = x[r] / pivs[e]
        if t != 0.0:
            lo, hi = start[e], start[e + 1]
            x[idx[lo:hi]] -= val[lo:hi] * t
        x[r] = t


def btran_etas(y, n_eta, start, idx, val, rows, pivs):
    """Apply eta transforms to a row vector in reverse order, in place."""
    for e in range(n_eta - 1, -1, -1):
        r = rows[e]
        lo, hi = start[e], start[e + 1]
        s = val[lo:hi] @ y[idx[lo:hi]]
        y[r] = y[r] - (s - y[r]) / pivs[e]


def dual_ratio_test(alpha, d, state, lb, ub, sgn, slope0, piv_tol, dual_tol, bland):
    """Bound-flipping dual ratio test with a Harris pass.

    Returns ``(q, flips)``: the entering index (``-1`` when the row cannot
    be repaired) and the indices that pass their breakpoint and flip to
    the opposite bound.
    """
    at = sgn * alpha
    cand = ((state == AT_LOWER) & (at > piv_tol)) | ((state == AT_UPPER) & (at < -piv_tol))
    js = np.flatnonzero(cand)
    empty = np.zeros(0, dtype=np.int64)
    if js.size == 0:
        return -1, empty
    a = np.abs(alpha[js])
    dt = np.maximum(np.where(state[js] == AT_LOWER, d[js], -d[js]), 0.0)
    ratio = dt / a
    order = np.lexsort((js, ratio))
    js, a, dt, ratio = js[order], a[order], dt[order], ratio[order]

    if bland:
        return int(js[ratio == ratio[0]].min()), empty

    slope = slope0 - np.cumsum(a * (ub[js] - lb[js]))
    stop = np.flatnonzero(slope <= 1e-9 * (1.0 + slope0))
    if stop.size == 0:
        return -1, js.astype(np.int64)
    k = stop[0]
    bound = ((dt[k:] + dual_tol) / a[k:]).min()
    elig = np.flatnonzero(ratio[k:] <= bound) + k
    q = elig[np.argmax(a[elig])]
    return int(js[q]), js[:k].astype(np.int64)
