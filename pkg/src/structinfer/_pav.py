"""Compiled pool-adjacent-violators kernels.

All kernels fit *non-increasing* sequences, which is the ordering used by the
wedge cone and by the sorted-l1 prox.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def pav_decreasing(y, w):
    """Weighted least-squares fit of a non-increasing sequence to `y`."""
    n = y.shape[0]
    vals = np.empty(n)
    wts = np.empty(n)
    cnt = np.empty(n, np.int64)
    k = -1
    for i in range(n):
        k += 1
        vals[k] = y[i]
        wts[k] = w[i]
        cnt[k] = 1
        while k > 0 and vals[k - 1] < vals[k]:
            tw = wts[k - 1] + wts[k]
            vals[k - 1] = (wts[k - 1] * vals[k - 1] + wts[k] * vals[k]) / tw
            wts[k - 1] = tw
            cnt[k - 1] += cnt[k]
            k -= 1
    out = np.empty(n)
    pos = 0
    for b in range(k + 1):
        for _ in range(cnt[b]):
            out[pos] = vals[b]
            pos += 1
    return out


@njit(cache=True)
def project_monotone(v):
    """Projection onto {a_1 >= ... >= a_p >= 0}: unit-weight PAV, clipped."""
    n = v.shape[0]
    out = pav_decreasing(v, np.ones(n))
    for i in range(n):
        if out[i] < 0.0:
            out[i] = 0.0
    return out


@njit(cache=True)
def wedge_value(beta):
    """Wedge norm by the block closed form: sum of sqrt(PAV(beta**2))."""
    n = beta.shape[0]
    sq = beta * beta
    fit = pav_decreasing(sq, np.ones(n))
    total = 0.0
    for i in range(n):
        total += np.sqrt(fit[i])
    return total


@njit(cache=True)
def wedge_rows(B):
    out = np.empty(B.shape[0])
    for i in range(B.shape[0]):
        out[i] = wedge_value(B[i])
    return out


@njit(cache=True)
def wedge_cone_point(beta):
    """Minimizing cone variable a for the wedge variational form."""
    n = beta.shape[0]
    return np.sqrt(pav_decreasing(beta * beta, np.ones(n)))


@njit(cache=True)
def wedge_prox(v, t):
    n = v.shape[0]
    shifted = np.sqrt(pav_decreasing(v * v, np.ones(n))) - t
    out = np.empty(n)
    for i in range(n):
        a = shifted[i]
        if a > 0.0:
            out[i] = v[i] * a / (a + t)
        else:
            out[i] = 0.0
    return out


@njit(cache=True)
def slope_prox_sorted(u, lam):
    """Sorted-l1 prox for `u` already sorted in non-increasing order, u >= 0."""
    n = u.shape[0]
    fit = pav_decreasing(u - lam, np.ones(n))
    for i in range(n):
        if fit[i] < 0.0:
            fit[i] = 0.0
    return fit


@njit(cache=True)
def _block_root(m, s, t, lo_i, hi_i):
    # Solve sum_j m_j s_j / (a + t m_j)^2 = |B| for the block [lo_i, hi_i).
    size = hi_i - lo_i
    ms_total = 0.0
    mmin = np.inf
    for j in range(lo_i, hi_i):
        if s[j] > 0.0:
            ms_total += m[j] * s[j]
            if m[j] < mmin:
                mmin = m[j]
    if ms_total == 0.0:
        return -np.inf
    lo = -t * mmin
    hi = np.sqrt(ms_total / size) * 1.000001 + 1e-300
    a = 0.5 * (max(lo, 0.0) + hi)
    if a <= lo:
        a = 0.5 * (lo + hi)
    for _ in range(200):
        g = -float(size)
        dg = 0.0
        for j in range(lo_i, hi_i):
            if s[j] > 0.0:
                d = a + t * m[j]
                g += m[j] * s[j] / (d * d)
                dg -= 2.0 * m[j] * s[j] / (d * d * d)
        if g > 0.0:
            lo = a
        else:
            hi = a
        step = a - g / dg if dg != 0.0 else 0.5 * (lo + hi)
        if not (lo < step < hi):
            step = 0.5 * (lo + hi)
        if abs(step - a) <= 1e-15 * max(1.0, abs(a)):
            a = step
            break
        a = step
    return a


@njit(cache=True)
def group_wedge_prox_cone(m, s, t):
    """Cone variable of the group-wedge prox.

    Minimizes sum_j [t m_j s_j / (2 (a_j + t m_j)) + t a_j / 2] over
    non-increasing a >= 0, where m_j is the group size and s_j the squared
    group norm of the input.
    """
    n = m.shape[0]
    starts = np.empty(n, np.int64)
    ends = np.empty(n, np.int64)
    vals = np.empty(n)
    k = -1
    for i in range(n):
        k += 1
        starts[k] = i
        ends[k] = i + 1
        vals[k] = _block_root(m, s, t, i, i + 1)
        while k > 0 and vals[k - 1] < vals[k]:
            ends[k - 1] = ends[k]
            k -= 1
            vals[k] = _block_root(m, s, t, starts[k], ends[k])
    out = np.zeros(n)
    for b in range(k + 1):
        val = vals[b] if vals[b] > 0.0 else 0.0
        for i in range(starts[b], ends[b]):
            out[i] = val
    return out


@njit(cache=True)
def wedge_slice_project(v, total):
    """Projection onto {a_1 >= ... >= a_p >= 0, sum(a) = total}."""
    n = v.shape[0]
    w = pav_decreasing(v, np.ones(n))
    css = 0.0
    nu = 0.0
    for k in range(n):
        css += w[k]
        cand = (css - total) / (k + 1)
        if w[k] - cand > 0.0:
            nu = cand
    out = np.empty(n)
    for i in range(n):
        d = w[i] - nu
        out[i] = d if d > 0.0 else 0.0
    return out


@njit(cache=True)
def wedge_slice_ascent(c, starts, max_iter):
    """max c^T a over the unit slice of the wedge cone, one run per start row.

    Projected ascent with a step doubling up to 1e3; a run stops after three
    consecutive iterations with relative value change <= 1e-14 and step
    < 1e-11. Returns the best value over all runs.
    """
    n = c.shape[0]
    best = -np.inf
    for r in range(starts.shape[0]):
        a = wedge_slice_project(starts[r], 1.0)
        val = 0.0
        for i in range(n):
            val += c[i] * a[i]
        eta = 1.0
        steady = 0
        y = np.empty(n)
        for _ in range(max_iter):
            for i in range(n):
                y[i] = a[i] + eta * c[i]
            a_new = wedge_slice_project(y, 1.0)
            val_new = 0.0
            step = 0.0
            for i in range(n):
                val_new += c[i] * a_new[i]
                d = abs(a_new[i] - a[i])
                if d > step:
                    step = d
            a = a_new
            if abs(val_new - val) <= 1e-14 * abs(val_new) and step < 1e-11:
                steady += 1
                if steady >= 3:
                    if val_new > val:
                        val = val_new
                    break
            else:
                steady = 0
            val = val_new
            eta = min(2.0 * eta, 1e3)
        if val > best:
            best = val
    return best
