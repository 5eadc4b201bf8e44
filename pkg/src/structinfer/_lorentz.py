"""Compiled kernels for the (generalized) Lorentz norm.

Both the norm and its prox minimize a separable convex function of the cone
variable a over K_P = {a >= 0 : a_j >= ||a_F|| for j in P}, F = P^c. For a
fixed radius r = ||a_F|| each protected coordinate is a clipped scalar
problem, and the free block solves a Euclidean-ball constrained problem
whose multiplier mu is monotone in r. The optimum is the root in mu of

    g'(r(mu)) - 2 mu r(mu) = 0,

with g the protected part; the left side is decreasing in mu, so bisection
finds it to machine precision.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _cubic_root(b, mu):
    """Root a in [0, b] of 2 mu a^3 + a^2 = b^2 (b >= 0, mu > 0)."""
    if b == 0.0:
        return 0.0
    a = min(b, (b * b / (2.0 * mu)) ** (1.0 / 3.0))
    if a == 0.0:
        return 0.0
    # convex increasing in a > 0: Newton from the right decreases monotonically
    for _ in range(200):
        q = 2.0 * mu * a * a * a + a * a - b * b
        dq = 6.0 * mu * a * a + 2.0 * a
        step = q / dq
        a_new = a - step
        if a_new <= 0.0:
            a_new = 0.5 * a
            if a_new == 0.0:
                return 0.0
        # monotone from the right: stall or rebound means rounding level
        if a_new >= a or a - a_new <= 1e-15 * a:
            return min(a, a_new)
        a = a_new
    return a


@njit(cache=True)
def _value_free(b, free, mu):
    """Free-block cone variables and their radius for multiplier mu."""
    n = b.shape[0]
    a = np.zeros(n)
    r2 = 0.0
    for j in range(n):
        if free[j]:
            if mu == 0.0:
                a[j] = b[j]
            else:
                a[j] = _cubic_root(b[j], mu)
            r2 += a[j] * a[j]
    return a, np.sqrt(r2)


@njit(cache=True)
def _phi_value(b, free, mu):
    """Root function of the norm evaluation; decreasing in mu."""
    _, r = _value_free(b, free, mu)
    gp = 0.0
    for j in range(b.shape[0]):
        if not free[j] and b[j] < r:
            gp += 1.0 - (b[j] / r) ** 2
    return gp - 2.0 * mu * r


@njit(cache=True)
def lorentz_value(beta, protected_mask):
    """Lorentz-type norm of `beta` for the protected set given as a mask."""
    n = beta.shape[0]
    scale = np.max(np.abs(beta)) if n else 0.0
    if scale == 0.0:
        return 0.0
    # homogeneous: work at unit scale so squares cannot underflow
    b = np.abs(beta) / scale
    free = ~protected_mask
    rb = 0.0
    minp = np.inf
    for j in range(n):
        if free[j]:
            rb += b[j] * b[j]
        elif b[j] < minp:
            minp = b[j]
    rb = np.sqrt(rb)
    if rb <= minp:
        return scale * b.sum()

    lo = 0.0
    hi = 1.0
    # 2^1100 exceeds any finite multiplier at unit scale
    for _ in range(1100):
        if _phi_value(b, free, hi) <= 0.0:
            break
        lo = hi
        hi *= 2.0
    for _ in range(300):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi or hi - lo <= 1e-15 * hi:
            break
        if _phi_value(b, free, mid) > 0.0:
            lo = mid
        else:
            hi = mid
    a, r = _value_free(b, free, 0.5 * (lo + hi))
    total = 0.0
    for j in range(n):
        if free[j]:
            if a[j] > 0.0:
                total += b[j] * b[j] / a[j] + a[j]
        else:
            x = max(b[j], r)
            if x > 0.0:
                total += b[j] * b[j] / x + x
    return 0.5 * total * scale


@njit(cache=True)
def lorentz_value_rows(B, protected_mask):
    out = np.empty(B.shape[0])
    for i in range(B.shape[0]):
        out[i] = lorentz_value(B[i], protected_mask)
    return out


@njit(cache=True)
def _prox_root(w, t, mu):
    """Root a in [0, w - t] of t/2 (1 - w^2/(a+t)^2) + 2 mu a = 0 (w > t)."""
    hi = w - t
    a = 0.0
    # concave increasing: Newton from the left increases monotonically
    for _ in range(200):
        s = a + t
        f = 0.5 * t * (1.0 - w * w / (s * s)) + 2.0 * mu * a
        df = t * w * w / (s * s * s) + 2.0 * mu
        a_new = a - f / df
        if a_new > hi:
            a_new = hi
        # monotone from the left: stall or rebound means rounding level
        if a_new <= a or a_new - a <= 1e-15 * (a + t):
            return max(a, a_new)
        a = a_new
    return a


@njit(cache=True)
def _prox_free(w, free, t, mu):
    n = w.shape[0]
    a = np.zeros(n)
    r2 = 0.0
    for j in range(n):
        if free[j] and w[j] > t:
            if mu == 0.0:
                a[j] = w[j] - t
            else:
                a[j] = _prox_root(w[j], t, mu)
            r2 += a[j] * a[j]
    return a, np.sqrt(r2)


@njit(cache=True)
def _phi_prox(w, u, free, t, mu):
    """Root function of the prox; decreasing in mu."""
    _, r = _prox_free(w, free, t, mu)
    gp = 0.0
    for j in range(w.shape[0]):
        if not free[j] and u[j] < r:
            gp += 0.5 * t * (1.0 - (w[j] / (r + t)) ** 2)
    return gp - 2.0 * mu * r


@njit(cache=True)
def lorentz_prox(v, t, protected_mask):
    """argmin_b 1/2 ||b - v||^2 + t * Lorentz(b)."""
    n = v.shape[0]
    out = np.zeros(n)
    scale = np.max(np.abs(v)) if n else 0.0
    if scale == 0.0 or t >= np.inf:
        return out
    # prox(s v, s t) = s prox(v, t): solve at unit scale
    w = np.abs(v) / scale
    t = t / scale
    free = ~protected_mask
    u = np.maximum(w - t, 0.0)
    rb = 0.0
    minp = np.inf
    for j in range(n):
        if free[j]:
            rb += u[j] * u[j]
        elif u[j] < minp:
            minp = u[j]
    rb = np.sqrt(rb)

    if rb <= minp:
        a = u
        r = rb
    else:
        # slope of the objective in r at 0+: protected pull minus free push
        g0 = 0.0
        c2 = 0.0
        for j in range(n):
            if free[j]:
                if w[j] > t:
                    cj = 0.5 * t * ((w[j] / t) ** 2 - 1.0)
                    c2 += cj * cj
            elif w[j] <= t:
                g0 += 0.5 * t * (1.0 - (w[j] / t) ** 2)
        if g0 >= np.sqrt(c2):
            a = np.zeros(n)
            r = 0.0
        else:
            lo = 0.0
            hi = 1.0
            for _ in range(1100):
                if _phi_prox(w, u, free, t, hi) <= 0.0:
                    break
                lo = hi
                hi *= 2.0
            for _ in range(300):
                mid = 0.5 * (lo + hi)
                if mid <= lo or mid >= hi or hi - lo <= 1e-15 * hi:
                    break
                if _phi_prox(w, u, free, t, mid) > 0.0:
                    lo = mid
                else:
                    hi = mid
            a, r = _prox_free(w, free, t, 0.5 * (lo + hi))
    for j in range(n):
        aj = a[j] if free[j] else max(u[j], r)
        if aj > 0.0:
            out[j] = v[j] * aj / (aj + t)
    return out
