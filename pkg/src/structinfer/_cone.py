"""Cone projections and a projected-gradient minimizer over convex cones.

The generalized Lorentz cone with protected index set P is

    K_P = {a >= 0 : a_j >= ||a_{P^c}||_2 for every j in P},

which is the ordinary ice-cream cone (intersected with the orthant) when
P = {p}.
"""

import numpy as np

from ._pav import pav_decreasing, project_monotone


def project_lorentz(v, protected):
    """Euclidean projection of `v` onto K_P.

    Exact: the free block is clipped to the orthant and shrunk radially to a
    radius r, the protected entries are lifted to at least r, and r solves a
    one-dimensional piecewise-linear equation.
    """
    v = np.asarray(v, dtype=float)
    mask = np.zeros(v.shape[0], dtype=bool)
    mask[np.asarray(protected, dtype=np.intp)] = True
    x0 = np.maximum(v[~mask], 0.0)
    y0 = v[mask]
    rho = np.sqrt(x0 @ x0)

    # r minimizes (rho - r)_+^2 + sum_j (r - y0_j)_+^2 over r >= 0
    ys = np.sort(y0)
    r = 0.0
    if rho > 0.0 or np.any(ys < 0):
        csum = 0.0
        r = rho
        for k in range(len(ys) + 1):
            if k > 0:
                csum += ys[k - 1]
            cand = (rho + csum) / (1 + k)
            lower = ys[k - 1] if k > 0 else -np.inf
            upper = ys[k] if k < len(ys) else np.inf
            if lower < cand <= upper:
                r = cand
                break
        r = max(min(r, rho), 0.0)

    out = np.empty_like(v)
    out[~mask] = x0 * (r / rho) if rho > 0.0 else 0.0
    out[mask] = np.maximum(y0, r)
    return out


def project_wedge(v):
    """Projection onto the closed monotone cone {a_1 >= ... >= a_p >= 0}."""
    return project_monotone(np.asarray(v, dtype=float))


def project_wedge_slice(v, total=1.0):
    """Exact projection onto {a_1 >= ... >= a_p >= 0, sum(a) = total}.

    PAV commutes with constant shifts, so the answer is max(PAV(v) - nu, 0)
    with nu found by the sort-based simplex threshold.
    """
    w = pav_decreasing(np.asarray(v, dtype=float), np.ones(len(v)))
    # w is already sorted non-increasingly
    css = np.cumsum(w) - total
    k = np.arange(1, w.shape[0] + 1)
    ok = w - css / k > 0
    rho = np.flatnonzero(ok)[-1]
    nu = css[rho] / (rho + 1)
    return np.maximum(w - nu, 0.0)


def project_slice(v, project, total=1.0):
    """Projection onto {a in K : sum(a) = total} for a cone projector.

    Uses the multiplier form a = project(v - nu) where nu solves
    sum(project(v - nu)) = total; the sum is non-increasing in nu.
    """
    from scipy.optimize import brentq

    def excess(nu):
        return project(v - nu).sum() - total

    lo = np.min(v) - total - 1.0
    while excess(lo) < 0:
        lo = 2 * lo - 1.0
    hi = np.max(v) + 1.0
    while excess(hi) > 0:
        hi = 2 * hi + 1.0
    nu = brentq(excess, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return project(v - nu)


def minimize_on_cone(fun, grad, project, a0, tol=1e-9, max_iter=10000, stall_iter=50):
    """Accelerated projected gradient with backtracking and restart.

    `fun` may return ``inf`` outside its domain; backtracking then shrinks
    the step. Stops when the gradient-mapping norm falls below `tol`.

    Returns
    -------
    a : ndarray
        Approximate minimizer.
    value : float
    n_iter : int
    converged : bool
    """
    x = project(np.asarray(a0, dtype=float))
    fx = fun(x)
    y = x.copy()
    t = 1.0
    L = 1.0
    g0 = grad(x)
    gn = np.sqrt(g0 @ g0)
    if gn > 0:
        L = max(gn, 1e-12)
    eps = 4.0 * np.finfo(float).eps
    stall = 0
    for it in range(1, max_iter + 1):
        fy = fun(y)
        if not np.isfinite(fy):
            y = x.copy()
            t = 1.0
            fy = fx
        gy = grad(y)
        while True:
            x_new = project(y - gy / L)
            d = x_new - y
            f_new = fun(x_new)
            if f_new <= fy + gy @ d + 0.5 * L * (d @ d) + 1e-15 * abs(fy):
                break
            L *= 2.0
            if L > 1e300:
                return x, fx, it, False
        gmap = L * np.sqrt(d @ d)
        if fx - f_new <= eps * abs(fx):
            stall += 1
            if stall >= stall_iter:
                if f_new < fx:
                    x, fx = x_new, f_new
                return x, fx, it, True
        else:
            stall = 0
        if f_new > fx:
            # momentum overshoot: restart from the last accepted point
            y = x.copy()
            t = 1.0
            if gmap < tol:
                return x, fx, it, True
            continue
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = x_new + ((t - 1.0) / t_new) * (x_new - x)
        x, fx, t = x_new, f_new, t_new
        if gmap < tol:
            # confirm at the accepted point, not the extrapolated one
            gx = grad(x)
            x_chk = project(x - gx / L)
            if L * np.sqrt((x_chk - x) @ (x_chk - x)) < tol:
                return x, fx, it, True
            y = x.copy()
            t = 1.0
        L *= 0.9
    return x, fx, max_iter, False
