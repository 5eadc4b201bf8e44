"""Penalized least-squares and square-root nodewise solvers.

Three problems are solved, all with optimality certificates:

* ``fit_penalized``: ``(1/n) ||Y - X b||^2 + lam * Omega(b)`` by accelerated
  proximal gradient with function-value restart.
* ``fit_sqrt_node``: ``||x_j - X_{-j} g||_2 + lam_J * N(g)`` by concomitant
  alternation over the scale.
* ``fit_multivariate``: ``||X_J - X_{J^c} B||_nuc + lam_J * sum_k N(B_k)`` by
  alternating the variational matrix square root with proximal gradient on B.
"""

import csv
from dataclasses import dataclass, field, fields
from enum import Enum

import numpy as np

from . import norms as _norms
from .errors import DataError, SingularMatrixError
from .norms import NormSpec, as_index_set, complement


class Framework(str, Enum):
    """Column penalty used for nodewise regressions.

    GAUGE uses the gauge of the main norm; OMEGA uses the main norm itself.
    """

    GAUGE = "gauge"
    OMEGA = "omega"

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).lower())
        except ValueError:
            raise DataError(f"unknown framework {name!r}") from None


@dataclass(frozen=True, eq=False)
class Dataset:
    """Design matrix X (n x p) and response Y (length n)."""

    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        X = np.array(self.X, dtype=float, order="C")
        Y = np.array(self.Y, dtype=float).ravel()
        if X.ndim != 2:
            raise DataError("X must be a 2-D array")
        if X.shape[0] < 2:
            raise DataError("need at least two observations")
        if Y.shape[0] != X.shape[0]:
            raise DataError(f"Y has length {Y.shape[0]} but X has {X.shape[0]} rows")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise DataError("data contain non-finite entries")
        X.flags.writeable = False
        Y.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    def with_response(self, Y):
        return Dataset(self.X, Y)

    @classmethod
    def from_csv(cls, path):
        """Read a CSV with header ``y, x1, ..., xp`` (column order free)."""
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = [h.strip() for h in next(reader)]
            except StopIteration:
                raise DataError(f"{path}: empty file") from None
            rows = [r for r in reader if r]
        if "y" not in header:
            raise DataError(f"{path}: missing 'y' column")
        xcols = {}
        for k, h in enumerate(header):
            if h.startswith("x") and h[1:].isdigit():
                xcols[int(h[1:])] = k
        p = len(xcols)
        if p == 0 or sorted(xcols) != list(range(1, p + 1)):
            raise DataError(f"{path}: design columns must be named x1..x{p}")
        try:
            table = np.array([[float(v) for v in r] for r in rows])
        except ValueError as exc:
            raise DataError(f"{path}: {exc}") from None
        if table.ndim != 2 or table.shape[1] != len(header):
            raise DataError(f"{path}: ragged rows")
        order = [xcols[i] for i in range(1, p + 1)]
        return cls(table[:, order], table[:, header.index("y")])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["y"] + [f"x{i + 1}" for i in range(self.p)])
            for yi, xi in zip(self.Y, self.X):
                w.writerow([f"{yi:.17g}"] + [f"{v:.17g}" for v in xi])


@dataclass(frozen=True)
class SolverOptions:
    """Stopping rules shared by all solvers.

    tol
        Relative objective change counted as stagnation.
    patience
        Consecutive stagnant iterations required to stop.
    kkt_tol
        Certificate level below which a fit is reported converged; stagnant
        fits above it are polished for at most `max_polish` more rounds.
    outer_tol
        Relative change of the concomitant scale (or nuclear objective) that
        ends the outer alternation of the nodewise solvers.
    certify
        When false, penalized fits stop on stagnation alone and report a NaN
        certificate; used for inner solves whose caller certifies the result.
    """

    max_iter: int = 50000
    tol: float = 1e-9
    patience: int = 5
    restart: bool = True
    kkt_tol: float = 1e-7
    max_polish: int = 20
    outer_tol: float = 1e-10
    max_outer: int = 500
    certify: bool = True

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise DataError(f"unknown solver options: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True, eq=False)
class PenalizedFit:
    beta_hat: np.ndarray
    lam: float
    objective_trace: np.ndarray
    kkt_gap: float
    iterations: int
    converged: bool
    dual_exact: bool = True
    kkt_kind: str = "kkt"

    @property
    def objective(self):
        return float(self.objective_trace[-1])

    def active_set(self, threshold=1e-10):
        return np.flatnonzero(np.abs(self.beta_hat) > threshold)

    def to_dict(self):
        return {
            "beta_hat": self.beta_hat.tolist(),
            "lambda": self.lam,
            "objective": self.objective,
            "kkt_gap": self.kkt_gap,
            "kkt_kind": self.kkt_kind,
            "dual_exact": self.dual_exact,
            "iterations": self.iterations,
            "converged": self.converged,
        }


@dataclass(frozen=True, eq=False)
class MultivariateFit:
    """Nodewise fit for the target set J.

    Column k of `Gamma` holds the coefficients of X_{J_k} on the columns
    `complement` (implicit zeros on J).
    """

    J: tuple
    Gamma: np.ndarray
    lambda_J: float
    framework: Framework
    nuclear_residual: float
    kkt_gap: float
    converged: bool
    iterations: int
    objective: float
    dual_exact: bool = True
    advisory: str = ""
    complement: tuple = field(default=(), repr=False)

    def residual(self, X):
        J = list(self.J)
        return X[:, J] - X[:, list(self.complement)] @ self.Gamma


class EmbeddedNorm:
    """A norm on R^{p} restricted to the coordinates `cols`.

    Vectors of length ``len(cols)`` are zero-padded to length p. For the
    absolute, monotone norms supported here the prox of the padded vector stays
    zero off `cols` and the dual is unchanged by the restriction.
    """

    def __init__(self, norm, cols):
        self.norm = norm
        self.cols = np.asarray(cols, dtype=np.intp)
        self.p = int(self.cols.size)
        self.dual_is_exact = norm.dual_is_exact

    def _pad(self, x):
        out = np.zeros(self.norm.p)
        out[self.cols] = x
        return out

    def evaluate(self, x):
        return _norms.evaluate(self.norm, self._pad(x))

    def prox(self, v, t):
        return _norms.prox(self.norm, self._pad(v), t)[self.cols]

    def dual(self, z, full_output=False):
        return _norms.dual(self.norm, self._pad(z), full_output=full_output)


def restrict_norm(norm, p, cols):
    """Interpret `norm` as a norm on the coordinates `cols` of R^p.

    A norm of dimension ``len(cols)`` is used as is; a norm of dimension p is
    embedded by zero padding.
    """
    cols = np.asarray(cols, dtype=np.intp)
    if norm.p == cols.size:
        return norm
    if norm.p == p:
        if cols.size == p:
            return norm
        return EmbeddedNorm(norm, cols)
    raise DataError(f"norm dimension {norm.p} fits neither {cols.size} nor {p} coordinates")


def _evaluate(norm, x):
    return norm.evaluate(x)


def _dual(norm, z):
    if isinstance(norm, NormSpec):
        return _norms.dual(norm, z, full_output=True)
    return norm.dual(z, full_output=True)


def lipschitz_gram(A, n_iter=1000, tol=1e-12):
    """Largest eigenvalue of A^T A by power iteration (deterministic start)."""
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 0.0
    small = A if A.shape[0] >= A.shape[1] else A.T
    v = np.random.default_rng(0).standard_normal(small.shape[1])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(n_iter):
        w = small.T @ (small @ v)
        lam_new = float(v @ w)
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0
        v = w / nrm
        if abs(lam_new - lam) <= tol * lam_new:
            lam = lam_new
            break
        lam = lam_new
    # the Rayleigh quotient approaches from below
    return max(lam, float(v @ (small.T @ (small @ v))))


def kkt_certificate(norm, Z, beta):
    """KKT certificate max(N*(Z) - 1, 0) + |Z^T b - N(b)| / (1 + N(b)).

    Returns ``(gap, dual_exact)``.
    """
    dval, exact = _dual(norm, Z)
    nb = _evaluate(norm, beta)
    return max(dval - 1.0, 0.0) + abs(Z @ beta - nb) / (1.0 + nb), exact


def duality_gap(data, norm, lam, beta):
    """Relative primal-dual gap of the penalized least-squares problem.

    Uses the dual point u = (2 r / n) * min(1, lam / N*(2 X^T r / n)) with
    dual objective u^T Y - n ||u||^2 / 4.
    """
    n = data.n
    r = data.Y - data.X @ beta
    primal = (r @ r) / n + lam * _evaluate(norm, beta)
    g = 2.0 * (data.X.T @ r) / n
    dval, exact = _dual(norm, g)
    scale = 1.0 if dval <= lam else lam / dval
    u = (2.0 / n) * r * scale
    dual_obj = u @ data.Y - 0.25 * n * (u @ u)
    return max(primal - dual_obj, 0.0) / max(primal, 1e-300), exact


def _accelerated(objective, step, x0, certificate, opts):
    """Accelerated proximal gradient with function-value restart.

    ``step(y, s)`` returns the proximal-gradient point from `y` with the
    step length divided by `s`; `s` doubles whenever a plain (momentum-free)
    step increases the objective beyond rounding. Stops after `opts.patience`
    consecutive relative changes below the current threshold, then checks
    ``certificate(x)``; failed checks tighten the threshold tenfold.

    Returns ``(x, trace, gap, dual_exact, iterations, converged)``.
    """
    x = x0
    fx = objective(x)
    trace = [fx]
    y = x.copy()
    t = 1.0
    s = 1.0
    stagnant = 0
    polish = 0
    tol_eff = opts.tol
    gap, dual_exact = np.inf, True
    converged = False
    it = 0
    while it < opts.max_iter:
        it += 1
        x_new = step(y, s)
        f_new = objective(x_new)
        plain = t == 1.0
        if f_new > fx:
            if not plain or f_new > fx + 1e-13 * abs(fx):
                if plain:
                    s *= 2.0
                y = x.copy()
                t = 1.0
                continue
        small = abs(fx - f_new) <= tol_eff * max(abs(fx), 1e-300)
        if opts.restart:
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            y = x_new + ((t - 1.0) / t_new) * (x_new - x)
            t = t_new
        else:
            y = x_new
        x, fx = x_new, f_new
        trace.append(min(fx, trace[-1]))
        stagnant = stagnant + 1 if small else 0
        if stagnant >= opts.patience:
            if not opts.certify:
                converged = True
                gap = np.nan
                break
            gap, dual_exact = certificate(x)
            if gap <= opts.kkt_tol:
                converged = True
                break
            # a degenerate certificate (e.g. zero residual) cannot improve
            if not np.isfinite(gap):
                break
            polish += 1
            if polish > opts.max_polish:
                break
            stagnant = 0
            tol_eff = max(0.1 * tol_eff, 1e-16)
            y = x.copy()
            t = 1.0
    if opts.certify and (not np.isfinite(gap) or not converged):
        gap, dual_exact = certificate(x)
        converged = converged or gap <= opts.kkt_tol
    return x, np.asarray(trace), gap, dual_exact, it, converged


def fit_penalized(data, norm, lam, opts=None, *, warm_start=None, lipschitz=None):
    """Minimize ``||Y - X b||^2 / n + lam * norm(b)``.

    Parameters
    ----------
    data : Dataset
    norm : NormSpec or EmbeddedNorm
        Dimension must equal the number of columns of X.
    lam : float
        Positive penalty level on the 1/n loss scale.
    opts : SolverOptions, optional
    warm_start : ndarray, optional
    lipschitz : float, optional
        Precomputed largest eigenvalue of X^T X; computed if omitted.

    Returns
    -------
    PenalizedFit
        Non-convergence is reported through ``converged``, never raised.
    """
    opts = opts or SolverOptions()
    lam = float(lam)
    if not np.isfinite(lam) or lam <= 0:
        raise DataError("lambda must be positive and finite")
    X, Y = data.X, data.Y
    n, p = X.shape
    if norm.p != p:
        raise DataError(f"norm dimension {norm.p} does not match {p} columns")

    exact_dual = norm.dual_is_exact
    if lipschitz is None:
        lipschitz = lipschitz_gram(X)
    L = max(2.0 * lipschitz / n * (1.0 + 1e-6), 1e-300)
    XtY = X.T @ Y

    def objective(b):
        r = Y - X @ b
        return (r @ r) / n + lam * _evaluate(norm, b)

    def step(y, s):
        grad = (2.0 / n) * (X.T @ (X @ y) - XtY)
        return norm.prox(y - grad / (L * s), lam / (L * s))

    def certificate(b):
        if exact_dual:
            r = Y - X @ b
            Z = 2.0 * (X.T @ r) / (n * lam)
            return kkt_certificate(norm, Z, b)
        return duality_gap(data, norm, lam, b)

    x0 = np.zeros(p)
    if warm_start is not None:
        w = np.array(warm_start, dtype=float)
        if objective(w) <= objective(x0):
            x0 = w
    x, trace, gap, dual_exact, it, converged = _accelerated(objective, step, x0, certificate, opts)
    return PenalizedFit(
        beta_hat=x,
        lam=lam,
        objective_trace=trace,
        kkt_gap=float(gap),
        iterations=it,
        converged=bool(converged),
        dual_exact=bool(dual_exact if opts.certify else exact_dual),
        kkt_kind="kkt" if exact_dual else "duality_gap",
    )


def _nodewise_setup(data, J, colnorm):
    idx = as_index_set(J, data.p)
    if idx.size == 0:
        raise DataError("target set J must be non-empty")
    comp = complement(idx, data.p)
    if comp.size == 0:
        raise DataError("target set J leaves no regressors")
    cnorm = restrict_norm(colnorm, data.p, comp)
    return idx, comp, cnorm


def _advisory(colnorm, idx, framework):
    if framework is Framework.OMEGA and isinstance(colnorm, NormSpec) and colnorm.p > idx.size:
        try:
            ok = _norms.is_allowed(colnorm, idx)
        except DataError:
            ok = True
        if not ok:
            return f"J={idx.tolist()} is not an allowed set for {colnorm.kind.value}"
    return ""


def fit_sqrt_node(data, j, colnorm, lambda_J, opts=None, *, framework=Framework.GAUGE,
                  warm_start=None, lipschitz=None):
    """Square-root regression of column `j` on the others.

    Minimizes ``||x_j - X_{-j} g||_2 + lambda_J * N(g)`` where N is `colnorm`
    restricted to the other columns, by concomitant alternation: each round
    sets ``sigma = max(||r|| / sqrt(n), 1e-8)`` at the extrapolated point and
    takes one proximal-gradient step on
    ``||x_j - X_{-j} g||^2 / (2 sqrt(n) sigma) + lambda_J * N(g)``. That
    quadratic majorizes the root loss, so every accepted step decreases the
    objective; momentum and restarts are handled as in `fit_penalized`.

    Returns
    -------
    MultivariateFit
        With ``J = (j,)`` and a one-column `Gamma`.
    """
    opts = opts or SolverOptions()
    framework = Framework.parse(framework)
    lambda_J = float(lambda_J)
    if not np.isfinite(lambda_J) or lambda_J <= 0:
        raise DataError("lambda_J must be positive and finite")
    if np.ndim(j) != 0:
        if np.size(j) != 1:
            raise DataError("fit_sqrt_node needs a single target column")
        j = np.ravel(j)[0]
    j = int(j)
    idx, comp, cnorm = _nodewise_setup(data, [j], colnorm)
    xj = data.X[:, j]
    if not np.any(xj):
        raise DataError(f"column {j} is identically zero")
    Xc = data.X[:, comp]
    n = data.n
    if lipschitz is None:
        lipschitz = lipschitz_gram(Xc)
    L0 = max(lipschitz * (1.0 + 1e-6), 1e-300)
    floor = 1e-8 * np.sqrt(n)

    def objective(g):
        r = xj - Xc @ g
        return np.sqrt(r @ r) + lambda_J * _evaluate(cnorm, g)

    def step(y, s):
        r = xj - Xc @ y
        # sqrt(n) * sigma with the scale clamped away from zero
        scale = max(np.sqrt(r @ r), floor)
        L = L0 * s / scale
        return cnorm.prox(y + (Xc.T @ r) / (scale * L), lambda_J / L)

    def certificate(g):
        r = xj - Xc @ g
        rn = np.sqrt(r @ r)
        if rn <= floor:
            return np.inf, cnorm.dual_is_exact
        return kkt_certificate(cnorm, Xc.T @ r / (rn * lambda_J), g)

    x0 = np.zeros(comp.size)
    if warm_start is not None:
        w = np.array(warm_start, dtype=float)
        if objective(w) <= objective(x0):
            x0 = w
    gamma, _, gap, exact, total_it, converged = _accelerated(objective, step, x0, certificate, opts)
    if not opts.certify:
        gap, exact = certificate(gamma)
    rn = float(np.linalg.norm(xj - Xc @ gamma))
    return MultivariateFit(
        J=(j,),
        Gamma=gamma.reshape(-1, 1),
        lambda_J=lambda_J,
        framework=framework,
        nuclear_residual=rn,
        kkt_gap=float(gap),
        converged=bool(converged and gap <= opts.kkt_tol),
        iterations=total_it,
        objective=float(objective(gamma)),
        dual_exact=bool(exact),
        advisory=_advisory(colnorm, idx, framework),
        complement=tuple(int(c) for c in comp),
    )


def _sym_power(A, power, floor_rel=0.0):
    w, U = np.linalg.eigh(0.5 * (A + A.T))
    floor = floor_rel * max(w[-1], 0.0)
    w = np.maximum(w, floor)
    return (U * w ** power) @ U.T, w


def nuclear_norm(R):
    return float(np.sum(np.linalg.svd(R, compute_uv=False)))


def multivariate_kkt(Xc, R, B, cnorm, lambda_J):
    """Certificate for the nuclear-norm problem.

    With Z = Xc^T R (R^T R)^{-1/2} / lambda_J, the gap is
    max_k (N*(Z_k) - 1)_+ + sum_k |Z_k^T B_k - N(B_k)| / (1 + sum_k N(B_k)).
    """
    G = R.T @ R
    w = np.linalg.eigvalsh(G)
    if w[0] <= 1e-14 * max(w[-1], 1e-300):
        return np.inf, cnorm.dual_is_exact
    inv_half, _ = _sym_power(G, -0.5)
    Z = Xc.T @ R @ inv_half / lambda_J
    worst = 0.0
    comp = 0.0
    total = 0.0
    exact = True
    for k in range(B.shape[1]):
        dval, ex = _dual(cnorm, Z[:, k])
        exact = exact and ex
        nb = _evaluate(cnorm, B[:, k])
        worst = max(worst, dval - 1.0)
        comp += abs(Z[:, k] @ B[:, k] - nb)
        total += nb
    return max(worst, 0.0) + comp / (1.0 + total), exact


def fit_multivariate(data, J, colnorm, lambda_J, framework=Framework.GAUGE, opts=None):
    """Nuclear-norm regression of the columns J on the remaining columns.

    Minimizes ``||X_J - X_{J^c} B||_nuc + lambda_J * sum_k N(B_k)``. Uses
    ``||R||_nuc = min_V 1/2 (tr(R^T R V^{-1}) + tr V)`` over positive-definite
    V: each round sets ``V = (R^T R + eps I)^{1/2}`` at the extrapolated point,
    with ``eps = 1e-8 tr(R^T R) / |J|``, and takes one proximal-gradient step
    in B on ``1/2 tr(R^T R V^{-1}) + lambda_J * sum_k N(B_k)``. For any V the
    bracket majorizes the nuclear norm, so accepted steps decrease it.
    """
    opts = opts or SolverOptions()
    framework = Framework.parse(framework)
    lambda_J = float(lambda_J)
    if not np.isfinite(lambda_J) or lambda_J <= 0:
        raise DataError("lambda_J must be positive and finite")
    idx, comp, cnorm = _nodewise_setup(data, J, colnorm)
    m = idx.size
    if data.n <= m:
        raise DataError("need more observations than target columns")
    XJ = data.X[:, idx]
    if np.any(~np.any(XJ, axis=0)):
        raise DataError("a target column is identically zero")
    Xc = data.X[:, comp]
    lip_c = max(lipschitz_gram(Xc) * (1.0 + 1e-6), 1e-300)

    def penalty(B):
        return sum(_evaluate(cnorm, B[:, k]) for k in range(m))

    def objective(B):
        return nuclear_norm(XJ - Xc @ B) + lambda_J * penalty(B)

    def step(Y, s):
        R = XJ - Xc @ Y
        G = R.T @ R
        eps = max(1e-8 * np.trace(G) / m, 1e-300)
        Vinv, w = _sym_power(G + eps * np.eye(m), -0.5)
        L = lip_c * s / np.sqrt(w[0])
        V = Y + (Xc.T @ (R @ Vinv)) / L
        return np.column_stack([cnorm.prox(V[:, k], lambda_J / L) for k in range(m)])

    def certificate(B):
        return multivariate_kkt(Xc, XJ - Xc @ B, B, cnorm, lambda_J)

    B, _, gap, exact, total_it, converged = _accelerated(
        objective, step, np.zeros((comp.size, m)), certificate, opts)
    if not opts.certify:
        gap, exact = certificate(B)
    R = XJ - Xc @ B
    return MultivariateFit(
        J=tuple(int(i) for i in idx),
        Gamma=B,
        lambda_J=lambda_J,
        framework=framework,
        nuclear_residual=nuclear_norm(R),
        kkt_gap=float(gap),
        converged=bool(converged and gap <= opts.kkt_tol),
        iterations=total_it,
        objective=float(objective(B)),
        dual_exact=bool(exact),
        advisory=_advisory(colnorm, idx, framework),
        complement=tuple(int(c) for c in comp),
    )


def column_norm(norm, framework):
    """Column penalty of the nodewise regressions for a framework."""
    framework = Framework.parse(framework)
    return _norms.gauge_of(norm) if framework is Framework.GAUGE else norm


def check_invertible(A, name, rel=1e-12):
    w = np.linalg.svd(np.atleast_2d(A), compute_uv=False)
    if w.size == 0 or w[-1] <= rel * max(w[0], 1e-300):
        raise SingularMatrixError(f"{name} is singular (condition number too large)", name)
