"""De-sparsified estimators and asymptotic confidence regions.

For a target set J with surrogate (T_J, Sigma_J, M) and residual matrix R the
estimator is

    b_J = beta_hat_J + T_J^{-1} R^T (Y - X beta_hat) / n,

and ``M (b_J - beta0_J) / sigma`` is approximately standard normal. Pointwise
intervals use the normal quantile; group regions are ellipsoids
``{b : ||M (b_J - b)||^2 <= sigma^2 * chi2_{|J|}(1 - alpha)}``.
"""

import csv
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy import special

from . import norms as _norms
from .errors import DataError, NotAllowedError, SingularMatrixError
from .norms import NormSpec, as_index_set
from .solvers import column_norm


class SigmaMode(str, Enum):
    KNOWN = "known"
    PLUGIN = "plugin"

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        try:
            return cls(str(name).lower().replace("-", "").replace("_", ""))
        except ValueError:
            raise DataError(f"unknown sigma mode {name!r}") from None


class RegionKind(str, Enum):
    POINTWISE_INTERVAL = "pointwise_interval"
    GROUP_ELLIPSOID = "group_ellipsoid"


ACTIVE_THRESHOLD = 1e-10


@dataclass(frozen=True, eq=False)
class DesparsifiedEstimate:
    J: tuple
    b_J: np.ndarray
    M: np.ndarray
    sigma_hat: float
    sigma_mode: SigmaMode

    def __post_init__(self):
        if not (np.all(np.isfinite(self.b_J)) and np.all(np.isfinite(self.M))):
            raise DataError("de-sparsified estimate has non-finite entries")
        if not (np.isfinite(self.sigma_hat) and self.sigma_hat > 0):
            raise DataError("sigma_hat must be positive")


@dataclass(frozen=True, eq=False)
class ConfidenceRegion:
    """Pointwise interval or group ellipsoid.

    For an interval, `halfwidth` is set and `shape` is the 1x1 matrix M. For an
    ellipsoid, ``shape`` is M and the region is
    ``||shape (center - b)||^2 <= sigma_hat^2 * threshold``; `box` holds the
    half-widths of its bounding box.
    """

    kind: RegionKind
    J: tuple
    center: np.ndarray
    level: float
    sigma_hat: float
    shape: np.ndarray
    threshold: float
    halfwidth: float = float("nan")
    box: np.ndarray = field(default=None)

    def contains(self, beta_J):
        beta_J = np.atleast_1d(np.asarray(beta_J, dtype=float))
        if self.kind is RegionKind.POINTWISE_INTERVAL:
            return bool(abs(beta_J[0] - self.center[0]) <= self.halfwidth)
        d = self.shape @ (self.center - beta_J)
        return bool(d @ d <= self.sigma_hat ** 2 * self.threshold)

    @property
    def length(self):
        return 2.0 * self.halfwidth


def normal_quantile(q):
    """Standard normal quantile (inverse CDF)."""
    q = float(q)
    if not 0.0 < q < 1.0:
        raise DataError("quantile level must lie in (0, 1)")
    return float(special.ndtri(q))


def chi2_quantile(df, q):
    """Chi-square quantile with `df` degrees of freedom."""
    if int(df) != df or df < 1:
        raise DataError("degrees of freedom must be a positive integer")
    q = float(q)
    if not 0.0 < q < 1.0:
        raise DataError("quantile level must lie in (0, 1)")
    return float(special.chdtri(int(df), 1.0 - q))


def sigma_estimate(data, fit, mode=SigmaMode.PLUGIN, value=None):
    """Noise level: the supplied `value` (KNOWN) or the residual plug-in.

    The plug-in is ``sqrt(||Y - X beta_hat||^2 / (n - s_hat))`` with
    ``s_hat = #{j : |beta_hat_j| > 1e-10}``.
    """
    mode = SigmaMode.parse(mode)
    if mode is SigmaMode.KNOWN:
        if value is None or not np.isfinite(value) or value <= 0:
            raise DataError("known sigma must be a positive number")
        return float(value)
    s_hat = int(np.count_nonzero(np.abs(fit.beta_hat) > ACTIVE_THRESHOLD))
    dof = data.n - s_hat
    if dof <= 0:
        raise DataError(f"plug-in sigma needs n > s_hat (n={data.n}, s_hat={s_hat})")
    r = data.Y - data.X @ fit.beta_hat
    rss = float(r @ r)
    if rss <= 0.0:
        raise DataError("zero residual: plug-in sigma is degenerate")
    return float(np.sqrt(rss / dof))


def _resolve_sigma(data, fit, sigma):
    if sigma is None or (isinstance(sigma, str) and SigmaMode.parse(sigma) is SigmaMode.PLUGIN):
        return sigma_estimate(data, fit, SigmaMode.PLUGIN), SigmaMode.PLUGIN
    if isinstance(sigma, SigmaMode):
        if sigma is SigmaMode.PLUGIN:
            return sigma_estimate(data, fit, SigmaMode.PLUGIN), SigmaMode.PLUGIN
        raise DataError("known sigma mode needs a value")
    return sigma_estimate(data, fit, SigmaMode.KNOWN, float(sigma)), SigmaMode.KNOWN


def desparsify(data, fit, prec, sigma=None):
    """De-sparsified estimator for the target set of `prec`.

    Parameters
    ----------
    sigma : float or None
        Known noise level; None selects the residual plug-in.
    """
    J = list(prec.J)
    R = prec.residual(data.X)
    if R.shape[0] != data.n:
        raise DataError("precision fit was built on different data")
    resid = data.Y - data.X @ fit.beta_hat
    try:
        corr = np.linalg.solve(prec.T_J, R.T @ resid / data.n)
    except np.linalg.LinAlgError:
        raise SingularMatrixError("T_J is singular", "T_J") from None
    sigma_hat, mode = _resolve_sigma(data, fit, sigma)
    return DesparsifiedEstimate(
        J=tuple(J),
        b_J=fit.beta_hat[J] + corr,
        M=prec.M,
        sigma_hat=sigma_hat,
        sigma_mode=mode,
    )


@dataclass(frozen=True, eq=False)
class PointwiseBasis:
    """Stacked pointwise surrogates for vectorized de-sparsification.

    Column j of `R` is the nodewise residual of coordinate j; `T` and `M` are
    the scalar T_j and M_j.
    """

    R: np.ndarray
    T: np.ndarray
    M: np.ndarray

    @classmethod
    def from_fits(cls, data, precs):
        p = data.p
        if len(precs) != p or any(len(pr.J) != 1 or pr.J[0] != j for j, pr in enumerate(precs)):
            raise DataError("need one pointwise precision fit per coordinate, in order")
        R = np.column_stack([pr.residual(data.X)[:, 0] for pr in precs])
        T = np.array([pr.T_J[0, 0] for pr in precs])
        M = np.array([pr.M[0, 0] for pr in precs])
        if np.any(T == 0) or np.any(M == 0):
            raise SingularMatrixError("a pointwise T_j or M_j vanishes", "T_J")
        return cls(R=R, T=T, M=M)

    def desparsify(self, data, beta_hat):
        resid = data.Y - data.X @ beta_hat
        return beta_hat + (self.R.T @ resid) / (data.n * self.T)

    def halfwidths(self, sigma_hat, alpha):
        return normal_quantile(1.0 - alpha / 2.0) * sigma_hat / np.abs(self.M)


def pointwise_ci(est, alpha):
    """Interval ``b_j +- z_{1-alpha/2} sigma_hat / |M|`` for a single coordinate."""
    if len(est.J) != 1:
        raise DataError("pointwise_ci needs |J| = 1")
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise DataError("alpha must lie in (0, 1)")
    m = float(np.asarray(est.M).reshape(-1)[0])
    if m == 0.0:
        raise SingularMatrixError("M is zero", "M")
    z = normal_quantile(1.0 - alpha / 2.0)
    half = z * est.sigma_hat / abs(m)
    return ConfidenceRegion(
        kind=RegionKind.POINTWISE_INTERVAL,
        J=est.J,
        center=np.asarray(est.b_J, dtype=float).copy(),
        level=1.0 - alpha,
        sigma_hat=est.sigma_hat,
        shape=np.atleast_2d(est.M).astype(float),
        threshold=z * z,
        halfwidth=half,
        box=np.array([half]),
    )


def group_region(est, alpha):
    """Ellipsoid ``||M (b_J - b)||^2 <= sigma_hat^2 chi2_{|J|}(1 - alpha)``."""
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise DataError("alpha must lie in (0, 1)")
    m = len(est.J)
    q = chi2_quantile(m, 1.0 - alpha)
    M = np.atleast_2d(np.asarray(est.M, dtype=float))
    try:
        cov = np.linalg.inv(M.T @ M)
    except np.linalg.LinAlgError:
        raise SingularMatrixError("M is singular", "M") from None
    box = est.sigma_hat * np.sqrt(q) * np.sqrt(np.diag(cov))
    return ConfidenceRegion(
        kind=RegionKind.GROUP_ELLIPSOID,
        J=est.J,
        center=np.asarray(est.b_J, dtype=float).copy(),
        level=1.0 - alpha,
        sigma_hat=est.sigma_hat,
        shape=M,
        threshold=q,
        halfwidth=float(box[0]) if m == 1 else float("nan"),
        box=box,
    )


def group_statistic(est, beta0_J, sigma=None):
    """Pivot ``||M (b_J - beta0_J)||^2 / sigma^2``."""
    s = est.sigma_hat if sigma is None else float(sigma)
    d = np.atleast_2d(est.M) @ (np.asarray(est.b_J) - np.asarray(beta0_J, dtype=float))
    return float(d @ d) / s ** 2


@dataclass(frozen=True)
class RemainderDiagnostics:
    """Remainder of the de-sparsified pivot and its theoretical bounds.

    All quantities are divided by `sigma0`. ``identity_residual`` is the
    largest deviation in ``M (b_J - beta0_J) = gaussian + rem``.
    """

    J: tuple
    actual: float
    bound_thm1: float
    bound_thm2: float
    bound_upsilon: float
    bound_direct: float
    identity_residual: float
    kkt_gap: float
    within_thm1: bool
    within_thm2: bool
    within_direct: bool
    s_ref: tuple
    oracle_substitute: bool = True


def certificate_matrix(data, prec):
    """Nodewise dual certificate ``Z = X_{J^c}^T R (R^T R)^{-1/2} / lambda_J``."""
    R = prec.residual(data.X)
    inv_half = inverse_sqrt_gram(R.T @ R)
    return data.X[:, list(prec.complement)].T @ R @ inv_half / prec.lambda_J


def inverse_sqrt_gram(G):
    w, U = np.linalg.eigh(0.5 * (G + G.T))
    if w[0] <= 1e-12 * max(w[-1], 1e-300):
        raise SingularMatrixError("residual Gram matrix is singular", "Sigma_J")
    return (U / np.sqrt(w)) @ U.T


def remainder_terms(data, fit, prec, truth, eps=None):
    """Gaussian term and remainder of ``M (b_J - beta0_J)`` (not scaled).

    Returns ``(lhs, gaussian, rem)`` where ``lhs = M (b_J - beta0_J)`` comes
    from `desparsify`, ``gaussian = Sigma_J^{-1/2} R^T eps / sqrt(n)`` and
    ``rem = lambda_J Z^T (beta0 - beta_hat)_{J^c}`` with Z from
    `certificate_matrix`.
    """
    truth = np.asarray(truth, dtype=float)
    if truth.shape != (data.p,):
        raise DataError("truth must have length p")
    if eps is None:
        eps = data.Y - data.X @ truth
    J = list(prec.J)
    comp = list(prec.complement)
    R = prec.residual(data.X)
    est = desparsify(data, fit, prec, sigma=1.0)
    lhs = prec.M @ (est.b_J - truth[J])
    gaussian = inverse_sqrt_gram(prec.Sigma_J) @ (R.T @ eps) / np.sqrt(data.n)
    Z = certificate_matrix(data, prec)
    rem = prec.lambda_J * (Z.T @ (truth - fit.beta_hat)[comp])
    return lhs, gaussian, rem


def remainder_bound(data, fit, prec, truth, sigma0, S_ref, norm=None, eps=None):
    """Remainder size versus the gauge, Upsilon and direct bounds.

    Parameters
    ----------
    S_ref : index set
        Reference allowed set standing in for the oracle set (the true support
        in simulations).
    norm : NormSpec, optional
        Penalty of the main fit; defaults to the one recorded in `prec`.

    Notes
    -----
    With ``delta = beta_hat - beta0``, ``lam = prec.lambda_J`` and gap the
    nodewise certificate:

    * bound_thm1 = lam * g(delta_{J^c}) / sigma0, valid in the gauge framework,
    * bound_upsilon = lam * Upsilon_S(delta) / sigma0,
    * bound_thm2 = 2 * lam * C_S * Upsilon_S(delta) / sigma0,
    * bound_direct = lam * N(delta_{J^c}) / sigma0 with the fitted column norm.

    Each ``within_*`` flag compares against the bound times ``1 + gap``.
    """
    if norm is None:
        if not prec.norm_json:
            raise DataError("precision fit does not record its norm; pass norm=")
        norm = NormSpec.from_json(prec.norm_json)
    if not isinstance(norm, NormSpec):
        raise DataError("remainder_bound needs the NormSpec of the main fit")
    if not _norms.is_allowed(norm, S_ref):
        raise NotAllowedError(f"reference set is not allowed for {norm.kind.value}")
    sigma0 = float(sigma0)
    if sigma0 <= 0:
        raise DataError("sigma0 must be positive")
    truth = np.asarray(truth, dtype=float)
    lhs, gaussian, rem = remainder_terms(data, fit, prec, truth, eps)
    identity = float(np.max(np.abs(lhs - gaussian - rem)))
    actual = float(np.max(np.abs(rem))) / sigma0

    delta = fit.beta_hat - truth
    lam = prec.lambda_J
    delta_c = _norms.restrict(delta, np.asarray(prec.complement, dtype=np.intp))
    bound1 = lam * _norms.evaluate(_norms.gauge_of(norm), delta_c) / sigma0
    ups = _norms.upsilon(norm, S_ref, delta)
    bound_ups = lam * ups / sigma0
    bound2 = 2.0 * lam * _norms.c_constant(norm, S_ref) * ups / sigma0
    colnorm = column_norm(norm, prec.framework)
    bound_direct = lam * _norms.evaluate(colnorm, delta_c) / sigma0

    gap = float(prec.kkt_gap) if np.isfinite(prec.kkt_gap) else np.inf
    infl = 1.0 + gap
    # rounding slack on quantities of size lam * |delta|
    slack = 1e-12 * (1.0 + actual + bound_direct)
    return RemainderDiagnostics(
        J=tuple(prec.J),
        actual=actual,
        bound_thm1=bound1,
        bound_thm2=bound2,
        bound_upsilon=bound_ups,
        bound_direct=bound_direct,
        identity_residual=identity,
        kkt_gap=gap,
        within_thm1=bool(actual <= bound1 * infl + slack),
        within_thm2=bool(actual <= bound2 * infl + slack),
        within_direct=bool(actual <= bound_direct * infl + slack),
        s_ref=tuple(int(i) for i in as_index_set(S_ref, norm.p)),
    )


def lambda_m(data, eps, norm, S):
    """Theoretical level ``Upsilon_S^*(X^T eps) / n``."""
    eps = np.asarray(eps, dtype=float)
    if eps.shape != (data.n,):
        raise DataError("noise vector must have length n")
    return _norms.upsilon_dual(norm, S, data.X.T @ eps) / data.n


REGION_HEADER = ["set_id", "kind", "level", "center", "halfwidth", "threshold", "sigma_hat", "box"]


def _fmt(x):
    return f"{float(x) + 0.0:.15g}"


def region_row(region, set_id):
    return [
        str(set_id),
        region.kind.value,
        _fmt(region.level),
        ";".join(_fmt(c) for c in region.center),
        _fmt(region.halfwidth),
        _fmt(region.threshold),
        _fmt(region.sigma_hat),
        ";".join(_fmt(b) for b in region.box),
    ]


def write_regions(path, regions):
    """Write ``(set_id, region)`` pairs as CSV rows (vectors joined by ';')."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REGION_HEADER)
        for set_id, region in regions:
            w.writerow(region_row(region, set_id))
