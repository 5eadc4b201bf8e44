import csv

import numpy as np
import pytest
from scipy import stats

from structinfer import DataError, NormSpec, NotAllowedError
from structinfer import norms as N
from structinfer.inference import (
    DesparsifiedEstimate,
    PointwiseBasis,
    RegionKind,
    SigmaMode,
    chi2_quantile,
    desparsify,
    group_region,
    group_statistic,
    lambda_m,
    normal_quantile,
    pointwise_ci,
    remainder_bound,
    remainder_terms,
    sigma_estimate,
    write_regions,
)
from structinfer.precision import fit_precision, nodewise_sweep
from structinfer.solvers import Dataset, Framework, PenalizedFit, fit_penalized

from oracles import sphere_grid


def exact_fit(beta):
    return PenalizedFit(beta_hat=np.asarray(beta, float), lam=1.0, objective_trace=np.zeros(1),
                        kkt_gap=0.0, iterations=0, converged=True)


def toy(n=60, p=8, seed=0, s=3):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    beta0 = np.zeros(p)
    beta0[:s] = [3.0, 2.0, 1.0][:s]
    eps = rng.standard_normal(n)
    return Dataset(X, X @ beta0 + eps), beta0, eps


# -- quantiles ----------------------------------------------------------------


def test_quantile_examples():
    assert normal_quantile(0.5) == 0.0
    assert chi2_quantile(2, 0.95) == pytest.approx(-2 * np.log(0.05), rel=1e-12)
    assert chi2_quantile(1, 0.95) == pytest.approx(normal_quantile(0.975) ** 2, rel=1e-12)
    assert chi2_quantile(2, 0.95) == pytest.approx(5.991465, abs=1e-6)
    assert chi2_quantile(1, 0.95) == pytest.approx(3.841459, abs=1e-6)


def test_quantile_accuracy():
    for q in (1e-10, 0.01, 0.3, 0.9, 1 - 1e-10):
        assert abs(stats.norm.cdf(normal_quantile(q)) - q) < 1e-12
        for df in (1, 3, 10):
            assert abs(stats.chi2.cdf(chi2_quantile(df, q), df) - q) < 1e-10


@pytest.mark.parametrize("q", [0.0, 1.0, -0.5, 2.0])
def test_quantile_errors(q):
    with pytest.raises(DataError):
        normal_quantile(q)
    with pytest.raises(DataError):
        chi2_quantile(2, q)
    with pytest.raises(DataError):
        chi2_quantile(0, 0.5)


# -- sigma ------------------------------------------------------------------


def test_sigma_examples():
    data, beta0, _ = toy()
    with pytest.raises(DataError):
        sigma_estimate(Dataset(data.X, data.X @ beta0), exact_fit(beta0))
    y = data.Y
    assert sigma_estimate(data, exact_fit(np.zeros(8))) == pytest.approx(np.sqrt(y @ y / 60))
    assert sigma_estimate(data, exact_fit(beta0), SigmaMode.KNOWN, 2.5) == 2.5
    with pytest.raises(DataError):
        sigma_estimate(data, exact_fit(beta0), "known")


def test_sigma_plugin_consistency():
    rng = np.random.default_rng(1)
    n, p = 1000, 5
    X = rng.standard_normal((n, p))
    beta0 = np.array([1.0, -2.0, 0, 0, 0.5])
    vals = []
    for _ in range(200):
        data = Dataset(X, X @ beta0 + rng.standard_normal(n))
        vals.append(sigma_estimate(data, exact_fit(beta0)))
    assert np.all((np.array(vals) >= 0.9) & (np.array(vals) <= 1.1))


# -- de-sparsified estimator -------------------------------------------------------


def test_exact_fit_recovers_truth():
    data, beta0, _ = toy()
    clean = Dataset(data.X, data.X @ beta0)
    prec = fit_precision(clean, [2], NormSpec.l1(8), "gauge", 2.0)
    est = desparsify(clean, exact_fit(beta0), prec, sigma=1.0)
    np.testing.assert_allclose(est.b_J, beta0[[2]], atol=1e-14)
    assert est.sigma_mode is SigmaMode.KNOWN


def test_orthogonal_one_step_correction():
    rng = np.random.default_rng(2)
    Q, _ = np.linalg.qr(rng.standard_normal((30, 4)))
    X = Q * np.array([2.0, 1.0, 3.0, 0.5])
    data = Dataset(X, rng.standard_normal(30))
    fit = fit_penalized(data, NormSpec.l1(4), 0.01)
    r = data.Y - X @ fit.beta_hat
    for j in range(4):
        prec = fit_precision(data, [j], NormSpec.l1(4), "gauge", 0.5)
        est = desparsify(data, fit, prec)
        oracle = fit.beta_hat[j] + X[:, j] @ r / (X[:, j] @ X[:, j])
        assert est.b_J[0] == pytest.approx(oracle, rel=1e-12)


@pytest.mark.parametrize("framework", ["gauge", "omega"])
def test_decomposition_identity(framework):
    data, beta0, eps = toy(seed=3)
    norm = NormSpec.wedge(8)
    fit = fit_penalized(data, norm, 0.1)
    for J in ([0], [4], [1, 5]):
        prec = fit_precision(data, J, norm, framework, 2.0)
        lhs, gaussian, rem = remainder_terms(data, fit, prec, beta0, eps)
        np.testing.assert_allclose(lhs, gaussian + rem, atol=1e-8)
        # the Gaussian term computed independently from its definition
        R = data.X[:, J] - data.X[:, list(prec.complement)] @ prec.Gamma
        w, U = np.linalg.eigh(R.T @ R / data.n)
        g = (U / np.sqrt(w)) @ U.T @ R.T @ eps / np.sqrt(data.n)
        np.testing.assert_allclose(gaussian, g, atol=1e-10)


def test_pointwise_basis_matches_desparsify():
    data, beta0, _ = toy(seed=4)
    norm = NormSpec.wedge(8)
    fit = fit_penalized(data, norm, 0.1)
    precs = nodewise_sweep(data, norm, Framework.GAUGE, 2.0)
    basis = PointwiseBasis.from_fits(data, precs)
    b = basis.desparsify(data, fit.beta_hat)
    for j, prec in enumerate(precs):
        assert b[j] == pytest.approx(desparsify(data, fit, prec, sigma=1.0).b_J[0], rel=1e-12)
    np.testing.assert_allclose(basis.halfwidths(1.0, 0.05),
                               [pointwise_ci(desparsify(data, fit, pr, 1.0), 0.05).halfwidth for pr in precs])


# -- regions ------------------------------------------------------------------


def estimate(b, M, sigma=1.0):
    b = np.atleast_1d(np.asarray(b, float))
    return DesparsifiedEstimate(J=tuple(range(b.size)), b_J=b, M=np.atleast_2d(M).astype(float),
                                sigma_hat=sigma, sigma_mode=SigmaMode.KNOWN)


def test_pointwise_examples():
    ci = pointwise_ci(estimate([0.3], 10.0), 0.05)
    assert ci.halfwidth == pytest.approx(1.959964 / 10, abs=1e-7)
    assert ci.kind is RegionKind.POINTWISE_INTERVAL
    assert pointwise_ci(estimate([0.3], 10.0), 1 - 1e-12).halfwidth < 1e-10
    wide = pointwise_ci(estimate([0.3], 10.0, sigma=2.0), 0.05)
    assert wide.halfwidth == pytest.approx(2 * ci.halfwidth, rel=1e-14)
    with pytest.raises(DataError):
        pointwise_ci(estimate([0.0, 1.0], np.eye(2)), 0.05)


def test_group_examples():
    est1 = estimate([0.3], 4.0, sigma=1.5)
    ci, ell = pointwise_ci(est1, 0.1), group_region(est1, 0.1)
    assert ell.box[0] == pytest.approx(ci.halfwidth, rel=1e-12)
    for x in (0.3 + 0.999 * ci.halfwidth, 0.3 - 1.001 * ci.halfwidth):
        assert ci.contains([x]) == ell.contains([x])
    disk = group_region(estimate([1.0, 2.0], np.eye(2)), 0.05)
    assert disk.threshold == pytest.approx(5.991465, abs=1e-6)
    r = np.sqrt(5.991465)
    assert disk.contains([1.0 + 0.999 * r, 2.0])
    assert not disk.contains([1.0 + 0.7 * r, 2.0 + 0.72 * r])


def test_regions_nest():
    rng = np.random.default_rng(5)
    M = rng.standard_normal((3, 3)) + 3 * np.eye(3)
    est = estimate([0.0, 0.0, 0.0], M)
    alphas = [0.01, 0.05, 0.2, 0.5]
    for pt in rng.standard_normal((300, 3)):
        inside = [group_region(est, a).contains(pt) for a in alphas]
        # once outside for some alpha, outside for every larger alpha
        assert all(not inside[k + 1] or inside[k] for k in range(3))


def test_group_statistic():
    est = estimate([1.0, 2.0], 2 * np.eye(2), sigma=2.0)
    assert group_statistic(est, [0.0, 0.0]) == pytest.approx(5.0)
    assert group_statistic(est, [0.0, 0.0], sigma=1.0) == pytest.approx(20.0)


def test_pivot_orthogonal_design():
    n = p = 20
    X = np.sqrt(n) * np.eye(n)
    rng = np.random.default_rng(6)
    beta0 = np.zeros(p)
    beta0[:3] = 2.0
    J = [0, 5]
    stats_ = []
    precs = None
    for _ in range(300):
        data = Dataset(X, X @ beta0 + rng.standard_normal(n))
        fit = fit_penalized(data, NormSpec.l1(p), 0.2)
        if precs is None:
            precs = fit_precision(data, J, NormSpec.l1(p), "gauge", 1.0)
            assert np.all(precs.Gamma == 0)
        stats_.append(group_statistic(desparsify(data, fit, precs, sigma=1.0), beta0[J]))
    assert stats.kstest(stats_, "chi2", args=(2,)).pvalue > 0.01


def test_write_regions(tmp_path):
    path = tmp_path / "r.csv"
    write_regions(path, [(0, pointwise_ci(estimate([0.25], 4.0), 0.05)),
                         (1, group_region(estimate([1.0, 2.0], np.eye(2)), 0.05))])
    rows = list(csv.reader(open(path)))
    assert rows[0][:3] == ["set_id", "kind", "level"]
    assert rows[1][1] == "pointwise_interval" and rows[1][3] == "0.25"
    assert rows[2][3] == "1;2"
    assert rows[2][5] == f"{chi2_quantile(2, 0.95):.15g}"


# -- remainder diagnostics ------------------------------------------------------


def test_remainder_zero_noise():
    data, beta0, _ = toy(seed=7)
    clean = Dataset(data.X, data.X @ beta0)
    norm = NormSpec.wedge(8)
    prec = fit_precision(clean, [1], norm, "gauge", 2.0)
    d = remainder_bound(clean, exact_fit(beta0), prec, beta0, 1.0, [0, 1, 2])
    assert d.actual == 0 and d.bound_thm1 == 0 and d.bound_thm2 == 0


def test_remainder_gauge_bound():
    data, beta0, eps = toy(seed=8)
    norm = NormSpec.wedge(8)
    fit = fit_penalized(data, norm, 0.1)
    for j in range(8):
        prec = fit_precision(data, [j], norm, "gauge", 2.0)
        d = remainder_bound(data, fit, prec, beta0, 1.0, [0, 1, 2], eps=eps)
        assert prec.kkt_gap <= 1e-6
        assert d.actual <= d.bound_thm1 + 1e-6
        assert d.identity_residual <= 1e-8
        assert d.within_thm1 and d.within_direct


def test_remainder_l1_constant():
    data, beta0, eps = toy(seed=9)
    norm = NormSpec.l1(8)
    fit = fit_penalized(data, norm, 0.1)
    prec = fit_precision(data, [3], norm, "gauge", 2.0)
    d = remainder_bound(data, fit, prec, beta0, 1.0, [0, 1, 2], eps=eps)
    assert d.bound_thm2 <= 2 * d.bound_upsilon * (1 + 1e-12)
    assert d.bound_thm2 >= d.bound_upsilon


def test_remainder_not_allowed():
    data, beta0, _ = toy(seed=10)
    norm = NormSpec.wedge(8)
    prec = fit_precision(data, [2], norm, "gauge", 2.0)
    with pytest.raises(NotAllowedError):
        remainder_bound(data, exact_fit(beta0), prec, beta0, 1.0, [1, 2])


def test_lambda_m():
    data, beta0, eps = toy(seed=11)
    assert lambda_m(data, np.zeros(60), NormSpec.l1(8), [0]) == 0.0
    val = lambda_m(data, eps, NormSpec.l1(8), [0, 1, 2])
    assert val == pytest.approx(np.max(np.abs(data.X.T @ eps)) / 60)
    # slope on p = 2 against a boundary-grid dual of upsilon
    X = data.X[:, :2]
    spec = NormSpec.slope([1.0, 0.4])
    d2 = Dataset(X, data.Y)
    z = X.T @ eps
    D = sphere_grid(2, 20000, np.random.default_rng(0))
    ups = np.abs(D[:, 0]) * 1.0 + np.abs(D[:, 1]) * 0.4
    grid = np.max((D / ups[:, None]) @ z) / 60
    assert lambda_m(d2, eps, spec, [0]) == pytest.approx(grid, abs=1e-3)
    assert N.upsilon_dual(spec, [0], z) / 60 == pytest.approx(lambda_m(d2, eps, spec, [0]))
