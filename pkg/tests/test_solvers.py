import numpy as np
import pytest

from structinfer import DataError, NormSpec
from structinfer import norms as N
from structinfer.solvers import (
    Dataset,
    Framework,
    SolverOptions,
    column_norm,
    fit_multivariate,
    fit_penalized,
    fit_sqrt_node,
    lipschitz_gram,
    nuclear_norm,
)


def random_data(n, p, seed, s=3):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    beta = np.zeros(p)
    beta[:s] = rng.uniform(1, 3, s)
    return Dataset(X, X @ beta + 0.5 * rng.standard_normal(n))


def kkt_parts(data, norm, fit):
    r = data.Y - data.X @ fit.beta_hat
    Z = 2.0 * data.X.T @ r / (data.n * fit.lam)
    return N.dual(norm, Z), Z @ fit.beta_hat, N.evaluate(norm, fit.beta_hat)


# -- fit_penalized ------------------------------------------------------------


def test_orthogonal_closed_form():
    fit = fit_penalized(Dataset(np.eye(2), [3.0, 1.0]), NormSpec.l1(2), 1.0)
    np.testing.assert_allclose(fit.beta_hat, [2.0, 0.0], atol=1e-9)
    assert fit.converged


def test_orthogonal_matches_grid():
    data = Dataset(np.eye(2), [3.0, 1.0])
    g = np.linspace(-1, 4, 501)
    b1, b2 = np.meshgrid(g, g, indexing="ij")
    f = ((3 - b1) ** 2 + (1 - b2) ** 2) / 2 + np.abs(b1) + np.abs(b2)
    k = np.unravel_index(np.argmin(f), f.shape)
    fit = fit_penalized(data, NormSpec.l1(2), 1.0)
    np.testing.assert_allclose(fit.beta_hat, [g[k[0]], g[k[1]]], atol=1e-2)


@pytest.mark.parametrize("norm", [NormSpec.l1(8), NormSpec.slope(np.linspace(1, 0.3, 8)),
                                  NormSpec.group_lasso([[0, 1], [2, 3, 4], [5, 6, 7]]),
                                  NormSpec.wedge(8)])
def test_large_lambda_gives_zero(norm):
    data = random_data(30, 8, 1)
    lam0 = N.dual(norm, 2 * data.X.T @ data.Y / data.n)
    fit = fit_penalized(data, norm, lam0 * 1.01)
    assert np.all(fit.beta_hat == 0)
    assert fit.converged


def test_zero_response():
    data = Dataset(np.random.default_rng(0).standard_normal((10, 4)), np.zeros(10))
    for norm in (NormSpec.l1(4), NormSpec.wedge(4), NormSpec.lorentz(4)):
        assert np.all(fit_penalized(data, norm, 0.3).beta_hat == 0)


@pytest.mark.parametrize("seed", range(5))
def test_kkt_certificate(seed):
    data = random_data(40, 12, seed)
    norms = [NormSpec.l1(12), NormSpec.slope(np.linspace(1, 0.2, 12)),
             NormSpec.group_lasso([list(range(k, k + 3)) for k in range(0, 12, 3)])]
    for norm in norms:
        fit = fit_penalized(data, norm, 0.2)
        dval, zb, nb = kkt_parts(data, norm, fit)
        assert dval <= 1 + 1e-4
        assert abs(zb - nb) <= 1e-6 * (1 + nb)
        assert fit.kkt_kind == "kkt"


@pytest.mark.parametrize("norm", [NormSpec.wedge(10), NormSpec.lorentz(10),
                                  NormSpec.group_wedge([[0, 1], [2, 3], [4, 5, 6], [7, 8, 9]])])
def test_cone_norms_duality_gap(norm):
    data = random_data(30, 10, 3)
    fit = fit_penalized(data, norm, 0.3)
    assert fit.kkt_kind == "duality_gap"
    assert fit.converged and fit.kkt_gap <= 1e-7


def test_objective_trace_and_reference_points():
    data = random_data(50, 6, 4)
    for norm in (NormSpec.l1(6), NormSpec.wedge(6)):
        fit = fit_penalized(data, norm, 0.1)
        assert np.all(np.diff(fit.objective_trace) <= 0)

        def obj(b):
            r = data.Y - data.X @ b
            return r @ r / data.n + 0.1 * N.evaluate(norm, b)

        ls = np.linalg.lstsq(data.X, data.Y, rcond=None)[0]
        assert fit.objective <= obj(np.zeros(6)) + 1e-12
        assert fit.objective <= obj(ls) + 1e-12


def test_scaling_consistency():
    rng = np.random.default_rng(5)
    Q, _ = np.linalg.qr(rng.standard_normal((20, 5)))
    X = np.sqrt(20) * Q
    Y = X @ np.array([3, -2, 0.5, 0, 0]) + rng.standard_normal(20)
    base = fit_penalized(Dataset(X, Y), NormSpec.l1(5), 0.4).beta_hat
    for c in (0.1, 3.0):
        scaled = fit_penalized(Dataset(X, c * Y), NormSpec.l1(5), c * 0.4).beta_hat
        np.testing.assert_allclose(scaled, c * base, atol=1e-8 * c)
    # orthogonal closed form: soft threshold of X^T Y / n at lambda / 2
    u = X.T @ Y / 20
    np.testing.assert_allclose(base, np.sign(u) * np.maximum(np.abs(u) - 0.2, 0), atol=1e-9)


def test_nonconvergence_is_flagged():
    fit = fit_penalized(random_data(30, 10, 6), NormSpec.l1(10), 0.05,
                        SolverOptions(max_iter=3))
    assert not fit.converged
    assert fit.iterations == 3


def test_fit_errors():
    data = random_data(10, 3, 0)
    with pytest.raises(DataError):
        fit_penalized(data, NormSpec.l1(3), 0.0)
    with pytest.raises(DataError):
        fit_penalized(data, NormSpec.l1(4), 1.0)
    with pytest.raises(DataError):
        SolverOptions.from_dict({"bogus": 1})
    with pytest.raises(DataError):
        Dataset(np.ones((3, 2)), [1, 2])
    with pytest.raises(DataError):
        Dataset(np.ones((3, 2)) * np.nan, [1, 2, 3])


def test_lipschitz_gram():
    A = np.random.default_rng(0).standard_normal((30, 7))
    assert lipschitz_gram(A) == pytest.approx(np.linalg.eigvalsh(A.T @ A)[-1], rel=1e-9)


def test_dataset_csv_round_trip(tmp_path):
    data = random_data(6, 3, 2)
    path = tmp_path / "d.csv"
    data.to_csv(path)
    back = Dataset.from_csv(path)
    np.testing.assert_array_equal(back.X, data.X)
    np.testing.assert_array_equal(back.Y, data.Y)
    path.write_text("y,x1,x3\n1,2,3\n4,5,6\n")
    with pytest.raises(DataError):
        Dataset.from_csv(path)


# -- nodewise solvers ---------------------------------------------------------


def test_sqrt_node_orthogonal_residual():
    rng = np.random.default_rng(1)
    Q, _ = np.linalg.qr(rng.standard_normal((20, 4)))
    fit = fit_sqrt_node(Dataset(Q, np.zeros(20)), 0, NormSpec.l1(4), 0.1)
    assert np.all(fit.Gamma == 0)


def test_sqrt_node_large_lambda_gives_zero():
    data = random_data(30, 6, 2)
    xj, Xc = data.X[:, 2], np.delete(data.X, 2, axis=1)
    g = NormSpec.l1(5)
    lam0 = N.dual(g, Xc.T @ xj / np.linalg.norm(xj))
    fit = fit_sqrt_node(data, 2, g, lam0 * 1.001)
    assert np.all(fit.Gamma == 0)
    assert fit.kkt_gap <= 1e-7


def test_sqrt_node_exact_recovery():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((25, 4))
    X[:, 0] = 1.7 * X[:, 2]
    fit = fit_sqrt_node(Dataset(X, np.zeros(25)), 0, NormSpec.l1(4), 1e-6)
    np.testing.assert_allclose(fit.Gamma[:, 0], [0, 1.7, 0], atol=1e-4)


def test_sqrt_node_certificate():
    data = random_data(40, 10, 7)
    for fw, norm in ((Framework.GAUGE, NormSpec.wedge(10)), (Framework.OMEGA, NormSpec.wedge(10))):
        fit = fit_sqrt_node(data, 3, column_norm(norm, fw), 2.0, framework=fw)
        assert fit.converged
        assert fit.complement == (0, 1, 2, 4, 5, 6, 7, 8, 9)
        # advisory only for the omega framework and a non-prefix set
        assert bool(fit.advisory) == (fw is Framework.OMEGA)


def test_multivariate_matches_sqrt_node():
    rng = np.random.default_rng(11)
    worst = 0.0
    for k in range(50):
        n, p = 20, 6
        data = Dataset(rng.standard_normal((n, p)), np.zeros(n))
        norm = NormSpec.l1(p) if k % 2 else NormSpec.wedge(p)
        lam = rng.uniform(0.2, 2.0)
        a = fit_sqrt_node(data, k % p, norm, lam)
        b = fit_multivariate(data, [k % p], norm, lam)
        worst = max(worst, abs(a.objective - b.objective) / max(a.objective, 1.0))
    assert worst <= 1e-6


def test_multivariate_orthogonal_blocks():
    rng = np.random.default_rng(4)
    Q, _ = np.linalg.qr(rng.standard_normal((30, 5)))
    fit = fit_multivariate(Dataset(Q, np.zeros(30)), [0, 1], NormSpec.l1(5), 0.1)
    assert np.all(fit.Gamma == 0)


def test_multivariate_random_search_oracle():
    rng = np.random.default_rng(8)
    n, p, J = 20, 4, [0, 1]
    X = rng.standard_normal((n, p))
    data = Dataset(X, np.zeros(n))
    lam = 0.8
    fit = fit_multivariate(data, J, NormSpec.l1(p), lam)
    XJ, Xc = X[:, J], X[:, [2, 3]]

    def objective(B):
        return nuclear_norm(XJ - Xc @ B) + lam * np.abs(B).sum()

    ls = np.linalg.lstsq(Xc, XJ, rcond=None)[0]
    best = np.inf
    for _ in range(100000 // 100):
        draws = ls * rng.uniform(-0.5, 1.5, (100, 2, 2))
        draws *= rng.uniform(size=(100, 2, 2)) < 0.7
        for B in draws:
            best = min(best, objective(B))
    assert fit.objective <= best + 1e-4
    assert fit.kkt_gap <= 1e-6


def test_multivariate_errors():
    data = random_data(10, 4, 0)
    with pytest.raises(DataError):
        fit_multivariate(data, [], NormSpec.l1(4), 1.0)
    with pytest.raises(DataError):
        fit_multivariate(data, [0, 1, 2, 3], NormSpec.l1(4), 1.0)
    with pytest.raises(DataError):
        fit_sqrt_node(data, 0, NormSpec.l1(4), -1.0)
