import numpy as np
import pytest
from scipy import linalg

from structinfer import DataError, NormKind, NormSpec, SingularMatrixError
from structinfer.precision import (
    PrecisionCache,
    PrecisionFit,
    build_precision,
    cache_key,
    fit_precision,
    nodewise_sweep,
)
from structinfer.solvers import Dataset, Framework, column_norm, fit_multivariate, fit_sqrt_node


def design(n, p, seed):
    return Dataset(np.random.default_rng(seed).standard_normal((n, p)), np.zeros(n))


def test_orthonormal_block():
    rng = np.random.default_rng(0)
    n = 40
    Q, _ = np.linalg.qr(rng.standard_normal((n, 4)))
    data = Dataset(np.sqrt(n) * Q, np.zeros(n))
    prec = build_precision(data, fit_multivariate(data, [0, 2], NormSpec.l1(4), 0.5))
    np.testing.assert_allclose(prec.T_J, np.eye(2), atol=1e-12)
    np.testing.assert_allclose(prec.Sigma_J, np.eye(2), atol=1e-12)
    np.testing.assert_allclose(prec.M, np.sqrt(n) * np.eye(2), atol=1e-10)


def test_scalar_specialization():
    data = design(30, 5, 1)
    prec = build_precision(data, fit_sqrt_node(data, 1, NormSpec.l1(5), 1.0))
    m = np.sqrt(30) * prec.T_J[0, 0] / np.sqrt(prec.Sigma_J[0, 0])
    assert prec.M[0, 0] == pytest.approx(m, rel=1e-12)


def test_m_matches_dense_oracle():
    data = design(50, 6, 2)
    prec = fit_precision(data, [1, 4], NormSpec.wedge(6), Framework.GAUGE, 1.5)
    R = data.X[:, [1, 4]] - data.X[:, list(prec.complement)] @ prec.Gamma
    T = R.T @ data.X[:, [1, 4]] / 50
    S = R.T @ R / 50
    M = np.sqrt(50) * np.real(linalg.inv(linalg.sqrtm(S))) @ T
    np.testing.assert_allclose(prec.M, M, atol=1e-10)
    # M^T M = n T^T Sigma^{-1} T
    np.testing.assert_allclose(prec.M.T @ prec.M, 50 * T.T @ np.linalg.solve(S, T), rtol=1e-9)


def test_sweep_orthogonal_design():
    rng = np.random.default_rng(3)
    n, p = 30, 5
    Q, _ = np.linalg.qr(rng.standard_normal((n, p)))
    c = np.array([1.0, 2.0, 0.5, 3.0, 1.5])
    data = Dataset(np.sqrt(n) * Q * c, np.zeros(n))
    fits = nodewise_sweep(data, NormSpec.wedge(p), Framework.GAUGE, 0.5)
    assert [f.J for f in fits] == [(j,) for j in range(p)]
    for j, f in enumerate(fits):
        assert np.all(f.Gamma == 0)
        assert f.M[0, 0] == pytest.approx(np.sqrt(n) * c[j], rel=1e-10)


def test_framework_column_norms():
    w = NormSpec.wedge(6)
    assert column_norm(w, Framework.GAUGE).kind is NormKind.L1
    assert column_norm(w, Framework.OMEGA) == w


def test_l1_frameworks_coincide():
    data = design(40, 8, 4)
    a = nodewise_sweep(data, NormSpec.l1(8), Framework.GAUGE, 1.0)
    b = nodewise_sweep(data, NormSpec.l1(8), Framework.OMEGA, 1.0)
    for fa, fb in zip(a, b):
        np.testing.assert_allclose(fa.Gamma, fb.Gamma, atol=1e-12)


def test_sweep_threads_match_serial():
    data = design(30, 6, 5)
    a = nodewise_sweep(data, NormSpec.wedge(6), Framework.OMEGA, 1.0)
    b = nodewise_sweep(data, NormSpec.wedge(6), Framework.OMEGA, 1.0, threads=3)
    for fa, fb in zip(a, b):
        np.testing.assert_array_equal(fa.Gamma, fb.Gamma)


def test_advisory_for_non_allowed_sets():
    data = design(30, 5, 6)
    fits = nodewise_sweep(data, NormSpec.wedge(5), Framework.OMEGA, 1.0)
    assert fits[0].advisory == ""
    assert all("not an allowed set" in f.advisory for f in fits[1:])
    fits = nodewise_sweep(data, NormSpec.wedge(5), Framework.GAUGE, 1.0)
    assert all(f.advisory == "" for f in fits)


def test_cache_hits_and_json(tmp_path):
    data = design(25, 4, 7)
    cache = PrecisionCache(directory=str(tmp_path))
    a = nodewise_sweep(data, NormSpec.wedge(4), Framework.GAUGE, 1.0, cache=cache)
    b = nodewise_sweep(data, NormSpec.wedge(4), Framework.GAUGE, 1.0, cache=cache)
    assert cache.hits == 1 and cache.misses == 1
    assert all(fa is fb for fa, fb in zip(a, b))
    fresh = PrecisionCache(directory=str(tmp_path))
    c = nodewise_sweep(data, NormSpec.wedge(4), Framework.GAUGE, 1.0, cache=fresh)
    assert fresh.hits == 1
    for fa, fc in zip(a, c):
        np.testing.assert_array_equal(fa.M, fc.M)
        assert fc.norm_json == NormSpec.wedge(4).to_json()
    # the key depends on the penalty level
    assert cache_key(data.X, NormSpec.wedge(4), "gauge", 1.0) != cache_key(data.X, NormSpec.wedge(4), "gauge", 2.0)


def test_precision_json_round_trip():
    data = design(30, 5, 8)
    prec = fit_precision(data, [0, 3], NormSpec.l1(5), "omega", 0.7)
    back = PrecisionFit.from_json(prec.to_json())
    np.testing.assert_array_equal(back.Gamma, prec.Gamma)
    np.testing.assert_array_equal(back.M, prec.M)
    assert back.framework is Framework.OMEGA
    assert back.complement == prec.complement


def test_singular_sigma_names_matrix():
    X = design(20, 4, 9).X.copy()
    X[:, 1] = X[:, 0]
    data = Dataset(X, np.zeros(20))
    mv = fit_multivariate(data, [0, 1], NormSpec.l1(4), 0.5)
    with pytest.raises(SingularMatrixError) as err:
        build_precision(data, mv)
    assert err.value.matrix_name == "Sigma_J"


def test_sweep_attaches_coordinate():
    X = design(20, 4, 10).X.copy()
    X[:, 2] = 0.0
    data = Dataset(X, np.zeros(20))
    with pytest.raises(DataError) as err:
        nodewise_sweep(data, NormSpec.l1(4), Framework.GAUGE, 1.0)
    assert err.value.coordinate == 2
    fits = nodewise_sweep(data, NormSpec.l1(4), Framework.GAUGE, 1.0, skip_failed=True)
    assert fits[2] is None and all(f is not None for k, f in enumerate(fits) if k != 2)
