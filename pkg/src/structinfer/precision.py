"""Precision-matrix surrogates from nodewise (|J|-wise) regressions.

For a target set J with nodewise coefficients Gamma (rows on J^c) the
residual matrix is ``R = X_J - X_{J^c} Gamma`` and

    T_J     = R^T X_J / n
    Sigma_J = R^T R / n
    M       = sqrt(n) Sigma_J^{-1/2} T_J
"""

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError, SingularMatrixError
from .norms import NormSpec
from .solvers import Framework, SolverOptions, column_norm, fit_multivariate, fit_sqrt_node


@dataclass(frozen=True, eq=False)
class PrecisionFit:
    """Surrogate quantities for one target set J.

    `Gamma` has shape (|J^c|, |J|) with rows indexed by `complement`.
    """

    J: tuple
    Gamma: np.ndarray
    T_J: np.ndarray
    Sigma_J: np.ndarray
    M: np.ndarray
    framework: Framework
    lambda_J: float
    complement: tuple
    kkt_gap: float = 0.0
    converged: bool = True
    dual_exact: bool = True
    advisory: str = ""
    norm_json: str = field(default="", repr=False)

    def residual(self, X):
        return X[:, list(self.J)] - X[:, list(self.complement)] @ self.Gamma

    def to_dict(self):
        return {
            "J": list(self.J),
            "complement": list(self.complement),
            "Gamma": self.Gamma.tolist(),
            "T_J": self.T_J.tolist(),
            "Sigma_J": self.Sigma_J.tolist(),
            "M": self.M.tolist(),
            "framework": self.framework.value,
            "lambda_J": self.lambda_J,
            "kkt_gap": self.kkt_gap,
            "converged": self.converged,
            "dual_exact": self.dual_exact,
            "advisory": self.advisory,
            "norm": self.norm_json,
        }

    @classmethod
    def from_dict(cls, d):
        m = len(d["J"])
        shapes = {"Gamma": (len(d["complement"]), m)}

        def mat(key):
            return np.array(d[key], dtype=float).reshape(shapes.get(key, (m, m)))

        return cls(
            J=tuple(d["J"]),
            Gamma=mat("Gamma"),
            T_J=mat("T_J"),
            Sigma_J=mat("Sigma_J"),
            M=mat("M"),
            framework=Framework.parse(d["framework"]),
            lambda_J=float(d["lambda_J"]),
            complement=tuple(d["complement"]),
            kkt_gap=float(d.get("kkt_gap", 0.0)),
            converged=bool(d.get("converged", True)),
            dual_exact=bool(d.get("dual_exact", True)),
            advisory=d.get("advisory", ""),
            norm_json=d.get("norm", ""),
        )

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def inverse_sqrt(S, name="Sigma_J", floor_rel=1e-12):
    """Symmetric inverse square root by eigendecomposition.

    Raises
    ------
    SingularMatrixError
        If the smallest eigenvalue is at most ``floor_rel`` times the largest.
    """
    S = 0.5 * (S + S.T)
    w, U = np.linalg.eigh(S)
    if w[-1] <= 0 or w[0] <= floor_rel * w[-1]:
        raise SingularMatrixError(f"{name} is singular (eigenvalues {w[0]:.3g}..{w[-1]:.3g})", name)
    return (U / np.sqrt(w)) @ U.T


def build_precision(data, mv):
    """Form T_J, Sigma_J and M from a nodewise fit on `data`."""
    n = data.n
    J = list(mv.J)
    comp = list(mv.complement)
    if len(J) + len(comp) != data.p or mv.Gamma.shape != (len(comp), len(J)):
        raise DataError("nodewise fit does not match the data dimensions")
    XJ = data.X[:, J]
    R = XJ - data.X[:, comp] @ mv.Gamma
    T = R.T @ XJ / n
    Sigma = R.T @ R / n
    inv_half = inverse_sqrt(Sigma, "Sigma_J")
    sv = np.linalg.svd(T, compute_uv=False)
    if sv[-1] <= 1e-12 * max(sv[0], 1e-300):
        raise SingularMatrixError("T_J is singular", "T_J")
    M = np.sqrt(n) * inv_half @ T
    return PrecisionFit(
        J=tuple(J),
        Gamma=mv.Gamma,
        T_J=T,
        Sigma_J=Sigma,
        M=M,
        framework=mv.framework,
        lambda_J=mv.lambda_J,
        complement=tuple(comp),
        kkt_gap=mv.kkt_gap,
        converged=mv.converged,
        dual_exact=mv.dual_exact,
        advisory=mv.advisory,
    )


def fit_precision(data, J, norm, framework, lambda_J, opts=None):
    """Nodewise fit plus surrogate for an arbitrary target set J.

    The column penalty is the gauge of `norm` (GAUGE) or `norm` itself
    (OMEGA), restricted to J^c.
    """
    framework = Framework.parse(framework)
    colnorm = column_norm(norm, framework)
    J = sorted(int(j) for j in J)
    if len(J) == 1:
        mv = fit_sqrt_node(data, J[0], colnorm, lambda_J, opts, framework=framework)
    else:
        mv = fit_multivariate(data, J, colnorm, lambda_J, framework, opts)
    return replace(build_precision(data, mv), norm_json=norm.to_json())


def cache_key(X, norm, framework, lambda_J, opts=None):
    """Content hash of everything a nodewise sweep depends on."""
    X = np.ascontiguousarray(X, dtype=float)
    h = hashlib.sha256()
    h.update(str(X.shape).encode())
    h.update(X.tobytes())
    h.update(norm.to_json().encode())
    h.update(Framework.parse(framework).value.encode())
    h.update(repr(float(lambda_J)).encode())
    h.update(repr(opts or SolverOptions()).encode())
    return h.hexdigest()


class PrecisionCache:
    """Nodewise sweep results keyed by `cache_key`.

    Held in memory and optionally mirrored to JSON files in `directory`.
    One writer fills an entry; readers only use completed entries.
    """

    def __init__(self, directory=None):
        self.directory = directory
        self._store = {}
        self.hits = 0
        self.misses = 0

    def _path(self, key):
        return os.path.join(self.directory, f"precision-{key[:32]}.json")

    def get(self, key):
        if key in self._store:
            self.hits += 1
            return self._store[key]
        if self.directory:
            path = self._path(key)
            if os.path.exists(path):
                with open(path) as fh:
                    fits = [None if d is None else PrecisionFit.from_dict(d) for d in json.load(fh)]
                self._store[key] = fits
                self.hits += 1
                return fits
        self.misses += 1
        return None

    def put(self, key, fits):
        self._store[key] = list(fits)
        if self.directory:
            os.makedirs(self.directory, exist_ok=True)
            tmp = self._path(key) + ".tmp"
            with open(tmp, "w") as fh:
                json.dump([None if f is None else f.to_dict() for f in fits], fh)
            os.replace(tmp, self._path(key))

    def __len__(self):
        return len(self._store)


def nodewise_sweep(data, norm, framework, lambda_J, opts=None, *, cache=None, threads=1,
                   skip_failed=False):
    """Pointwise surrogates for every coordinate j = 0..p-1.

    Results depend on X only (never on Y), so a `cache` may be shared across
    responses drawn for the same design. With ``skip_failed=True`` a failing
    coordinate yields None in its slot instead of raising.

    Raises
    ------
    SingularMatrixError, DataError
        From the failing coordinate, with ``coordinate`` set on the exception.
    """
    if not isinstance(norm, NormSpec):
        raise DataError("nodewise_sweep needs a NormSpec")
    if norm.p != data.p:
        raise DataError(f"norm dimension {norm.p} does not match {data.p} columns")
    framework = Framework.parse(framework)
    key = None
    if cache is not None:
        key = cache_key(data.X, norm, framework, lambda_J, opts) + ("-skip" if skip_failed else "")
        hit = cache.get(key)
        if hit is not None:
            return hit

    colnorm = column_norm(norm, framework)
    norm_json = norm.to_json()

    def one(j):
        try:
            mv = fit_sqrt_node(data, j, colnorm, lambda_J, opts, framework=framework)
            prec = build_precision(data, mv)
        except (SingularMatrixError, DataError):
            if skip_failed:
                return None
            raise
        return replace(prec, norm_json=norm_json)

    def checked(j):
        try:
            return one(j)
        except SingularMatrixError as exc:
            err = SingularMatrixError(f"coordinate {j}: {exc}", exc.matrix_name)
            err.coordinate = j
            raise err from exc
        except DataError as exc:
            err = DataError(f"coordinate {j}: {exc}")
            err.coordinate = j
            raise err from exc

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            fits = list(pool.map(checked, range(data.p)))
    else:
        fits = [checked(j) for j in range(data.p)]
    if cache is not None:
        cache.put(key, fits)
    return fits
