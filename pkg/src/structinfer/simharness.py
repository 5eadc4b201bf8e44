"""Monte Carlo coverage experiments on Toeplitz Gaussian designs.

Randomness comes from counter-based Philox streams keyed by
``(seed, tag, index)``; tags separate the design, the noise of the main
repetitions and the pilot noise used to locate penalty levels. Gaussian
variates are produced by inverse-CDF from the top 53 bits of each raw 64-bit
word, so every stream is reproducible independently of the others.
"""

import csv
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import special

from . import norms as _norms
from .errors import DataError, SingularMatrixError
from .inference import PointwiseBasis, SigmaMode, lambda_m, normal_quantile, sigma_estimate
from .norms import NormSpec
from .precision import PrecisionCache, nodewise_sweep
from .solvers import Dataset, Framework, column_norm, fit_penalized, lipschitz_gram

TAG_DESIGN = 1
TAG_NOISE = 2
TAG_PILOT = 3

MAIN_MULTIPLIERS = (0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0)
NODE_MULTIPLIERS = (0.05, 0.1, 0.2, 0.5, 1.0)


class CounterStream:
    """Gaussian stream on a Philox4x64 counter generator.

    The 128-bit key packs the 64-bit seed with a 32-bit tag and a 32-bit
    index, so distinct ``(tag, index)`` pairs never share counters.
    """

    def __init__(self, seed, tag, index=0):
        seed = int(seed)
        if not 0 <= seed < 2 ** 64:
            raise DataError("seed must be a 64-bit unsigned integer")
        if not (0 <= tag < 2 ** 32 and 0 <= index < 2 ** 32):
            raise DataError("stream tag and index must fit in 32 bits")
        self.key = seed | (int(index) << 64) | (int(tag) << 96)
        self._bitgen = np.random.Philox(key=self.key)

    def uniform(self, size):
        n = int(np.prod(size))
        raw = self._bitgen.random_raw(n)
        u = ((raw >> np.uint64(11)).astype(float) + 0.5) * 2.0 ** -53
        return u.reshape(size)

    def standard_normal(self, size):
        return special.ndtri(self.uniform(size))


def toeplitz_cov(p, rho):
    idx = np.arange(p)
    return rho ** np.abs(np.subtract.outer(idx, idx))


def toeplitz_design(n, p, rho, rng):
    """Rows i.i.d. N(0, Sigma) with ``Sigma_ij = rho^|i-j|``.

    `rng` is anything with ``standard_normal(shape)``.
    """
    if not 0.0 <= rho < 1.0:
        raise DataError("rho must lie in [0, 1)")
    try:
        chol = np.linalg.cholesky(toeplitz_cov(p, rho))
    except np.linalg.LinAlgError:
        raise SingularMatrixError("Toeplitz covariance is not positive definite", "Sigma") from None
    return rng.standard_normal((n, p)) @ chol.T


def make_beta0(p, s0):
    """``(4, 4 - 2/(s0-1), ..., 2)`` on the first s0 coordinates, zero elsewhere."""
    if not (isinstance(s0, (int, np.integer)) and 2 <= s0 <= p):
        raise DataError(f"s0 must be an integer in [2, p], got {s0!r}")
    beta = np.zeros(p)
    beta[:s0] = np.linspace(4.0, 2.0, s0)
    return beta


def _parse_norm(value, p):
    if isinstance(value, NormSpec):
        return value
    if value is None:
        return NormSpec.wedge(p)
    if isinstance(value, str):
        kind = _norms.NormKind.parse(value)
        if kind is _norms.NormKind.WEDGE:
            return NormSpec.wedge(p)
        if kind is _norms.NormKind.L1:
            return NormSpec.l1(p)
        if kind is _norms.NormKind.LORENTZ:
            return NormSpec.lorentz(p)
        raise DataError(f"norm kind {value!r} needs a full specification")
    if isinstance(value, dict):
        return NormSpec.from_dict(value)
    raise DataError(f"cannot interpret norm {value!r}")


@dataclass(frozen=True)
class SimulationConfig:
    """One simulation cell.

    ``lambda_main`` is on the ``||Y - X b||^2 / n`` loss scale and
    ``lambda_node`` on the ``||x_j - X_{-j} g||_2`` scale of the nodewise
    fits. None for either means "to be located" (see `locate_lambdas`).
    """

    n: int = 100
    p: int = 150
    rho: float = 0.9
    s0: int = 5
    r: int = 100
    alpha: float = 0.05
    lambda_main: float = None
    lambda_node: float = None
    norm: NormSpec = None
    framework: Framework = Framework.GAUGE
    sigma_mode: SigmaMode = SigmaMode.KNOWN
    sigma0: float = 1.0
    fixed_design: bool = True
    seed: int = 0
    threads: int = 1
    diagnostics: bool = True

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "framework", Framework.parse(self.framework))
        set_(self, "sigma_mode", SigmaMode.parse(self.sigma_mode))
        set_(self, "norm", _parse_norm(self.norm, self.p))
        if self.n < 2:
            raise DataError("n must be at least 2")
        if not 2 <= self.s0 <= self.p:
            raise DataError("need p >= s0 >= 2")
        if not 0.0 < self.rho < 1.0:
            raise DataError("rho must lie in (0, 1)")
        if not 0.0 < self.alpha < 1.0:
            raise DataError("alpha must lie in (0, 1)")
        if self.r < 1:
            raise DataError("r must be at least 1")
        if self.norm.p != self.p:
            raise DataError("norm dimension must equal p")
        if not self.sigma0 > 0:
            raise DataError("sigma0 must be positive")
        for name in ("lambda_main", "lambda_node"):
            val = getattr(self, name)
            if val is not None and not (np.isfinite(val) and val > 0):
                raise DataError(f"{name} must be positive")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise DataError("seed must be a 64-bit unsigned integer")

    @property
    def beta0(self):
        return make_beta0(self.p, self.s0)

    def to_dict(self):
        d = asdict(self)
        d["norm"] = self.norm.to_dict()
        d["framework"] = self.framework.value
        d["sigma_mode"] = self.sigma_mode.value
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise DataError(f"unknown simulation keys: {sorted(extra)}")
        d = dict(d)
        for key in ("n", "p", "s0", "r", "seed", "threads"):
            if key in d:
                d[key] = int(d[key])
        for key in ("lambda_main", "lambda_node"):
            if d.get(key) in ("auto", "", None):
                d[key] = None
        return cls(**d)


def design_for(cfg, rep=0):
    """Design matrix of repetition `rep` (always stream 0 for a fixed design)."""
    index = 0 if cfg.fixed_design else rep
    return toeplitz_design(cfg.n, cfg.p, cfg.rho, CounterStream(cfg.seed, TAG_DESIGN, index))


def noise_for(cfg, rep, tag=TAG_NOISE):
    return cfg.sigma0 * CounterStream(cfg.seed, tag, rep).standard_normal(cfg.n)


@dataclass
class SimulationResult:
    """Aggregated coverage and length per coordinate plus run logs.

    ``coverage[j]`` and ``avg_length[j]`` are means over the repetitions whose
    main fit converged; they are NaN for coordinates whose nodewise fit
    failed (listed in `failed_cells`).
    """

    config: SimulationConfig
    coverage: np.ndarray
    avg_length: np.ndarray
    valid_reps: int
    failed_reps: list
    failed_cells: list
    raw_log: list = field(repr=False)
    diagnostics: list = field(repr=False)
    wall_time: float = 0.0
    nodewise_unconverged: int = 0

    def _mean(self, values, active):
        idx = np.arange(self.config.s0) if active else np.arange(self.config.s0, self.config.p)
        vals = values[idx]
        vals = vals[np.isfinite(vals)]
        return float(np.mean(vals)) if vals.size else float("nan")

    @property
    def coverage_active(self):
        return self._mean(self.coverage, True)

    @property
    def coverage_inactive(self):
        return self._mean(self.coverage, False)

    @property
    def length_active(self):
        return self._mean(self.avg_length, True)

    @property
    def length_inactive(self):
        return self._mean(self.avg_length, False)

    @property
    def bound_violations(self):
        """Repetitions where the framework's remainder bound failed somewhere."""
        key = "violations_thm1" if self.config.framework is Framework.GAUGE else "violations_thm2"
        return sum(1 for d in self.diagnostics if d[key] > 0)

    def summary(self):
        return {
            "framework": self.config.framework.value,
            "s0": self.config.s0,
            "lambda_main": self.config.lambda_main,
            "lambda_node": self.config.lambda_node,
            "coverage_active": self.coverage_active,
            "coverage_inactive": self.coverage_inactive,
            "length_active": self.length_active,
            "length_inactive": self.length_inactive,
            "valid_reps": self.valid_reps,
            "failed_reps": len(self.failed_reps),
            "failed_cells": len(self.failed_cells),
            "bound_violations": self.bound_violations,
        }


class _DesignState:
    """Design-level quantities shared by all repetitions on one X."""

    def __init__(self, cfg, X, cache):
        self.X = X
        self.lipschitz = lipschitz_gram(X)
        data = Dataset(X, np.zeros(cfg.n))
        self.fits = nodewise_sweep(data, cfg.norm, cfg.framework, cfg.lambda_node,
                                   cache=cache, threads=cfg.threads, skip_failed=True)
        self.ok = np.array([f is not None for f in self.fits])
        good = [f for f in self.fits if f is not None]
        self.unconverged = sum(1 for f in good if not f.converged)
        p = cfg.p
        self.R = np.zeros((cfg.n, p))
        self.T = np.ones(p)
        self.M = np.ones(p)
        self.lam = np.full(p, np.nan)
        self.gap = np.full(p, np.inf)
        for j, f in enumerate(self.fits):
            if f is None:
                continue
            self.R[:, j] = f.residual(X)[:, 0]
            self.T[j] = f.T_J[0, 0]
            self.M[j] = f.M[0, 0]
            self.lam[j] = f.lambda_J
            self.gap[j] = f.kkt_gap
        self.basis = PointwiseBasis(R=self.R, T=self.T, M=self.M)
        self.rnorm = np.sqrt(np.sum(self.R ** 2, axis=0))
        self.rnorm[~self.ok] = 1.0
        # (R^T X)_{jj} = n T_j, used to drop coordinate j from R^T X delta
        self.RtX_diag = cfg.n * self.T
        self.gauge = _norms.gauge_of(cfg.norm)
        self.colnorm = column_norm(cfg.norm, cfg.framework)


def _main_key(cfg, rep):
    return (cfg.seed, cfg.n, cfg.p, cfg.rho, cfg.s0, cfg.sigma0, cfg.fixed_design,
            cfg.lambda_main, cfg.norm.to_json(), rep)


def _restricted_values(norm, delta, ok):
    """``norm(delta with coordinate j zeroed)`` for every j."""
    out = np.full(delta.shape[0], np.nan)
    work = delta.copy()
    for j in np.flatnonzero(ok):
        work[j] = 0.0
        out[j] = _norms.evaluate(norm, work)
        work[j] = delta[j]
    return out


def _diagnose(cfg, state, data, fit, eps, b):
    """Remainder identity and bounds for every pointwise set of one repetition."""
    beta0 = cfg.beta0
    ok = state.ok
    delta = fit.beta_hat - beta0
    # rem_j = lambda_j Z_j^T (beta0 - beta_hat)_{-j} with
    # Z_j = X_{-j}^T r_j / (||r_j|| lambda_j)
    RtXd = state.R.T @ (data.X @ (-delta))
    rem = (RtXd - state.RtX_diag * (-delta)) / state.rnorm
    gaussian = (state.R.T @ eps) / state.rnorm
    lhs = state.M * (b - beta0)
    identity = np.abs(lhs - gaussian - rem)[ok]
    actual = np.abs(rem) / cfg.sigma0

    infl = 1.0 + state.gap
    g_vals = _restricted_values(state.gauge, delta, ok)
    bound1 = state.lam * g_vals / cfg.sigma0
    direct_vals = g_vals if state.colnorm.to_json() == state.gauge.to_json() else _restricted_values(state.colnorm, delta, ok)
    bound_direct = state.lam * direct_vals / cfg.sigma0
    s_ref = np.arange(cfg.s0)
    if _norms.is_allowed(cfg.norm, s_ref):
        ups = _norms.upsilon(cfg.norm, s_ref, delta)
        c_s = _norms.c_constant(cfg.norm, s_ref)
        bound2 = 2.0 * state.lam * c_s * ups / cfg.sigma0
        lam_m = lambda_m(data, eps, cfg.norm, s_ref)
    else:
        ups = float("nan")
        bound2 = np.full(cfg.p, np.nan)
        lam_m = float("nan")
    slack = 1e-12 * (1.0 + actual + bound_direct)
    a, i1, i2, idd = actual[ok], (bound1 * infl + slack)[ok], (bound2 * infl + slack)[ok], (bound_direct * infl + slack)[ok]
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio1 = np.where(bound1[ok] > 0, a / bound1[ok], np.where(a > 0, np.inf, 0.0))
    return {
        "identity_max": float(np.max(identity)) if identity.size else float("nan"),
        "rem_max": float(np.max(a)) if a.size else float("nan"),
        "ratio_thm1_max": float(np.max(ratio1)) if ratio1.size else float("nan"),
        "violations_thm1": int(np.sum(a > i1)),
        "violations_thm2": int(np.sum(a > i2)),
        "violations_direct": int(np.sum(a > idd)),
        "lambda_m": float(lam_m),
        "upsilon_delta": float(ups),
    }


def _run_rep(cfg, state, rep, main_cache, z):
    beta0 = cfg.beta0
    eps = noise_for(cfg, rep)
    Y = state.X @ beta0 + eps
    data = Dataset(state.X, Y)
    key = _main_key(cfg, rep)
    fit = main_cache.get(key) if main_cache is not None else None
    if fit is None:
        fit = fit_penalized(data, cfg.norm, cfg.lambda_main, lipschitz=state.lipschitz)
        if main_cache is not None:
            main_cache[key] = fit
    out = {"rep": rep, "fit": fit, "ok": bool(fit.converged)}
    if not fit.converged:
        return out
    if cfg.sigma_mode is SigmaMode.KNOWN:
        sigma_hat = cfg.sigma0
    else:
        sigma_hat = sigma_estimate(data, fit, SigmaMode.PLUGIN)
    b = state.basis.desparsify(data, fit.beta_hat)
    half = z * sigma_hat / np.abs(state.M)
    covered = np.abs(b - beta0) <= half
    out.update(b=b, half=half, covered=covered, sigma_hat=sigma_hat)
    if cfg.diagnostics:
        out["diag"] = _diagnose(cfg, state, data, fit, eps, b)
    return out


def run_scenario(cfg, *, cache=None, main_cache=None):
    """Coverage and length of pointwise intervals over `cfg.r` repetitions.

    Parameters
    ----------
    cache : PrecisionCache, optional
        Shares nodewise sweeps across calls with the same design.
    main_cache : dict, optional
        Shares main fits between calls that differ only in the nodewise
        settings (e.g. the two frameworks).

    Returns
    -------
    SimulationResult
    """
    if cfg.lambda_main is None or cfg.lambda_node is None:
        raise DataError("run_scenario needs lambda_main and lambda_node; use locate_lambdas first")
    t0 = time.perf_counter()
    cache = cache if cache is not None else PrecisionCache()
    z = normal_quantile(1.0 - cfg.alpha / 2.0)
    p = cfg.p
    beta0 = cfg.beta0
    cover_sum = np.zeros(p)
    len_sum = np.zeros(p)
    valid = 0
    failed_reps = []
    raw = []
    diags = []
    failed_cells = set()
    unconverged = 0

    states = {}

    def state_for(rep):
        index = 0 if cfg.fixed_design else rep
        if index not in states:
            if not cfg.fixed_design:
                states.clear()
            states[index] = _DesignState(cfg, design_for(cfg, rep), cache)
        return states[index]

    if cfg.fixed_design:
        state = state_for(0)
        unconverged = state.unconverged
        if cfg.threads and cfg.threads > 1:
            with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
                outs = list(pool.map(lambda k: _run_rep(cfg, state, k, main_cache, z), range(cfg.r)))
        else:
            outs = (_run_rep(cfg, state, k, main_cache, z) for k in range(cfg.r))
    else:
        def gen():
            nonlocal unconverged
            for k in range(cfg.r):
                st = state_for(k)
                unconverged += st.unconverged
                yield st, _run_rep(cfg, st, k, main_cache, z)

        outs = gen()

    # ordered reduction: results never depend on completion order
    for item in outs:
        if isinstance(item, tuple):
            st, out = item
        else:
            st, out = state, item
        rep = out["rep"]
        fit = out["fit"]
        failed_cells.update(np.flatnonzero(~st.ok).tolist())
        if not out["ok"]:
            failed_reps.append(rep)
            diags.append(_diag_row(cfg, rep, fit, None, None))
            continue
        ok = st.ok
        valid += 1
        cover_sum[ok] += out["covered"][ok]
        len_sum[ok] += 2.0 * out["half"][ok]
        for j in np.flatnonzero(ok):
            raw.append((rep, int(j), float(beta0[j]), float(out["b"][j]), float(out["half"][j]),
                        int(out["covered"][j]), float(out["sigma_hat"])))
        diags.append(_diag_row(cfg, rep, fit, out.get("diag"), out["sigma_hat"]))

    with np.errstate(invalid="ignore", divide="ignore"):
        coverage = np.where(valid > 0, cover_sum / max(valid, 1), np.nan)
        avg_length = np.where(valid > 0, len_sum / max(valid, 1), np.nan)
    for j in failed_cells:
        coverage[j] = np.nan
        avg_length[j] = np.nan
    return SimulationResult(
        config=cfg,
        coverage=coverage,
        avg_length=avg_length,
        valid_reps=valid,
        failed_reps=failed_reps,
        failed_cells=sorted(failed_cells),
        raw_log=raw,
        diagnostics=diags,
        wall_time=time.perf_counter() - t0,
        nodewise_unconverged=unconverged,
    )


def _diag_row(cfg, rep, fit, diag, sigma_hat):
    row = {
        "rep": rep,
        "framework": cfg.framework.value,
        "main_converged": int(fit.converged),
        "main_kkt_gap": fit.kkt_gap,
        "sigma_hat": float("nan") if sigma_hat is None else sigma_hat,
    }
    keys = ("identity_max", "rem_max", "ratio_thm1_max", "violations_thm1", "violations_thm2",
            "violations_direct", "lambda_m", "upsilon_delta")
    for k in keys:
        row[k] = (diag or {}).get(k, float("nan") if not k.startswith("violations") else 0)
    return row


@dataclass
class ComparisonReport:
    gauge: SimulationResult
    omega: SimulationResult

    @property
    def length_ratio(self):
        """Per-coordinate omega / gauge average length."""
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.omega.avg_length / self.gauge.avg_length

    @property
    def active_length_ratio(self):
        return self.omega.length_active / self.gauge.length_active

    def rows(self):
        ratio = self.length_ratio
        for j in range(self.gauge.config.p):
            yield (j, self.gauge.coverage[j], self.omega.coverage[j], self.gauge.avg_length[j],
                   self.omega.avg_length[j], ratio[j], int(j < self.gauge.config.s0))


def _check_paired(cfg_a, cfg_b):
    da, db = cfg_a.to_dict(), cfg_b.to_dict()
    for k in ("framework", "lambda_node", "threads"):
        da.pop(k)
        db.pop(k)
    if da != db:
        diff = sorted(k for k in da if da[k] != db[k])
        raise DataError(f"paired configs differ in {diff}")


def compare_frameworks(cfg_gauge, cfg_omega, *, cache=None, main_cache=None):
    """Run both frameworks on identical designs, noise and main fits."""
    cfg_gauge = replace(cfg_gauge, framework=Framework.GAUGE)
    cfg_omega = replace(cfg_omega, framework=Framework.OMEGA)
    _check_paired(cfg_gauge, cfg_omega)
    cache = cache if cache is not None else PrecisionCache()
    main_cache = main_cache if main_cache is not None else {}
    gauge = run_scenario(cfg_gauge, cache=cache, main_cache=main_cache)
    omega = run_scenario(cfg_omega, cache=cache, main_cache=main_cache)
    return ComparisonReport(gauge=gauge, omega=omega)


@dataclass
class LambdaChoice:
    lambda_main: float
    lambda_node: dict
    table: list


def locate_lambdas(cfg, main_base, node_base, *, r_pilot=20, main_multipliers=MAIN_MULTIPLIERS,
                   node_multipliers=NODE_MULTIPLIERS, frameworks=(Framework.GAUGE, Framework.OMEGA),
                   cache=None):
    """Pick penalty levels on pilot noise that the main runs never see.

    Stage one chooses ``lambda_main = m * main_base`` minimizing the mean
    squared estimation error over `r_pilot` pilot repetitions. Stage two
    chooses, per framework, ``lambda_node = m * node_base[framework]`` whose
    pilot coverage averaged over the active coordinates is closest to
    ``1 - alpha``. Ties go to the earlier multiplier.

    Returns
    -------
    LambdaChoice
        With the full pilot table as dict rows.
    """
    if r_pilot < 1:
        raise DataError("r_pilot must be at least 1")
    if not isinstance(node_base, dict):
        node_base = {fw: float(node_base) for fw in frameworks}
    node_base = {Framework.parse(k): float(v) for k, v in node_base.items()}
    cache = cache if cache is not None else PrecisionCache()
    beta0 = cfg.beta0
    pilot_cfg = replace(cfg, lambda_main=None, lambda_node=None)
    X = design_for(pilot_cfg, 0)
    lip = lipschitz_gram(X)
    noises = [noise_for(cfg, k, TAG_PILOT) for k in range(r_pilot)]
    datas = [Dataset(X, X @ beta0 + e) for e in noises]
    table = []

    best = None
    fits_by_m = {}
    for m in main_multipliers:
        lam = m * float(main_base)
        fits = [fit_penalized(d, cfg.norm, lam, lipschitz=lip) for d in datas]
        mse = float(np.mean([np.sum((f.beta_hat - beta0) ** 2) for f in fits]))
        fits_by_m[m] = fits
        table.append({"stage": "main", "framework": "", "multiplier": m, "lambda": lam,
                      "score": mse, "converged": sum(f.converged for f in fits)})
        if best is None or mse < best[1]:
            best = (m, mse)
    m_main = best[0]
    lam_main = m_main * float(main_base)
    main_fits = fits_by_m[m_main]

    z = normal_quantile(1.0 - cfg.alpha / 2.0)
    chosen = {}
    for fw in frameworks:
        fw = Framework.parse(fw)
        best = None
        for m in node_multipliers:
            lam_node = m * node_base[fw]
            node_cfg = replace(cfg, framework=fw, lambda_main=lam_main, lambda_node=lam_node,
                               diagnostics=False)
            state = _DesignState(node_cfg, X, cache)
            covs = []
            for d, f in zip(datas, main_fits):
                if not f.converged:
                    continue
                b = state.basis.desparsify(d, f.beta_hat)
                half = z * cfg.sigma0 / np.abs(state.M)
                cov = (np.abs(b - beta0) <= half)[: cfg.s0][state.ok[: cfg.s0]]
                covs.append(cov)
            score = float(np.mean(np.concatenate(covs))) if covs else float("nan")
            table.append({"stage": "node", "framework": fw.value, "multiplier": m,
                          "lambda": lam_node, "score": score, "converged": len(covs)})
            dist = abs(score - (1.0 - cfg.alpha)) if np.isfinite(score) else np.inf
            if best is None or dist < best[1]:
                best = (lam_node, dist)
        chosen[fw] = best[0]
    return LambdaChoice(lambda_main=lam_main, lambda_node=chosen, table=table)


# ---------------------------------------------------------------------------
# CSV output; every float uses 15 significant digits


def _f(x):
    x = float(x) + 0.0
    return "nan" if np.isnan(x) else f"{x:.15g}"


RESULTS_HEADER = ["coordinate", "coverage", "avg_length", "framework", "norm", "lambda_main",
                  "lambda_node", "s0", "seed"]
RAW_HEADER = ["framework", "s0", "rep", "coordinate", "beta0", "b", "halfwidth", "covered", "sigma_hat"]
DIAG_HEADER = ["framework", "s0", "rep", "main_converged", "main_kkt_gap", "sigma_hat", "identity_max",
               "rem_max", "ratio_thm1_max", "violations_thm1", "violations_thm2",
               "violations_direct", "lambda_m", "upsilon_delta", "oracle_set"]
COMPARISON_HEADER = ["s0", "coordinate", "coverage_gauge", "coverage_omega", "length_gauge",
                     "length_omega", "length_ratio", "active"]
SWEEP_HEADER = ["s0", "stage", "framework", "multiplier", "lambda", "score", "converged"]


def _open(path, header, append):
    fh = open(path, "a" if append else "w", newline="")
    w = csv.writer(fh, lineterminator="\n")
    if not append:
        w.writerow(header)
    return fh, w


def write_results(path, results, append=False):
    fh, w = _open(path, RESULTS_HEADER, append)
    with fh:
        for res in results:
            c = res.config
            for j in range(c.p):
                w.writerow([j, _f(res.coverage[j]), _f(res.avg_length[j]), c.framework.value,
                            c.norm.kind.value, _f(c.lambda_main), _f(c.lambda_node), c.s0, c.seed])


def write_raw_log(path, results, append=False):
    fh, w = _open(path, RAW_HEADER, append)
    with fh:
        for res in results:
            c = res.config
            for rep, j, b0, b, half, cov, sig in res.raw_log:
                w.writerow([c.framework.value, c.s0, rep, j, _f(b0), _f(b), _f(half), cov, _f(sig)])


def write_diagnostics(path, results, append=False):
    fh, w = _open(path, DIAG_HEADER, append)
    with fh:
        for res in results:
            c = res.config
            for d in res.diagnostics:
                w.writerow([c.framework.value, c.s0, d["rep"], d["main_converged"], _f(d["main_kkt_gap"]),
                            _f(d["sigma_hat"]), _f(d["identity_max"]), _f(d["rem_max"]),
                            _f(d["ratio_thm1_max"]), d["violations_thm1"], d["violations_thm2"],
                            d["violations_direct"], _f(d["lambda_m"]), _f(d["upsilon_delta"]),
                            "true_support"])


def write_comparison(path, reports, append=False):
    fh, w = _open(path, COMPARISON_HEADER, append)
    with fh:
        for rep in reports:
            s0 = rep.gauge.config.s0
            for j, cg, co, lg, lo, ratio, active in rep.rows():
                w.writerow([s0, j, _f(cg), _f(co), _f(lg), _f(lo), _f(ratio), active])


def write_sweep(path, s0, choice, append=False):
    fh, w = _open(path, SWEEP_HEADER, append)
    with fh:
        for row in choice.table:
            w.writerow([s0, row["stage"], row["framework"], _f(row["multiplier"]), _f(row["lambda"]),
                        _f(row["score"]), row["converged"]])


def load_config(path):
    with open(path) as fh:
        return json.load(fh)
