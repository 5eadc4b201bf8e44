"""Structured sparsity norms.

Every norm is described by an immutable :class:`NormSpec`. The module-level
functions evaluate the norm, its proximal operator and dual, and the pieces of
weak decomposability used by the inference code: the residual norm on the
complement of an allowed set, the lower bounding norm ``upsilon`` and its dual,
the closed-form gauge, and the constant bounding the norm of a complement by
the residual norm.

Index sets are 0-based throughout.

Supported kinds
---------------
l1
    Weighted l1, ``sum_j w_j |b_j|`` (unit weights by default).
slope
    Sorted l1, ``sum_i l_i |b|_(i)`` with ``1 >= l_1 >= ... >= l_p > 0``.
group_lasso
    ``sum_g w_g ||b_g||_2`` over a partition (unit weights by default).
wedge
    ``min_{a in A} 1/2 sum_j (b_j^2 / a_j + a_j)`` over non-increasing
    positive ``a`` (0/0 = 0).
group_wedge
    Wedge norm of the vector ``sqrt(|G_j|) * ||b_{G_j}||_2``.
lorentz / generalized_lorentz
    Same variational form over the cone
    ``{a > 0 : a_j >= ||a_{P^c}||_2 for j in P}``; ``P = {p-1}`` for lorentz.
"""

import json
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations

import numpy as np

from . import _cone, _lorentz, _pav
from .errors import DataError, NotAllowedError


class NormKind(str, Enum):
    L1 = "l1"
    SLOPE = "slope"
    GROUP_LASSO = "group_lasso"
    WEDGE = "wedge"
    GROUP_WEDGE = "group_wedge"
    LORENTZ = "lorentz"
    GENERALIZED_LORENTZ = "generalized_lorentz"

    @classmethod
    def parse(cls, name):
        if isinstance(name, cls):
            return name
        key = str(name).replace("-", "_").lower()
        aliases = {
            "lasso": "l1",
            "grouplasso": "group_lasso",
            "groupwedge": "group_wedge",
            "generalizedlorentz": "generalized_lorentz",
            "genlorentz": "generalized_lorentz",
            "sorted_l1": "slope",
        }
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise DataError(f"unknown norm kind {name!r}") from None


# kinds whose dual norm is computed numerically
CONE_KINDS = frozenset(
    {NormKind.WEDGE, NormKind.GROUP_WEDGE, NormKind.LORENTZ, NormKind.GENERALIZED_LORENTZ}
)


@dataclass(frozen=True)
class NormSpec:
    """Immutable description of a penalty norm on R^p.

    ``weights`` is the sorted-l1 sequence for slope, per-coordinate weights for
    l1 and per-group weights for group_lasso; it is empty when unit weights
    apply. ``groups`` is a tuple of index tuples; ``protected`` the set P of
    the (generalized) Lorentz norm.
    """

    kind: NormKind
    p: int
    weights: tuple = ()
    groups: tuple = ()
    protected: tuple = ()
    _group_index: tuple = field(default=(), init=False, repr=False, compare=False)

    def __post_init__(self):
        kind = NormKind.parse(self.kind)
        object.__setattr__(self, "kind", kind)
        p = int(self.p)
        if p < 1:
            raise DataError("norm dimension must be a positive integer")
        object.__setattr__(self, "p", p)
        weights = tuple(float(w) for w in self.weights)
        groups = tuple(tuple(int(i) for i in g) for g in self.groups)
        protected = tuple(sorted(int(i) for i in self.protected))

        if kind in (NormKind.GROUP_LASSO, NormKind.GROUP_WEDGE):
            _check_partition(groups, p)
            if kind is NormKind.GROUP_WEDGE and weights:
                raise DataError("group_wedge takes no weights")
            if weights and len(weights) != len(groups):
                raise DataError("group_lasso needs one weight per group")
        elif groups:
            raise DataError(f"{kind.value} takes no groups")

        if kind is NormKind.SLOPE:
            w = np.asarray(weights)
            if len(w) != p:
                raise DataError("slope weights must have length p")
            if not np.all(np.isfinite(w)) or w[-1] <= 0 or w[0] > 1:
                raise DataError("slope weights must satisfy 1 >= l_1 >= ... >= l_p > 0")
            if np.any(np.diff(w) > 0):
                raise DataError("slope weights must be non-increasing")
        elif kind is NormKind.L1:
            if weights and len(weights) != p:
                raise DataError("l1 weights must have length p")
        elif kind not in (NormKind.GROUP_LASSO,) and weights:
            raise DataError(f"{kind.value} takes no weights")
        if weights and (not np.all(np.isfinite(weights)) or min(weights) <= 0):
            raise DataError("weights must be finite and strictly positive")

        if kind is NormKind.LORENTZ:
            if protected and protected != (p - 1,):
                raise DataError("lorentz protects the last coordinate; use generalized_lorentz")
            protected = (p - 1,)
        elif kind is NormKind.GENERALIZED_LORENTZ:
            if not protected:
                raise DataError("generalized_lorentz needs a non-empty protected set")
            if len(set(protected)) != len(protected) or protected[0] < 0 or protected[-1] >= p:
                raise DataError("protected indices must be distinct and within range")
        elif protected:
            raise DataError(f"{kind.value} takes no protected set")

        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "protected", protected)
        if groups:
            object.__setattr__(
                self, "_group_index", tuple(np.asarray(g, dtype=np.intp) for g in groups)
            )

    # -- constructors ---------------------------------------------------
    @classmethod
    def l1(cls, p, weights=None):
        return cls(NormKind.L1, p, weights=() if weights is None else tuple(np.broadcast_to(weights, (p,))))

    @classmethod
    def slope(cls, weights):
        return cls(NormKind.SLOPE, len(weights), weights=tuple(weights))

    @classmethod
    def group_lasso(cls, groups, weights=None):
        p = sum(len(g) for g in groups)
        return cls(NormKind.GROUP_LASSO, p, weights=() if weights is None else tuple(weights), groups=tuple(groups))

    @classmethod
    def wedge(cls, p):
        return cls(NormKind.WEDGE, p)

    @classmethod
    def group_wedge(cls, groups):
        return cls(NormKind.GROUP_WEDGE, sum(len(g) for g in groups), groups=tuple(groups))

    @classmethod
    def lorentz(cls, p):
        return cls(NormKind.LORENTZ, p)

    @classmethod
    def generalized_lorentz(cls, p, protected):
        return cls(NormKind.GENERALIZED_LORENTZ, p, protected=tuple(protected))

    # -- derived attributes --------------------------------------------
    @property
    def weight_array(self):
        if self.weights:
            return np.asarray(self.weights)
        n = len(self.groups) if self.kind is NormKind.GROUP_LASSO else self.p
        return np.ones(n)

    @property
    def group_sizes(self):
        return np.array([len(g) for g in self.groups], dtype=float)

    @property
    def dual_is_exact(self):
        return self.kind not in CONE_KINDS

    # -- convenience methods ---------------------------------------------
    def __call__(self, beta):
        return evaluate(self, beta)

    def evaluate(self, beta):
        return evaluate(self, beta)

    def prox(self, v, t):
        return prox(self, v, t)

    def dual(self, z, full_output=False):
        return dual(self, z, full_output=full_output)

    # -- serialization ---------------------------------------------------
    def to_dict(self):
        d = {"kind": self.kind.value, "p": self.p}
        if self.weights:
            d["weights"] = list(self.weights)
        if self.groups:
            d["groups"] = [list(g) for g in self.groups]
        if self.kind is NormKind.GENERALIZED_LORENTZ:
            d["protected"] = list(self.protected)
        return d

    @classmethod
    def from_dict(cls, d):
        kind = NormKind.parse(d["kind"])
        groups = d.get("groups") or ()
        weights = d.get("weights") or ()
        if "p" in d:
            p = d["p"]
        elif groups:
            p = sum(len(g) for g in groups)
        elif weights:
            p = len(weights)
        else:
            raise DataError("norm JSON needs 'p' for this kind")
        return cls(kind, p, weights=tuple(weights), groups=tuple(groups),
                   protected=tuple(d.get("protected") or ()))

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _check_partition(groups, p):
    if not groups or any(len(g) == 0 for g in groups):
        raise DataError("groups must be non-empty")
    flat = sorted(i for g in groups for i in g)
    if flat != list(range(p)):
        raise DataError("groups must be disjoint and cover every coordinate")


def as_index_set(S, p):
    """Validate an index set and return it as a sorted integer array."""
    idx = np.asarray(sorted(int(i) for i in S), dtype=np.intp)
    if idx.size and (idx[0] < 0 or idx[-1] >= p):
        raise DataError(f"index set out of range for dimension {p}")
    if np.any(np.diff(idx) == 0):
        raise DataError("index set has duplicates")
    return idx


def complement(S, p):
    mask = np.ones(p, dtype=bool)
    mask[as_index_set(S, p)] = False
    return np.flatnonzero(mask)


def restrict(beta, S):
    """Zero every coordinate outside S (the p-dimensional ``beta_S``)."""
    beta = np.asarray(beta, dtype=float)
    out = np.zeros_like(beta)
    idx = as_index_set(S, beta.shape[0])
    out[idx] = beta[idx]
    return out


def _vector(norm, x, name="beta"):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != norm.p:
        raise DataError(f"{name} must have length {norm.p}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DataError(f"{name} has non-finite entries")
    return x


def _group_norms(norm, x):
    return np.array([np.sqrt(x[g] @ x[g]) for g in norm._group_index])


# ---------------------------------------------------------------------------
# evaluation


def _protected_mask(norm):
    mask = np.zeros(norm.p, dtype=bool)
    mask[list(norm.protected)] = True
    return mask


def _lorentz_value_pg(beta, protected, tol=1e-10, max_iter=10000):
    scale = np.max(np.abs(beta))
    if scale == 0.0:
        return 0.0
    b = np.abs(beta) / scale
    p = b.shape[0]
    pmask = np.zeros(p, dtype=bool)
    pmask[list(protected)] = True
    # free coordinates with b_j = 0 take a_j = 0 and drop out (0/0 = 0)
    keep = pmask | (b > 1e-15)
    b = b[keep]
    prot = np.flatnonzero(pmask[keep])
    free = np.ones(b.shape[0], dtype=bool)
    free[prot] = False

    r0 = np.sqrt(b[free] @ b[free])
    a0 = b.copy()
    a0[prot] = np.maximum(b[prot], r0)
    if np.all(a0[prot] == b[prot]):
        return scale * b.sum()

    b2 = b * b
    nz = b2 > 0

    def fun(a):
        if np.any(a[nz] <= 0.0):
            return np.inf
        return 0.5 * (np.sum(b2[nz] / a[nz]) + a.sum())

    def grad(a):
        g = np.full_like(a, 0.5)
        g[nz] -= 0.5 * b2[nz] / np.maximum(a[nz], 1e-300) ** 2
        return g

    def project(a):
        return _cone.project_lorentz(a, prot)

    _, value, _, _ = _cone.minimize_on_cone(fun, grad, project, a0, tol=tol, max_iter=max_iter)
    return scale * value


def evaluate(norm, beta):
    """Value of the norm at `beta`."""
    beta = _vector(norm, beta)
    kind = norm.kind
    if kind is NormKind.L1:
        return float(norm.weight_array @ np.abs(beta))
    if kind is NormKind.SLOPE:
        return float(np.asarray(norm.weights) @ np.sort(np.abs(beta))[::-1])
    if kind is NormKind.GROUP_LASSO:
        return float(norm.weight_array @ _group_norms(norm, beta))
    if kind is NormKind.WEDGE:
        return float(_pav.wedge_value(beta))
    if kind is NormKind.GROUP_WEDGE:
        u = np.sqrt(norm.group_sizes) * _group_norms(norm, beta)
        return float(_pav.wedge_value(u))
    return float(_lorentz.lorentz_value(beta, _protected_mask(norm)))


def evaluate_rows(norm, B):
    """Evaluate the norm on every row of a 2-D array."""
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if B.shape[1] != norm.p:
        raise DataError(f"rows must have length {norm.p}")
    kind = norm.kind
    if kind is NormKind.L1:
        return np.abs(B) @ norm.weight_array
    if kind is NormKind.SLOPE:
        return -np.sort(-np.abs(B), axis=1) @ np.asarray(norm.weights)
    if kind is NormKind.WEDGE:
        return _pav.wedge_rows(np.ascontiguousarray(B))
    if kind in (NormKind.GROUP_LASSO, NormKind.GROUP_WEDGE):
        G = np.column_stack([np.sqrt(np.sum(B[:, g] ** 2, axis=1)) for g in norm._group_index])
        if kind is NormKind.GROUP_LASSO:
            return G @ norm.weight_array
        return _pav.wedge_rows(np.ascontiguousarray(G * np.sqrt(norm.group_sizes)))
    return _lorentz.lorentz_value_rows(np.ascontiguousarray(B), _protected_mask(norm))


def cone_point(norm, beta):
    """Minimizing cone variable of the variational form (wedge only)."""
    if norm.kind is not NormKind.WEDGE:
        raise DataError("cone_point is only available in closed form for the wedge norm")
    return _pav.wedge_cone_point(_vector(norm, beta))


# ---------------------------------------------------------------------------
# proximal operators


def _lorentz_prox_pg(v, t, protected, tol=1e-12, max_iter=20000):
    scale = np.max(np.abs(v))
    if scale == 0.0:
        return np.zeros_like(v)
    u = v / scale
    tau = t / scale
    u2 = u * u

    # partial minimization over beta leaves a smooth problem in the cone variable
    def fun(a):
        return float(np.sum(0.5 * tau * u2 / (a + tau) + 0.5 * tau * a))

    def grad(a):
        return 0.5 * tau - 0.5 * tau * u2 / (a + tau) ** 2

    def project(a):
        return _cone.project_lorentz(a, protected)

    a0 = np.maximum(np.abs(u) - tau, 0.0)
    a, _, _, _ = _cone.minimize_on_cone(fun, grad, project, a0, tol=tol * tau, max_iter=max_iter)
    return scale * u * a / (a + tau)


def prox(norm, v, t):
    """argmin_b 1/2 ||b - v||^2 + t * norm(b)."""
    v = _vector(norm, v, "v")
    t = float(t)
    if not np.isfinite(t) or t <= 0:
        raise DataError("prox step t must be positive and finite")
    kind = norm.kind
    if not np.any(v):
        return np.zeros_like(v)
    if kind is NormKind.L1:
        thr = t * norm.weight_array
        return np.sign(v) * np.maximum(np.abs(v) - thr, 0.0)
    if kind is NormKind.GROUP_LASSO:
        out = np.zeros_like(v)
        for g, w in zip(norm._group_index, norm.weight_array):
            nrm = np.sqrt(v[g] @ v[g])
            if nrm > t * w:
                out[g] = (1.0 - t * w / nrm) * v[g]
        return out
    if kind is NormKind.SLOPE:
        order = np.argsort(-np.abs(v), kind="stable")
        fit = _pav.slope_prox_sorted(np.abs(v)[order], t * np.asarray(norm.weights))
        out = np.empty_like(v)
        out[order] = fit
        return np.sign(v) * out
    if kind is NormKind.WEDGE:
        return _pav.wedge_prox(v, t)
    if kind is NormKind.GROUP_WEDGE:
        m = norm.group_sizes
        s = _group_norms(norm, v) ** 2
        a = _pav.group_wedge_prox_cone(m, s, t)
        out = np.zeros_like(v)
        for g, aj, mj in zip(norm._group_index, a, m):
            if aj > 0:
                out[g] = v[g] * aj / (aj + t * mj)
        return out
    return _lorentz.lorentz_prox(v, t, _protected_mask(norm))


# ---------------------------------------------------------------------------
# dual norms


def _cone_dual_sq(c, slice_project, restarts=20, seed=0, max_iter=200):
    """max c^T a over {a in K : sum(a) = 1} by projected ascent with restarts.

    `slice_project` maps a vector to its projection onto the slice, or is the
    string "wedge" for the compiled wedge-slice kernel. The maximizer is a
    fixed point for every step size; the step doubles up to 1e3 for speed and
    is capped there because the projection of a + eta * c loses about
    log10(eta) digits. Restarts start from seeded Dirichlet samples.
    """
    cmax = np.max(c)
    if cmax <= 0.0:
        return 0.0
    c = c / cmax
    n = c.shape[0]
    starts = np.random.default_rng(seed).dirichlet(np.ones(n), size=restarts)
    if isinstance(slice_project, str):
        return float(_pav.wedge_slice_ascent(c, starts, max_iter)) * cmax
    best = -np.inf
    for a0 in starts:
        a = slice_project(a0)
        val = c @ a
        eta = 1.0
        steady = 0
        for _ in range(max_iter):
            a_new = slice_project(a + eta * c)
            val_new = c @ a_new
            step = np.max(np.abs(a_new - a))
            a = a_new
            if abs(val_new - val) <= 1e-14 * abs(val_new) and step < 1e-11:
                steady += 1
                if steady >= 3:
                    val = max(val, val_new)
                    break
            else:
                steady = 0
            val = val_new
            eta = min(2.0 * eta, 1e3)
        best = max(best, val)
    return best * cmax


def dual(norm, z, *, full_output=False):
    """Dual norm sup { z^T b : norm(b) <= 1 }.

    Closed form for l1, group_lasso and slope. For the cone-defined norms the
    value is computed numerically through the variational representation
    ``dual(z)^2 = max { sum_j a_j z_j^2 : a in cone, sum(a) = 1 }`` by
    multi-restart projected ascent, and is flagged as approximate.

    With ``full_output=True`` returns ``(value, exact)``.
    """
    z = _vector(norm, z, "z")
    kind = norm.kind
    exact = True
    if kind is NormKind.L1:
        val = float(np.max(np.abs(z) / norm.weight_array))
    elif kind is NormKind.GROUP_LASSO:
        val = float(np.max(_group_norms(norm, z) / norm.weight_array))
    elif kind is NormKind.SLOPE:
        zs = np.cumsum(np.sort(np.abs(z))[::-1])
        val = float(np.max(zs / np.cumsum(norm.weights)))
    else:
        exact = False
        if kind is NormKind.WEDGE:
            val = np.sqrt(_cone_dual_sq(z * z, "wedge"))
        elif kind is NormKind.GROUP_WEDGE:
            w = _group_norms(norm, z) / np.sqrt(norm.group_sizes)
            val = np.sqrt(_cone_dual_sq(w * w, "wedge"))
        else:
            prot = list(norm.protected)

            def slice_project(a):
                return _cone.project_slice(a, lambda b: _cone.project_lorentz(b, prot))

            val = np.sqrt(_cone_dual_sq(z * z, slice_project))
        val = float(val)
    return (val, exact) if full_output else val


# ---------------------------------------------------------------------------
# weak decomposability


def is_allowed(norm, S):
    """Whether S is an allowed set (the norm is weakly decomposable for S)."""
    idx = as_index_set(S, norm.p)
    kind = norm.kind
    if kind in (NormKind.L1, NormKind.SLOPE):
        return True
    if kind is NormKind.WEDGE:
        return bool(np.array_equal(idx, np.arange(idx.size)))
    if kind in (NormKind.LORENTZ, NormKind.GENERALIZED_LORENTZ):
        return set(norm.protected) <= set(idx.tolist())
    members = set(idx.tolist())
    inside = []
    for g in norm.groups:
        hit = [i in members for i in g]
        if any(hit) and not all(hit):
            return False
        inside.append(all(hit))
    if kind is NormKind.GROUP_LASSO:
        return True
    # group wedge: a prefix of the listed group order
    s = sum(inside)
    return all(inside[:s]) and not any(inside[s:])


def _require_allowed(norm, S):
    if not is_allowed(norm, S):
        raise NotAllowedError(f"set {sorted(int(i) for i in S)} is not allowed for {norm.kind.value}")
    return as_index_set(S, norm.p)


def allowed_sets(norm):
    """Enumerate all allowed sets (exponential for l1/slope/group_lasso/lorentz)."""
    p = norm.p
    kind = norm.kind
    if kind is NormKind.WEDGE:
        return [tuple(range(s)) for s in range(p + 1)]
    if kind is NormKind.GROUP_WEDGE:
        out = []
        for s in range(len(norm.groups) + 1):
            out.append(tuple(sorted(i for g in norm.groups[:s] for i in g)))
        return out
    if kind is NormKind.GROUP_LASSO:
        out = []
        for k in range(len(norm.groups) + 1):
            for combo in combinations(norm.groups, k):
                out.append(tuple(sorted(i for g in combo for i in g)))
        return out
    if kind in (NormKind.LORENTZ, NormKind.GENERALIZED_LORENTZ):
        base = set(norm.protected)
        free = [i for i in range(p) if i not in base]
        return [tuple(sorted(base | set(c))) for k in range(len(free) + 1) for c in combinations(free, k)]
    return [c for k in range(p + 1) for c in combinations(range(p), k)]


def residual_spec(norm, S):
    """The norm Omega^{S^c} on R^{|S^c|}, or None when S^c is empty."""
    idx = _require_allowed(norm, S)
    sc = complement(idx, norm.p)
    if sc.size == 0:
        return None
    kind = norm.kind
    if kind is NormKind.L1:
        return NormSpec.l1(sc.size, norm.weight_array[sc] if norm.weights else None)
    if kind is NormKind.SLOPE:
        return NormSpec.slope(norm.weights[idx.size:])
    if kind in (NormKind.LORENTZ, NormKind.GENERALIZED_LORENTZ):
        return NormSpec.l1(sc.size)
    if kind is NormKind.WEDGE:
        return NormSpec.wedge(sc.size)
    pos = {int(j): k for k, j in enumerate(sc)}
    members = set(idx.tolist())
    keep = [(g, w) for g, w in zip(norm.groups, norm.weight_array) if g[0] not in members]
    groups = [tuple(pos[i] for i in g) for g, _ in keep]
    if kind is NormKind.GROUP_LASSO:
        return NormSpec.group_lasso(groups, [w for _, w in keep] if norm.weights else None)
    return NormSpec.group_wedge(groups)


def residual_norm(norm, S, beta_sc):
    """Omega^{S^c} evaluated at the complement coordinates `beta_sc`."""
    spec = residual_spec(norm, S)
    beta_sc = np.asarray(beta_sc, dtype=float)
    if spec is None:
        if beta_sc.size:
            raise DataError("complement of S is empty but beta_sc is not")
        return 0.0
    return evaluate(spec, beta_sc)


def upsilon(norm, S, beta):
    """Lower bounding norm Omega(beta_S) + Omega^{S^c}(beta_{S^c})."""
    beta = _vector(norm, beta)
    idx = _require_allowed(norm, S)
    sc = complement(idx, norm.p)
    return evaluate(norm, restrict(beta, idx)) + residual_norm(norm, idx, beta[sc])


def upsilon_dual(norm, S, z):
    """Dual of upsilon: max(Omega^*(z_S), (Omega^{S^c})^*(z_{S^c}))."""
    z = _vector(norm, z, "z")
    idx = _require_allowed(norm, S)
    sc = complement(idx, norm.p)
    first = dual(norm, restrict(z, idx)) if idx.size else 0.0
    spec = residual_spec(norm, idx)
    second = dual(spec, z[sc]) if spec is not None else 0.0
    return max(first, second)


def gauge_of(norm):
    """Closed-form gauge: the largest norm below every upsilon_S."""
    kind = norm.kind
    if kind in (NormKind.L1, NormKind.GROUP_LASSO):
        return norm
    if kind is NormKind.SLOPE:
        return NormSpec.l1(norm.p, norm.weights[-1])
    if kind is NormKind.GROUP_WEDGE:
        return NormSpec.group_lasso(norm.groups, np.sqrt(norm.group_sizes))
    return NormSpec.l1(norm.p)


def c_constant(norm, S):
    """Constant C with Omega(beta_{S^c}) <= C * Omega^{S^c}(beta_{S^c})."""
    idx = _require_allowed(norm, S)
    kind = norm.kind
    if kind in (NormKind.L1, NormKind.GROUP_LASSO):
        return 1.0
    if kind is NormKind.SLOPE:
        return norm.weights[0] / norm.weights[-1]
    if kind is NormKind.WEDGE:
        return float(np.sqrt(idx.size + 1))
    if kind is NormKind.GROUP_WEDGE:
        members = set(idx.tolist())
        active = sum(1 for g in norm.groups if g[0] in members)
        return float(np.sqrt(active + 1))
    return (len(norm.protected) + 2) / 2.0
