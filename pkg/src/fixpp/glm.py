"""
Maximum-likelihood fitting of log-linear IPP models over many patterns.

A model is a list of :class:`Term` objects.  Each term contributes
``coef * modifier * covariate(s)`` to the log-intensity of a pattern, where
the coefficient is looked up according to the term's sharing scope:

``"pattern"``
    one coefficient per pattern, named ``name[group_id]``;
``"label"``
    one coefficient per value of the pattern label ``by``, named
    ``name[value]`` (for example a saliency slope per image shared by all
    subjects viewing it);
``"shared"``
    a single coefficient ``name`` for every pattern.

``modifier`` names a numeric pattern label that multiplies the column, which
expresses grouped decompositions such as ``beta_i = phi_i * gamma + delta_i``::

    ModelSpec([
        Term("alpha", intercept=True),
        Term("gamma", "m", scope="shared", modifier="phi"),
        Term("delta", "m"),
    ])

The likelihood maximized for pattern ``i`` is

    L_i = sum_k eta_i(s_k) - sum_j w_j exp(eta_i(x_j)),

covariates being evaluated bilinearly at the points and at the nodes of a
midpoint quadrature grid.
"""

import json
from collections.abc import Mapping
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .domain import CovariateField, Grid, Window
from .errors import ConvergenceError, ValidationError
from .intensity import EXP_CLAMP, LinearPredictor
from .optimize import _safe_inverse, maximize_bfgs

__all__ = [
    "Term",
    "ModelSpec",
    "ByLabel",
    "Design",
    "FitResult",
    "CoefficientComparison",
    "build_design",
    "fit_mle",
    "fit_constrained",
    "compare_coefficients",
]

_SCOPES = ("pattern", "shared", "label")


@dataclass(frozen=True)
class Term:
    """One additive component of the log-intensity."""

    name: str
    covariate: Optional[str] = None
    scope: str = "pattern"
    by: Optional[str] = None
    modifier: Optional[str] = None
    intercept: bool = False
    latent: bool = False

    def __post_init__(self):
        if not self.name or any(c in self.name for c in "[]"):
            raise ValidationError(f"invalid term name {self.name!r}")
        if self.scope not in _SCOPES:
            raise ValidationError(f"term {self.name!r}: unknown scope {self.scope!r}")
        if self.scope == "label" and not self.by:
            raise ValidationError(f"term {self.name!r}: label scope needs 'by'")
        if self.intercept and (self.covariate is not None or self.latent):
            raise ValidationError(f"intercept term {self.name!r} takes no covariate")
        if self.latent:
            if self.covariate is not None or self.scope != "shared":
                raise ValidationError(
                    f"latent term {self.name!r} must be shared and have no covariate"
                )
        elif not self.intercept and self.covariate is None:
            raise ValidationError(f"term {self.name!r} needs a covariate")

    def to_dict(self):
        out = {"name": self.name, "scope": self.scope}
        for key in ("covariate", "by", "modifier"):
            if getattr(self, key) is not None:
                out[key] = getattr(self, key)
        if self.intercept:
            out["intercept"] = True
        if self.latent:
            out["latent"] = True
        return out

    @classmethod
    def from_dict(cls, d):
        allowed = {"name", "covariate", "scope", "by", "modifier", "intercept", "latent"}
        extra = set(d) - allowed
        if extra:
            raise ValidationError(f"unknown term keys {sorted(extra)}")
        if "name" not in d:
            raise ValidationError("term needs a name")
        return cls(**d)


class ModelSpec:
    """Declarative model: an ordered list of terms with exactly one intercept."""

    def __init__(self, terms):
        self.terms = tuple(terms)
        names = [t.name for t in self.terms]
        if len(set(names)) != len(names):
            raise ValidationError(f"duplicate term names in {names}")
        n_int = sum(t.intercept for t in self.terms)
        if n_int != 1:
            raise ValidationError(f"model needs exactly one intercept term, got {n_int}")
        if sum(t.latent for t in self.terms) > 1:
            raise ValidationError("at most one latent term is supported")

    @classmethod
    def intercept_only(cls, name="alpha", scope="pattern", by=None):
        return cls([Term(name, intercept=True, scope=scope, by=by)])

    @property
    def intercept(self):
        return next(t for t in self.terms if t.intercept)

    @property
    def latent(self):
        return next((t for t in self.terms if t.latent), None)

    @property
    def parametric(self):
        return tuple(t for t in self.terms if not t.latent)

    def term(self, name):
        for t in self.terms:
            if t.name == name:
                return t
        raise KeyError(name)

    def to_dict(self):
        return {"terms": [t.to_dict() for t in self.terms]}

    @classmethod
    def from_dict(cls, d):
        return cls([Term.from_dict(dict(t)) for t in d.get("terms", [])])

    def __eq__(self, other):
        return isinstance(other, ModelSpec) and self.terms == other.terms

    def __repr__(self):
        return f"ModelSpec({[t.name for t in self.terms]})"


@dataclass(frozen=True)
class ByLabel:
    """Covariate fields keyed by the value of a pattern label."""

    label: str
    fields: Mapping


def _label_value(pattern, label, index):
    if label == "group_id":
        return _gid(pattern, index)
    if label not in pattern.labels:
        raise ValidationError(f"pattern {_gid(pattern, index)!r} has no label {label!r}")
    return str(pattern.labels[label])


def _gid(pattern, index):
    return pattern.group_id if pattern.group_id is not None else str(index)


def resolve_covariate(covariates, name, pattern, index=0):
    """The CovariateField named ``name`` for ``pattern``."""
    if covariates is None or name not in covariates:
        raise ValidationError(f"covariate {name!r} is not provided")
    entry = covariates[name]
    if isinstance(entry, CovariateField):
        fld = entry
    elif isinstance(entry, ByLabel):
        key = _label_value(pattern, entry.label, index)
        if key not in entry.fields:
            raise ValidationError(
                f"covariate {name!r} has no field for {entry.label}={key!r}"
            )
        fld = entry.fields[key]
    elif isinstance(entry, Mapping):
        key = _gid(pattern, index)
        if key not in entry:
            raise ValidationError(f"covariate {name!r} has no field for pattern {key!r}")
        fld = entry[key]
    else:
        raise ValidationError(f"covariate {name!r}: unsupported value {type(entry)}")
    if fld.window != pattern.window:
        raise ValidationError(
            f"covariate {name!r} window {fld.window.bounds} differs from pattern "
            f"window {pattern.window.bounds}"
        )
    return fld


def _param_key(term, pattern, index):
    if term.scope == "shared":
        return term.name
    if term.scope == "pattern":
        return f"{term.name}[{_gid(pattern, index)}]"
    return f"{term.name}[{_label_value(pattern, term.by, index)}]"


def _modifier(term, pattern, index):
    if term.modifier is None:
        return 1.0
    if term.modifier not in pattern.labels:
        raise ValidationError(
            f"pattern {_gid(pattern, index)!r} lacks modifier label {term.modifier!r}"
        )
    try:
        v = float(pattern.labels[term.modifier])
    except (TypeError, ValueError):
        raise ValidationError(
            f"modifier label {term.modifier!r} must be numeric, got "
            f"{pattern.labels[term.modifier]!r}"
        ) from None
    if not np.isfinite(v):
        raise ValidationError(f"modifier label {term.modifier!r} must be finite")
    return v


@dataclass
class Block:
    """Likelihood contribution of one pattern.

    ``L_b = theta[params] . s + offset_points
            - sum_j w_j exp(Q theta[params] + offset_nodes)``
    """

    group_id: str
    params: np.ndarray
    s: np.ndarray
    Q: np.ndarray
    w: np.ndarray
    n: int
    offset_nodes: np.ndarray
    offset_points: float = 0.0
    term_names: tuple = ()
    grid: Optional[Grid] = None


@dataclass
class Design:
    """Flattened parameter vector and per-pattern likelihood blocks."""

    names: tuple
    blocks: list
    intercept_params: np.ndarray
    window: Window
    group_ids: tuple

    @property
    def n_params(self):
        return len(self.names)

    def index(self, name):
        return self.names.index(name)

    def param_map(self):
        """``{(group_id, term_name): parameter index}``."""
        out = {}
        for b in self.blocks:
            for k, term_name in zip(b.params, b.term_names):
                out[(b.group_id, term_name)] = int(k)
        return out


def _as_grid(grid, window):
    if grid is None or isinstance(grid, Grid):
        return grid
    if np.isscalar(grid):
        return Grid(window, int(grid), int(grid))
    nx, ny = grid
    return Grid(window, int(nx), int(ny))


def build_design(spec, patterns, covariates=None, grid=None, latent_offsets=None):
    """Map a model onto data.

    Parameters
    ----------
    spec : ModelSpec
    patterns : sequence of PointPattern
    covariates : mapping, optional
        ``name -> CovariateField | {group_id: field} | ByLabel``.
    grid : Grid, int or (nx, ny), optional
        Quadrature grid for every pattern.  By default each pattern uses the
        finest cell grid among its covariates (a single cell if none).
    latent_offsets : sequence of (ndarray, float), optional
        Per-pattern additive offsets at the grid nodes and summed over the
        data points (used by latent-field fitting).

    Returns
    -------
    Design
    """
    patterns = list(patterns)
    if not patterns:
        raise ValidationError("empty pattern set")
    window = patterns[0].window
    for p in patterns:
        if p.window != window:
            raise ValidationError("all patterns must share one window")
    gids = [_gid(p, i) for i, p in enumerate(patterns)]
    if len(set(gids)) != len(gids):
        raise ValidationError("pattern group ids must be unique")
    grid = _as_grid(grid, window)
    terms = spec.parametric

    names = []
    lookup = {}

    def pid(key):
        if key not in lookup:
            lookup[key] = len(names)
            names.append(key)
        return lookup[key]

    blocks = []
    intercept_params = set()
    for i, p in enumerate(patterns):
        fields = []
        params = []
        mods = []
        tnames = []
        for t in terms:
            params.append(pid(_param_key(t, p, i)))
            tnames.append(t.name)
            if t.intercept:
                intercept_params.add(params[-1])
                fields.append(None)
                mods.append(1.0)
            else:
                fields.append(resolve_covariate(covariates, t.covariate, p, i))
                mods.append(_modifier(t, p, i))
        g = grid
        if g is None:
            g = Grid(window, 1, 1)
            for f in fields:
                if f is not None:
                    cg, _ = f.cells()
                    if cg.size > g.size:
                        g = cg
        nodes = g.nodes
        Q = np.empty((g.size, len(fields)))
        s = np.empty(len(fields))
        for k, (f, m) in enumerate(zip(fields, mods)):
            if f is None:
                Q[:, k] = 1.0
                s[k] = len(p)
            else:
                Q[:, k] = m * _eval(f, nodes)
                s[k] = m * float(np.sum(_eval(f, p.xy))) if len(p) else 0.0
        off_nodes = np.zeros(g.size)
        off_points = 0.0
        if latent_offsets is not None:
            off_nodes, off_points = latent_offsets[i]
        blocks.append(Block(
            gids[i], np.asarray(params, dtype=np.int64), s, Q, g.weights, len(p),
            np.asarray(off_nodes, dtype=float), float(off_points), tuple(tnames), g,
        ))
    return Design(tuple(names), blocks, np.array(sorted(intercept_params), dtype=np.int64),
                  window, tuple(gids))


def _eval(field, xy):
    return field.evaluate(xy, check=False)


class _Component:
    """A connected group of free parameters and the blocks touching them."""

    def __init__(self, free_idx, blocks, theta_fixed):
        self.free_idx = np.asarray(free_idx, dtype=np.int64)
        local = {int(k): j for j, k in enumerate(self.free_idx)}
        self.parts = []
        for b in blocks:
            loc = np.array([local.get(int(k), -1) for k in b.params])
            free = loc >= 0
            base_nodes = b.offset_nodes + b.Q[:, ~free] @ theta_fixed[b.params[~free]]
            base_points = b.offset_points + float(b.s[~free] @ theta_fixed[b.params[~free]])
            self.parts.append(
                (loc[free], b.s[free], np.ascontiguousarray(b.Q[:, free]), b.w,
                 base_nodes, base_points)
            )

    @property
    def size(self):
        return self.free_idx.size

    def fun(self, x):
        total = 0.0
        for loc, s, Q, w, bn, bp in self.parts:
            eta = Q @ x[loc] + bn
            if np.max(eta, initial=-np.inf) > EXP_CLAMP:
                return -np.inf
            total += float(s @ x[loc]) + bp - float(w @ np.exp(eta))
        return total

    def grad(self, x):
        g = np.zeros_like(x)
        for loc, s, Q, w, bn, _ in self.parts:
            lam = w * np.exp(np.minimum(Q @ x[loc] + bn, EXP_CLAMP))
            np.add.at(g, loc, s - Q.T @ lam)
        return g

    def neg_hess(self, x):
        H = np.zeros((x.size, x.size))
        for loc, _, Q, w, bn, _ in self.parts:
            lam = w * np.exp(np.minimum(Q @ x[loc] + bn, EXP_CLAMP))
            H[np.ix_(loc, loc)] += (Q * lam[:, None]).T @ Q
        return H


def _components(design, free):
    parent = list(range(design.n_params))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for b in design.blocks:
        ks = [int(k) for k in b.params if free[k]]
        for k in ks[1:]:
            ra, rb = find(ks[0]), find(k)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
    groups = {}
    for k in range(design.n_params):
        if free[k]:
            groups.setdefault(find(k), []).append(k)
    comps = []
    for root in sorted(groups):
        members = set(groups[root])
        blocks = [b for b in design.blocks if any(int(k) in members for k in b.params)]
        comps.append((sorted(members), blocks))
    return comps


def _block_loglik(design, theta):
    total = 0.0
    for b in design.blocks:
        t = theta[b.params]
        eta = np.minimum(b.Q @ t + b.offset_nodes, EXP_CLAMP)
        total += float(b.s @ t) + b.offset_points - float(b.w @ np.exp(eta))
    return total


def _full_gradient(design, theta):
    g = np.zeros(design.n_params)
    for b in design.blocks:
        lam = b.w * np.exp(np.minimum(b.Q @ theta[b.params] + b.offset_nodes, EXP_CLAMP))
        np.add.at(g, b.params, b.s - b.Q.T @ lam)
    return g


def _full_neg_hessian(design, theta):
    H = np.zeros((design.n_params, design.n_params))
    for b in design.blocks:
        lam = b.w * np.exp(np.minimum(b.Q @ theta[b.params] + b.offset_nodes, EXP_CLAMP))
        H[np.ix_(b.params, b.params)] += (b.Q * lam[:, None]).T @ b.Q
    return H


def _initial_theta(design, fixed_mask, theta):
    area = design.window.area()
    for k in design.intercept_params:
        if fixed_mask[k]:
            continue
        users = [b for b in design.blocks if k in b.params]
        n = sum(b.n for b in users)
        if n == 0:
            gids = ", ".join(b.group_id for b in users)
            raise ValidationError(
                f"intercept {design.names[k]} is not identifiable: pattern(s) {gids} "
                "are empty"
            )
        off = np.mean([np.mean(b.offset_nodes) for b in users])
        theta[k] = np.log(n / (len(users) * area)) - off
    return theta


def _covariance(H, names):
    """Inverse of ``H`` with non-identifiable directions flagged."""
    p = H.shape[0]
    if p == 0:
        return np.zeros((0, 0)), np.zeros(0, dtype=bool)
    vals, vecs = np.linalg.eigh(0.5 * (H + H.T))
    scale = max(float(np.max(np.abs(vals))), 1e-300)
    null = vals <= 1e-10 * scale
    flags = np.zeros(p, dtype=bool)
    if np.any(null):
        flags = np.any(np.abs(vecs[:, null]) > 1e-6, axis=1)
        inv = np.where(null, 0.0, 1.0 / np.where(null, 1.0, vals))
        cov = (vecs * inv) @ vecs.T
        cov[flags, :] = np.nan
        cov[:, flags] = np.nan
        return cov, flags
    return _safe_inverse(H), flags


def _fmt(x):
    x = float(x)
    if not np.isfinite(x):
        return None
    return float(f"{x:.12g}")


@dataclass(frozen=True)
class FitResult:
    """Fitted coefficients with curvature-based standard errors."""

    spec: ModelSpec
    names: tuple
    estimates: np.ndarray
    se: np.ndarray
    fixed: tuple
    nonidentifiable: tuple
    loglik: float
    iterations: int
    grad_norm: float
    tol: float
    window: Window
    group_ids: tuple
    trace: tuple = ()
    covariance: Optional[np.ndarray] = None
    log_evidence: Optional[float] = None
    latent: Optional[object] = None
    converged: bool = True

    def __getitem__(self, name):
        return float(self.estimates[self.names.index(name)])

    def coef(self, name):
        return self[name]

    def stderr(self, name):
        return float(self.se[self.names.index(name)])

    def as_dict(self):
        return dict(zip(self.names, map(float, self.estimates)))

    def coefficient_table(self):
        return [
            {
                "name": n,
                "estimate": float(e),
                "se": float(s),
                "fixed": bool(f),
                "identifiable": not bool(u),
            }
            for n, e, s, f, u in zip(
                self.names, self.estimates, self.se, self.fixed, self.nonidentifiable
            )
        ]

    def wald_interval(self, name, z=1.959963984540054):
        e, s = self[name], self.stderr(name)
        return e - z * s, e + z * s

    def predictor(self, pattern, covariates=None, index=0, include_latent=True):
        """Fitted log-intensity of ``pattern`` as a :class:`LinearPredictor`."""
        intercept = 0.0
        terms = []
        for t in self.spec.parametric:
            key = _param_key(t, pattern, index)
            if key not in self.names:
                raise ValidationError(f"fit has no coefficient {key!r}")
            coef = self[key]
            if t.intercept:
                intercept += coef
            else:
                fld = resolve_covariate(covariates, t.covariate, pattern, index)
                terms.append((coef * _modifier(t, pattern, index), fld))
        if include_latent and self.latent is not None:
            terms.append((1.0, self.latent.mean))
        return LinearPredictor(pattern.window, intercept, terms)

    def to_dict(self):
        out = {
            "model": self.spec.to_dict(),
            "window": [_fmt(v) for v in self.window.bounds],
            "group_ids": list(self.group_ids),
            "coefficients": [
                {
                    "name": r["name"],
                    "estimate": _fmt(r["estimate"]),
                    "se": _fmt(r["se"]),
                    "fixed": r["fixed"],
                    "identifiable": r["identifiable"],
                }
                for r in self.coefficient_table()
            ],
            "loglik": _fmt(self.loglik),
            "convergence": {
                "converged": bool(self.converged),
                "iterations": int(self.iterations),
                "grad_norm": _fmt(self.grad_norm),
                "tol": _fmt(self.tol),
            },
        }
        if self.log_evidence is not None:
            out["log_evidence"] = _fmt(self.log_evidence)
        if self.latent is not None:
            out["latent"] = self.latent.describe()
        return out

    def to_json(self, indent=2):
        return json.dumps(self.to_dict(), indent=indent, sort_keys=False) + "\n"

    @classmethod
    def from_dict(cls, d, latent=None):
        try:
            coefs = d["coefficients"]
            nan = float("nan")
            conv = d.get("convergence", {})
            return cls(
                spec=ModelSpec.from_dict(d["model"]),
                names=tuple(c["name"] for c in coefs),
                estimates=np.array([c["estimate"] for c in coefs], dtype=float),
                se=np.array([nan if c["se"] is None else c["se"] for c in coefs]),
                fixed=tuple(bool(c.get("fixed", False)) for c in coefs),
                nonidentifiable=tuple(not c.get("identifiable", True) for c in coefs),
                loglik=float(d["loglik"]),
                iterations=int(conv.get("iterations", 0)),
                grad_norm=float(conv.get("grad_norm") or 0.0),
                tol=float(conv.get("tol") or 0.0),
                window=Window(*d["window"]),
                group_ids=tuple(d["group_ids"]),
                log_evidence=d.get("log_evidence"),
                latent=latent,
                converged=bool(conv.get("converged", True)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed fit artifact: {exc}") from None

    @classmethod
    def from_json(cls, text, latent=None):
        return cls.from_dict(json.loads(text), latent=latent)


def fit_mle(spec, patterns, covariates=None, grid=None, tol=1e-6, max_iter=500,
            threads=1, fixed=None, _design=None):
    """Maximum-likelihood fit of a parametric model.

    Parameters
    ----------
    spec : ModelSpec
        Must not contain a latent term (see :func:`fixpp.gp.fit_map_latent`).
    patterns : sequence of PointPattern
    covariates : mapping, optional
    grid : Grid, int or (nx, ny), optional
        Quadrature grid (see :func:`build_design`).
    tol : float
        Gradient tolerance, ``max|grad| <= tol * (1 + |L|)``.
    max_iter : int
    threads : int
        Independent blocks of parameters are solved concurrently.
    fixed : mapping, optional
        Coefficients pinned to given values.

    Returns
    -------
    FitResult

    Raises
    ------
    ConvergenceError
        The optimizer failed; the exception carries the objective trace.
    """
    if spec.latent is not None and _design is None:
        raise ValidationError("model has a latent term; use fit_map_latent")
    design = _design or build_design(spec, patterns, covariates, grid)
    fixed = dict(fixed or {})
    unknown = sorted(set(fixed) - set(design.names))
    if unknown:
        raise ValidationError(f"fixed coefficients not in model: {unknown}")
    fixed_mask = np.zeros(design.n_params, dtype=bool)
    theta = np.zeros(design.n_params)
    for name, value in fixed.items():
        k = design.index(name)
        fixed_mask[k] = True
        theta[k] = float(value)
    theta = _initial_theta(design, fixed_mask, theta)

    comps = [
        _Component(members, blocks, theta) for members, blocks in _components(design, ~fixed_mask)
    ]
    base = _block_loglik(design, theta)
    start_vals = [c.fun(theta[c.free_idx]) for c in comps]

    def solve(c):
        return maximize_bfgs(c.fun, c.grad, theta[c.free_idx], c.neg_hess,
                             tol=tol, max_iter=max_iter)

    if threads > 1 and len(comps) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(solve, comps))
    else:
        results = [solve(c) for c in comps]

    trace = [base]
    current = base
    iterations = 0
    for c, r, f0 in zip(comps, results, start_vals):
        theta[c.free_idx] = r.x
        for v in r.trace[1:]:
            trace.append(current + (v - f0))
        current += r.trace[-1] - f0
        iterations = max(iterations, r.iterations)
    loglik = _block_loglik(design, theta)
    free = ~fixed_mask
    g = _full_gradient(design, theta)[free]
    gnorm = float(np.max(np.abs(g))) if g.size else 0.0
    if gnorm > tol * (1.0 + abs(loglik)):
        raise ConvergenceError(
            f"gradient {gnorm:.3g} above tolerance after optimization", trace=trace,
            grad_norm=gnorm,
        )
    H = _full_neg_hessian(design, theta)[np.ix_(free, free)]
    cov, flags = _covariance(H, design.names)
    se = np.full(design.n_params, np.nan)
    nonid = np.zeros(design.n_params, dtype=bool)
    se[free] = np.sqrt(np.where(flags, np.nan, np.abs(np.diag(cov))))
    nonid[free] = flags
    full_cov = np.full((design.n_params, design.n_params), np.nan)
    full_cov[np.ix_(free, free)] = cov
    return FitResult(
        spec=spec,
        names=design.names,
        estimates=theta.copy(),
        se=se,
        fixed=tuple(bool(v) for v in fixed_mask),
        nonidentifiable=tuple(bool(v) for v in nonid),
        loglik=loglik,
        iterations=iterations,
        grad_norm=gnorm,
        tol=tol,
        window=design.window,
        group_ids=design.group_ids,
        trace=tuple(trace),
        covariance=full_cov,
    )


def fit_constrained(spec, patterns, covariates=None, fixed=None, **options):
    """:func:`fit_mle` with the coefficients in ``fixed`` pinned."""
    if not fixed:
        raise ValidationError("fit_constrained needs at least one fixed coefficient")
    return fit_mle(spec, patterns, covariates, fixed=fixed, **options)


@dataclass(frozen=True)
class CoefficientComparison:
    """Paired estimates of one term from two fits."""

    term: str
    keys: tuple
    a: np.ndarray
    b: np.ndarray

    @property
    def mean_difference(self):
        return float(np.mean(self.b - self.a))

    @property
    def correlation(self):
        if self.a.size < 2 or np.std(self.a) == 0 or np.std(self.b) == 0:
            return float("nan")
        return float(np.corrcoef(self.a, self.b)[0, 1])

    def rows(self):
        return [(k, float(x), float(y)) for k, x, y in zip(self.keys, self.a, self.b)]


def _term_coefficients(fit, term):
    out = {}
    prefix = term + "["
    for n, e in zip(fit.names, fit.estimates):
        if n == term:
            out[""] = float(e)
        elif n.startswith(prefix) and n.endswith("]"):
            out[n[len(prefix):-1]] = float(e)
    return out


def compare_coefficients(fit_a, fit_b, term):
    """Pair the coefficients of ``term`` in two fits by pattern/label key."""
    ca = _term_coefficients(fit_a, term)
    cb = _term_coefficients(fit_b, term)
    if not ca or not cb:
        raise ValidationError(f"term {term!r} missing from one of the fits")
    keys = [k for k in ca if k in cb]
    if not keys:
        raise ValidationError(f"fits share no {term!r} coefficients (disjoint patterns)")
    return CoefficientComparison(
        term, tuple(keys), np.array([ca[k] for k in keys]), np.array([cb[k] for k in keys])
    )
