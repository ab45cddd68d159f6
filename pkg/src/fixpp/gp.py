"""
Gaussian-process priors over grid-valued log-intensity components.

The latent field ``g`` lives on the pixel centres of a :class:`Grid` and is
evaluated elsewhere by clamped bilinear interpolation.  Fitting is MAP with a
Laplace approximation:

* ``g = L u`` with ``K = L L'`` (Cholesky, jittered) and ``u ~ N(0, I)``;
* ``sum_j g_j = 0`` fixes the gauge between ``g`` and the intercepts;
* the joint objective over coefficients ``theta`` and ``u`` is concave and
  is maximized by Newton steps on the constraint's null space (KKT system);
* posterior covariance is the inverse negative Hessian restricted to the
  constraint, and the log marginal likelihood (flat prior on ``theta``, up to
  a constant) is ``F - 1/2 log det H_restricted``.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist

from .domain import CovariateField, Grid
from .errors import ConditioningError, ConvergenceError, ValidationError
from .glm import FitResult, ModelSpec, _covariance, build_design
from .intensity import EXP_CLAMP

__all__ = [
    "CovarianceSpec",
    "LatentField",
    "covariance_function",
    "gp_cholesky",
    "gp_covariance_matrix",
    "gp_prior_sample",
    "fit_map_latent",
    "select_hyperparameters",
]

_FAMILIES = ("se", "matern32", "matern52")
_ALIASES = {
    "squared_exponential": "se",
    "squared-exponential": "se",
    "rbf": "se",
    "matern-3/2": "matern32",
    "matern-5/2": "matern52",
}


@dataclass(frozen=True)
class CovarianceSpec:
    """Stationary isotropic covariance ``k(r)``.

    ``variance`` is the marginal variance; ``length_scale`` is ``ell`` in

    * ``se``:       ``variance * exp(-r^2 / (2 ell^2))``,
      i.e. ``exp(-lambda r^2)`` with inverse scale ``lambda = 1 / (2 ell^2)``;
    * ``matern32``: ``variance * (1 + sqrt3 r/ell) exp(-sqrt3 r/ell)``;
    * ``matern52``: ``variance * (1 + sqrt5 r/ell + 5 r^2/(3 ell^2)) exp(-sqrt5 r/ell)``.
    """

    variance: float = 1.0
    length_scale: float = 0.2
    family: str = "matern52"

    def __post_init__(self):
        fam = _ALIASES.get(str(self.family).lower(), str(self.family).lower())
        if fam not in _FAMILIES:
            raise ValidationError(f"unknown covariance family {self.family!r}")
        object.__setattr__(self, "family", fam)
        if not (self.variance > 0 and np.isfinite(self.variance)):
            raise ValidationError(f"variance must be positive, got {self.variance}")
        if not (self.length_scale > 0 and np.isfinite(self.length_scale)):
            raise ValidationError(f"length scale must be positive, got {self.length_scale}")
        object.__setattr__(self, "variance", float(self.variance))
        object.__setattr__(self, "length_scale", float(self.length_scale))

    @classmethod
    def from_inverse_scale(cls, variance, inverse_scale, family="se"):
        """Parameterize by ``lambda`` in ``exp(-lambda r^2)``."""
        return cls(variance, float(np.sqrt(0.5 / inverse_scale)), family)

    @property
    def inverse_scale(self):
        return 0.5 / self.length_scale**2

    def to_dict(self):
        return {"family": self.family, "variance": self.variance,
                "length_scale": self.length_scale}


def covariance_function(r, spec):
    """``k(r)`` for distances ``r``."""
    r = np.asarray(r, dtype=float)
    s = spec.variance
    t = r / spec.length_scale
    if spec.family == "se":
        return s * np.exp(-0.5 * t * t)
    if spec.family == "matern32":
        a = np.sqrt(3.0) * t
        return s * (1.0 + a) * np.exp(-a)
    a = np.sqrt(5.0) * t
    return s * (1.0 + a + a * a / 3.0) * np.exp(-a)


def _raw_matrix(nodes, spec):
    nodes = np.asarray(nodes, dtype=float)
    K = covariance_function(cdist(nodes, nodes), spec)
    return 0.5 * (K + K.T)


def gp_cholesky(nodes, spec):
    """Lower Cholesky factor of ``K + jitter I`` and the jitter used.

    Jitter starts at ``1e-10 * variance`` and grows tenfold up to
    ``1e-4 * variance``.
    """
    K = _raw_matrix(nodes, spec)
    jitter = 1e-10 * spec.variance
    while jitter <= 1e-4 * spec.variance * (1 + 1e-9):
        try:
            L = linalg.cholesky(K + jitter * np.eye(K.shape[0]), lower=True)
            return L, jitter
        except linalg.LinAlgError:
            jitter *= 10.0
    raise ConditioningError(
        f"covariance matrix not positive definite even with jitter "
        f"{1e-4 * spec.variance:.3g} ({spec})"
    )


def gp_covariance_matrix(nodes, spec):
    """Dense covariance ``K_ij = k(x_i, x_j)`` plus the stabilizing jitter."""
    nodes = np.asarray(nodes, dtype=float)
    if np.unique(nodes, axis=0).shape[0] != nodes.shape[0]:
        raise ValidationError("covariance nodes must be distinct")
    _, jitter = gp_cholesky(nodes, spec)
    return _raw_matrix(nodes, spec) + jitter * np.eye(nodes.shape[0])


def gp_prior_sample(grid, spec, rng):
    """One draw ``L z`` from the zero-mean prior at the grid nodes."""
    L, _ = gp_cholesky(grid.nodes, spec)
    return grid.field(L @ rng.standard_normal(grid.size))


@dataclass(frozen=True)
class LatentField:
    """Posterior mean and pointwise sd of a latent log-intensity component."""

    mean: CovariateField
    sd: CovariateField
    covariance: CovarianceSpec
    grid: Grid

    def describe(self):
        return {
            "covariance": self.covariance.to_dict(),
            "grid": [self.grid.nx, self.grid.ny],
        }


def _design_for(spec, patterns, covariates, grid, offsets=None):
    pspec = ModelSpec(spec.parametric)
    return build_design(pspec, patterns, covariates, grid, latent_offsets=offsets)


class _LatentProblem:
    """Joint objective over ``x = (theta, u)``."""

    def __init__(self, design, L, a):
        self.design = design
        self.L = L
        self.a = a  # pooled interpolation weight sums at grid nodes
        self.p = design.n_params
        self.r = L.shape[0]

    def split(self, x):
        return x[:self.p], x[self.p:]

    def _etas(self, theta, g):
        for b in self.design.blocks:
            yield b, b.Q @ theta[b.params] + g

    def fun(self, x):
        theta, u = self.split(x)
        g = self.L @ u
        total = float(self.a @ g) - 0.5 * float(u @ u)
        for b, eta in self._etas(theta, g):
            if np.max(eta) > EXP_CLAMP:
                return -np.inf
            total += float(b.s @ theta[b.params]) - float(b.w @ np.exp(eta))
        return total

    def grad_hess(self, x):
        theta, u = self.split(x)
        g = self.L @ u
        p, r = self.p, self.r
        gt = np.zeros(p)
        D = np.zeros(r)
        Htt = np.zeros((p, p))
        Htg = np.zeros((p, r))
        for b, eta in self._etas(theta, g):
            lam = b.w * np.exp(np.minimum(eta, EXP_CLAMP))
            np.add.at(gt, b.params, b.s - b.Q.T @ lam)
            D += lam
            QW = (b.Q * lam[:, None]).T
            Htt[np.ix_(b.params, b.params)] += QW @ b.Q
            Htg[b.params] += QW
        gu = self.L.T @ (self.a - D) - u
        Htu = Htg @ self.L
        Huu = (self.L.T * D) @ self.L + np.eye(r)
        H = np.block([[Htt, Htu], [Htu.T, Huu]])
        return np.concatenate([gt, gu]), H


def _constrained_newton(prob, x0, C, tol, max_iter):
    """Maximize ``prob.fun`` subject to ``C' x = 0`` (``x0`` feasible)."""
    x = x0.copy()
    f = prob.fun(x)
    trace = [f]
    k = C.shape[1]
    grad_norm = np.inf
    for it in range(1, max_iter + 1):
        g, H = prob.grad_hess(x)
        # Projected gradient: remove the component along the constraint normals.
        Cq, _ = np.linalg.qr(C)
        pg = g - Cq @ (Cq.T @ g)
        grad_norm = float(np.max(np.abs(pg)))
        if grad_norm <= tol * (1.0 + abs(f)):
            return x, f, it - 1, grad_norm, trace, H
        n = x.size
        KKT = np.zeros((n + k, n + k))
        KKT[:n, :n] = H
        KKT[:n, n:] = C
        KKT[n:, :n] = C.T
        rhs = np.concatenate([g, np.zeros(k)])
        try:
            d = linalg.solve(KKT, rhs, assume_a="sym")[:n]
        except (linalg.LinAlgError, ValueError):
            d = np.linalg.lstsq(KKT, rhs, rcond=None)[0][:n]
        slope = float(g @ d)
        if not slope > 0:
            d = pg
            slope = float(g @ d)
        t = 1.0
        while t > 1e-12:
            x_new = x + t * d
            f_new = prob.fun(x_new)
            if np.isfinite(f_new) and f_new >= f + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            # No measurable ascent is possible; accept if already stationary.
            if grad_norm <= 1e3 * tol * (1.0 + abs(f)):
                return x, f, it, grad_norm, trace, H
            raise ConvergenceError("latent-field line search failed", trace=trace,
                                   grad_norm=grad_norm)
        x, f = x_new, f_new
        trace.append(f)
    raise ConvergenceError(f"latent-field fit did not converge in {max_iter} iterations",
                           trace=trace, grad_norm=grad_norm)


def fit_map_latent(spec, patterns, covariates=None, covariance=None, grid=None,
                   tol=1e-6, max_iter=100):
    """Joint MAP fit of parametric coefficients and a shared latent field.

    Parameters
    ----------
    spec : ModelSpec
        Must contain exactly one latent term.
    patterns : sequence of PointPattern
        All on one window.
    covariates : mapping, optional
    covariance : CovarianceSpec, optional
        Defaults to Matern-5/2 with unit variance and length scale 0.2 of
        the window width.
    grid : Grid, int or (nx, ny), optional
        Latent lattice and quadrature grid, default 32 x 32.

    Returns
    -------
    FitResult
        With ``latent`` set to the :class:`LatentField` and ``log_evidence``
        the Laplace log marginal likelihood (up to a model-independent
        constant).
    """
    if spec.latent is None:
        raise ValidationError("model has no latent term")
    patterns = list(patterns)
    if not patterns:
        raise ValidationError("empty pattern set")
    window = patterns[0].window
    if grid is None:
        grid = Grid(window, 32, 32)
    elif not isinstance(grid, Grid):
        nx, ny = (grid, grid) if np.isscalar(grid) else grid
        grid = Grid(window, int(nx), int(ny))
    if grid.nx < 2 or grid.ny < 2:
        raise ValidationError("latent grid needs at least 2x2 nodes")
    if covariance is None:
        covariance = CovarianceSpec(1.0, 0.2 * window.width)
    design = _design_for(spec, patterns, covariates, grid)
    L, jitter = gp_cholesky(grid.nodes, covariance)
    a = np.zeros(grid.size)
    for p in patterns:
        if len(p):
            idx, wts = grid.interpolation_weights(p.xy)
            np.add.at(a, idx.ravel(), wts.ravel())
    prob = _LatentProblem(design, L, a)

    # Start from the parametric MLE with g = 0.
    from .glm import fit_mle

    theta0 = fit_mle(ModelSpec(spec.parametric), patterns, covariates, grid=grid,
                     tol=tol, _design=design).estimates
    x0 = np.concatenate([theta0, np.zeros(grid.size)])
    C = np.concatenate([np.zeros(design.n_params), L.T @ np.ones(grid.size)])[:, None]
    x, f, iters, gnorm, trace, H = _constrained_newton(prob, x0, C, tol, max_iter)

    # Laplace covariance restricted to the constraint surface.
    Hc = linalg.cho_factor(H)
    HiC = linalg.cho_solve(Hc, C)
    Hinv = linalg.cho_solve(Hc, np.eye(H.shape[0]))
    S = Hinv - HiC @ np.linalg.solve(C.T @ HiC, HiC.T)
    p = design.n_params
    cov_u = S[p:, p:]
    sd_g = np.sqrt(np.maximum(np.einsum("ij,jk,ik->i", L, cov_u, L), 0.0))
    theta, u = x[:p], x[p:]
    g = L @ u
    chat = C[:, 0] / np.linalg.norm(C[:, 0])
    logdet = 2.0 * np.sum(np.log(np.diag(Hc[0])))
    log_evidence = f - 0.5 * (logdet + float(np.log(chat @ linalg.cho_solve(Hc, chat))))

    cov_theta = S[:p, :p]
    _, flags = _covariance(H[:p, :p], design.names)
    se = np.sqrt(np.maximum(np.diag(cov_theta), 0.0))
    latent = LatentField(grid.field(g), grid.field(sd_g), covariance, grid)
    loglik = f + 0.5 * float(u @ u)
    return FitResult(
        spec=spec,
        names=design.names,
        estimates=theta.copy(),
        se=se,
        fixed=tuple(False for _ in design.names),
        nonidentifiable=tuple(bool(v) for v in flags),
        loglik=loglik,
        iterations=iters,
        grad_norm=gnorm,
        tol=tol,
        window=window,
        group_ids=design.group_ids,
        trace=tuple(trace),
        covariance=cov_theta,
        log_evidence=float(log_evidence),
        latent=latent,
    )


def select_hyperparameters(spec, patterns, covariates=None, candidates=(), grid=None,
                           tie_tolerance=1.0, return_scores=False, **options):
    """Candidate covariance maximizing the Laplace marginal likelihood.

    Candidates whose log evidence is within ``tie_tolerance`` nats of the
    best are treated as tied; among those the longest length scale wins
    (then the smallest variance).
    """
    candidates = list(candidates)
    if not candidates:
        raise ValidationError("empty candidate grid")
    if len(candidates) == 1:
        return (candidates[0], [None]) if return_scores else candidates[0]
    scores = []
    for c in candidates:
        try:
            fit = fit_map_latent(spec, patterns, covariates, c, grid, **options)
            scores.append(fit.log_evidence)
        except ConditioningError:
            scores.append(None)
    valid = [s for s in scores if s is not None]
    if not valid:
        raise ConditioningError("every candidate covariance failed to factorize")
    best = max(valid)
    tied = [c for c, s in zip(candidates, scores) if s is not None and s >= best - tie_tolerance]
    chosen = max(tied, key=lambda c: (c.length_scale, -c.variance))
    return (chosen, scores) if return_scores else chosen
