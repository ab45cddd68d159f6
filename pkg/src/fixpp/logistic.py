"""
Logistic regression routes to point-process coefficients.

:func:`spatial_logistic_fit` regresses pixel occupancy on pixel covariates;
:func:`patch_logistic_fit` discriminates covariate vectors at fixated versus
control locations.  Both are fitted by Newton-Raphson (IRLS) with step
halving.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.special import expit, log_expit

from .errors import ConvergenceError, ValidationError
from .likelihood import bin_pattern

__all__ = ["LogisticFit", "SeparationWarning", "logistic_newton",
           "spatial_logistic_fit", "patch_logistic_fit"]


class SeparationWarning(RuntimeWarning):
    """The classes are (quasi-)separable; estimates diverge."""


@dataclass(frozen=True)
class LogisticFit:
    """Intercept, slopes and their standard errors."""

    intercept: float
    slopes: np.ndarray
    se: np.ndarray
    loglik: float
    iterations: int
    separated: bool = False

    @property
    def coef(self):
        return np.concatenate([[self.intercept], self.slopes])


def _loglik(X, z, beta, offset):
    eta = X @ beta + offset
    return float(np.sum(z * log_expit(eta) + (1 - z) * log_expit(-eta)))


def logistic_newton(X, z, offset=None, tol=1e-10, max_iter=100):
    """Maximum-likelihood logistic regression.

    Parameters
    ----------
    X : ndarray, shape (n, p)
        Design matrix including an intercept column if wanted.
    z : ndarray of {0, 1}
    offset : ndarray, optional

    Returns
    -------
    beta, se, loglik, iterations, separated
    """
    X = np.asarray(X, dtype=float)
    z = np.asarray(z, dtype=float)
    offset = np.zeros(X.shape[0]) if offset is None else np.asarray(offset, dtype=float)
    beta = np.zeros(X.shape[1])
    ll = _loglik(X, z, beta, offset)
    separated = False
    it = 0
    for it in range(1, max_iter + 1):
        mu = expit(X @ beta + offset)
        g = X.T @ (z - mu)
        W = mu * (1 - mu)
        H = (X * W[:, None]).T @ X
        try:
            step = linalg.solve(H, g, assume_a="pos")
        except (linalg.LinAlgError, ValueError):
            step = np.linalg.lstsq(H, g, rcond=None)[0]
        t = 1.0
        while t > 1e-10:
            cand = beta + t * step
            ll_new = _loglik(X, z, cand, offset)
            if ll_new >= ll - 1e-12 * (1 + abs(ll)):
                break
            t *= 0.5
        beta, ll_prev, ll = cand, ll, ll_new
        if np.max(np.abs(t * step)) < tol * (1 + np.max(np.abs(beta))):
            break
        if np.max(np.abs(X @ beta + offset)) > 35:
            separated = True
        if separated and ll - ll_prev < 1e-10:
            break
    else:
        if not separated:
            raise ConvergenceError(f"logistic Newton did not converge in {max_iter} steps")
    mu = expit(X @ beta + offset)
    H = (X * (mu * (1 - mu))[:, None]).T @ X
    try:
        cov = linalg.inv(H)
        se = np.sqrt(np.abs(np.diag(cov)))
    except (linalg.LinAlgError, ValueError):
        se = np.full(beta.size, np.nan)
    fitted = X @ beta + offset
    if np.max(np.abs(fitted)) > 35 or not np.all(np.isfinite(se)):
        separated = True
    if separated:
        warnings.warn("data are separable; logistic estimates diverge",
                      SeparationWarning, stacklevel=2)
    return beta, se, ll, it, separated


def _fit_from(beta, se, ll, it, sep):
    return LogisticFit(float(beta[0]), beta[1:].copy(), se, ll, it, sep)


def spatial_logistic_fit(pattern, covariates, grid, max_collision_fraction=0.25):
    """Logistic regression of pixel occupancy on pixel-centre covariates.

    Parameters
    ----------
    pattern : PointPattern
    covariates : sequence of CovariateField
    grid : Grid
    max_collision_fraction : float
        The largest tolerated fraction of points that share a pixel with
        another point.  The model assumes at most one point per pixel; a
        coarser grid is rejected.

    Returns
    -------
    LogisticFit
        ``intercept`` approximates ``alpha + log(pixel area)`` of the IPP.
    """
    counts = np.asarray(bin_pattern(pattern, grid).counts)
    n = len(pattern)
    if n:
        shared = int(np.sum(counts[counts > 1]))
        frac = shared / n
        if frac > max_collision_fraction:
            raise ValidationError(
                f"{frac:.1%} of points share a pixel on a {grid.nx}x{grid.ny} grid; "
                "use a finer grid so that pixels hold at most one point"
            )
    z = (counts > 0).astype(float)
    cols = [np.ones(grid.size)] + [np.asarray(f(grid.nodes), dtype=float) for f in covariates]
    return _fit_from(*logistic_newton(np.column_stack(cols), z))


def patch_logistic_fit(fixated_values, control_values):
    """Logistic regression of fixated (1) versus control (0) covariate vectors.

    With uniform controls the slopes estimate the IPP coefficients; the
    intercept absorbs ``log(n_fixated / n_control)`` and the window area.
    """
    F = np.atleast_2d(np.asarray(fixated_values, dtype=float))
    C = np.atleast_2d(np.asarray(control_values, dtype=float))
    if F.shape[0] == 1 and np.ndim(fixated_values) == 1:
        F = F.T
    if C.shape[0] == 1 and np.ndim(control_values) == 1:
        C = C.T
    if F.shape[0] == 0 or C.shape[0] == 0:
        raise ValidationError("both fixated and control sets must be non-empty")
    if F.shape[1] != C.shape[1]:
        raise ValidationError(
            f"covariate dimension mismatch: {F.shape[1]} vs {C.shape[1]}"
        )
    X = np.vstack([F, C])
    X = np.column_stack([np.ones(X.shape[0]), X])
    z = np.concatenate([np.ones(F.shape[0]), np.zeros(C.shape[0])])
    return _fit_from(*logistic_newton(X, z))
