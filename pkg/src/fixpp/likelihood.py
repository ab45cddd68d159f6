"""
Inhomogeneous Poisson log-likelihoods.

Three forms are provided:

* :func:`loglik_exact`: ``sum_i eta(s_i) - integral exp(eta)``.
* :func:`loglik_binned`: the Poisson log-pmf of bin counts with
  ``lambda_j ~ |Omega_j| exp(eta(x_j))``.
* :func:`loglik_berman_turner`: interpolated data term on grid values plus
  quadrature, ``sum_ij a_ij eta(x_j) - sum_j w_j exp(eta(x_j))``.

Constant terms are dropped from the exact and Berman-Turner forms; the
binned form keeps ``-log k_j!`` so it is a proper log-pmf.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .domain import CovariateField, Grid
from .errors import NumericError
from .intensity import LinearPredictor, safe_exp

__all__ = [
    "BinnedCounts",
    "bin_pattern",
    "loglik_exact",
    "loglik_binned",
    "loglik_berman_turner",
    "loglik_parametric",
    "loglik_gradient",
]


@dataclass(frozen=True)
class BinnedCounts:
    """Bin counts aligned to the pixels of ``grid`` (row-major)."""

    grid: Grid
    counts: np.ndarray

    @property
    def n(self):
        return int(self.counts.sum())


def bin_pattern(pattern, grid):
    """Count the points of ``pattern`` in each pixel of ``grid``."""
    if len(pattern) == 0:
        counts = np.zeros(grid.size, dtype=np.int64)
    else:
        counts = np.bincount(grid.bin_index(pattern.xy), minlength=grid.size)
    counts.setflags(write=False)
    return BinnedCounts(grid, counts)


def _eta_at_points(pattern, eta):
    vals = np.asarray(eta(pattern.xy), dtype=float) if len(pattern) else np.zeros(0)
    bad = ~np.isfinite(vals)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise NumericError(f"log-intensity is not finite at data point {i}", index=i)
    return vals


def loglik_exact(pattern, eta, grid=None):
    """Exact IPP log-likelihood up to constants.

    Parameters
    ----------
    pattern : PointPattern
    eta : LinearPredictor
        Point-evaluable log-intensity.
    grid : Grid, optional
        If given, the intensity integral is the midpoint rule on this grid;
        by default it is integrated to near machine precision by
        :meth:`LinearPredictor.integral_exp`.
    """
    data = float(np.sum(_eta_at_points(pattern, eta)))
    if grid is None:
        integral = eta.integral_exp()
    else:
        integral = float(np.sum(grid.weights * safe_exp(eta.on_grid(grid))))
    return data - integral


def _grid_values(eta, grid):
    if isinstance(eta, LinearPredictor):
        return eta.on_grid(grid)
    if isinstance(eta, CovariateField):
        if eta.registration == "pixel" and eta.shape == (grid.ny, grid.nx):
            return eta.values.ravel()
        return eta(grid.nodes)
    vals = np.asarray(eta, dtype=float).ravel()
    if vals.size == 1:
        vals = np.full(grid.size, float(vals[0]))
    if vals.size != grid.size:
        raise ValueError(f"expected {grid.size} grid values, got {vals.size}")
    return vals


def loglik_binned(counts, eta):
    """Poisson log-pmf of ``counts`` with bin means ``w_j exp(eta(x_j))``.

    ``eta`` is an array of node values on ``counts.grid``, a scalar, or a
    point-evaluable predictor/field evaluated at the bin centres.
    """
    grid = counts.grid
    vals = _grid_values(eta, grid)
    k = np.asarray(counts.counts, dtype=float)
    w = grid.weights
    mean = w * safe_exp(vals)
    return float(np.sum(k * (vals + np.log(w)) - mean - gammaln(k + 1.0)))


def loglik_berman_turner(pattern, eta_grid, grid=None):
    """Berman-Turner quadrature approximation to the IPP log-likelihood.

    Parameters
    ----------
    pattern : PointPattern
    eta_grid : array_like, CovariateField or LinearPredictor
        Log-intensity at the nodes of ``grid``.  A pixel-registered field
        supplies its own grid.
    grid : Grid, optional
    """
    if grid is None:
        if isinstance(eta_grid, CovariateField) and eta_grid.registration == "pixel":
            grid = Grid(eta_grid.window, eta_grid.nx, eta_grid.ny)
        else:
            raise ValueError("a grid is required unless eta is a pixel field")
    vals = _grid_values(eta_grid, grid)
    if not np.all(np.isfinite(vals)):
        j = int(np.flatnonzero(~np.isfinite(vals))[0])
        raise NumericError(f"log-intensity is not finite at node {j}", index=j)
    data = 0.0
    if len(pattern):
        idx, a = grid.interpolation_weights(pattern.xy)
        data = float(np.sum(a * vals[idx]))
    return data - float(np.sum(grid.weights * safe_exp(vals)))


def _design_columns(covariates, xy):
    cols = [np.ones(xy.shape[0])]
    for f in covariates:
        cols.append(f(xy) if xy.shape[0] else np.zeros(0))
    return np.column_stack(cols) if xy.shape[0] else np.zeros((0, len(cols)))


def _default_grid(window, covariates):
    best = None
    for f in covariates:
        g, _ = f.cells()
        if best is None or g.size > best.size:
            best = g
    return best if best is not None else Grid(window, 1, 1)


def loglik_parametric(pattern, theta, covariates=(), grid=None):
    """Quadrature log-likelihood of ``eta = theta_0 + sum_k theta_k v_k``.

    Data terms use the covariates at the points; the integral uses the
    midpoint rule on ``grid`` (default: the finest covariate cell grid).
    """
    covariates = list(covariates or ())
    theta = np.asarray(theta, dtype=float)
    grid = grid or _default_grid(pattern.window, covariates)
    X = _design_columns(covariates, pattern.xy)
    Q = _design_columns(covariates, grid.nodes)
    return float(np.sum(X @ theta) - np.sum(grid.weights * safe_exp(Q @ theta)))


def loglik_gradient(pattern, theta, covariates=(), grid=None):
    """Gradient of :func:`loglik_parametric` with respect to ``theta``.

    ``dL/dtheta_k = sum_i v_k(s_i) - sum_j w_j v_k(x_j) exp(eta(x_j))``
    with ``v_0 = 1`` (intercept).
    """
    covariates = list(covariates or ())
    theta = np.asarray(theta, dtype=float)
    grid = grid or _default_grid(pattern.window, covariates)
    X = _design_columns(covariates, pattern.xy)
    Q = _design_columns(covariates, grid.nodes)
    lam = grid.weights * safe_exp(Q @ theta)
    return X.sum(axis=0) - Q.T @ lam
