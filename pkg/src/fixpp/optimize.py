"""
Concave maximization by BFGS with Armijo backtracking.

The inverse-Hessian approximation is seeded with the exact inverse negative
Hessian at the start point, updated by the standard BFGS formula (updates
with non-positive curvature ``s'y`` are skipped) and, once the gradient
tolerance is met, the solution is polished with a few Newton steps.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import ConvergenceError

__all__ = ["OptimizeResult", "maximize_bfgs"]


@dataclass
class OptimizeResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    iterations: int
    grad_norm: float
    trace: list = field(default_factory=list)


def _tolerance(fval, tol):
    return tol * (1.0 + abs(fval))


def _safe_inverse(H):
    """Inverse of a symmetric positive definite matrix, regularized if needed."""
    try:
        c = linalg.cho_factor(H, check_finite=True)
        return linalg.cho_solve(c, np.eye(H.shape[0]))
    except (linalg.LinAlgError, ValueError):
        vals, vecs = np.linalg.eigh(0.5 * (H + H.T))
        floor = max(1e-12, 1e-10 * float(np.max(np.abs(vals))) if vals.size else 1.0)
        vals = np.maximum(vals, floor)
        return (vecs / vals) @ vecs.T


def maximize_bfgs(fun, grad, x0, neg_hess=None, tol=1e-6, max_iter=500,
                  polish_steps=4):
    """Maximize a smooth concave function.

    Parameters
    ----------
    fun, grad : callable
        Objective and its gradient.  ``fun`` may return ``-inf`` for points
        outside its finite domain; such steps are rejected by the line search.
    x0 : ndarray
    neg_hess : callable, optional
        Exact negative Hessian, used to seed the inverse-Hessian
        approximation and for the final Newton polish.
    tol : float
        Stop when ``max|grad| <= tol * (1 + |f|)``.
    max_iter : int

    Raises
    ------
    ConvergenceError
        If the tolerance is not met within ``max_iter`` iterations.
    """
    x = np.array(x0, dtype=float)
    f = float(fun(x))
    if not np.isfinite(f):
        raise ConvergenceError("objective is not finite at the start point", trace=[f])
    g = np.asarray(grad(x), dtype=float)
    n = x.size
    Hinv = _safe_inverse(neg_hess(x)) if neg_hess is not None else np.eye(n)
    trace = [f]
    it = 0
    gnorm = float(np.max(np.abs(g))) if n else 0.0
    while gnorm > _tolerance(f, tol):
        if it >= max_iter:
            raise ConvergenceError(
                f"no convergence after {max_iter} iterations (|grad|={gnorm:.3g})",
                trace=trace, grad_norm=gnorm,
            )
        it += 1
        found = _line_search(fun, x, f, g, Hinv @ g)
        if found is None and neg_hess is not None:
            # Reset to the exact Newton direction.
            Hinv = _safe_inverse(neg_hess(x))
            found = _line_search(fun, x, f, g, Hinv @ g)
        if found is None:
            found = _line_search(fun, x, f, g, g.copy())
        if found is None:
            raise ConvergenceError(
                "line search failed to find an ascent step",
                trace=trace, grad_norm=gnorm,
            )
        x_new, f_new = found
        g_new = np.asarray(grad(x_new), dtype=float)
        s = x_new - x
        y = g - g_new  # gradient change of the negated objective
        sy = float(s @ y)
        if sy > 0.0:
            rho = 1.0 / sy
            V = np.eye(n) - rho * np.outer(s, y)
            Hinv = V @ Hinv @ V.T + rho * np.outer(s, s)
        x, f, g = x_new, f_new, g_new
        gnorm = float(np.max(np.abs(g)))
        trace.append(f)

    if neg_hess is not None:
        # Newton polish: quadratic convergence well below the stopping tolerance.
        for _ in range(polish_steps):
            d = _safe_inverse(neg_hess(x)) @ g
            if not np.all(np.isfinite(d)) or np.max(np.abs(d), initial=0.0) < 1e-15:
                break
            x_new = x + d
            f_new = float(fun(x_new))
            if not np.isfinite(f_new) or f_new < f - 1e-12 * (1.0 + abs(f)):
                break
            g_new = np.asarray(grad(x_new), dtype=float)
            if np.max(np.abs(g_new)) >= gnorm:
                break
            x, g, f = x_new, g_new, f_new
            gnorm = float(np.max(np.abs(g)))
            if f >= trace[-1]:
                trace.append(f)
    return OptimizeResult(x=x, fun=f, grad=g, iterations=it, grad_norm=gnorm, trace=trace)


def _line_search(fun, x, f, g, d, c1=1e-4):
    """Armijo backtracking along ascent direction ``d``; ``None`` on failure."""
    slope = float(g @ d)
    if not slope > 0:
        return None
    step = 1.0
    while step > 1e-14:
        x_new = x + step * d
        f_new = float(fun(x_new))
        if np.isfinite(f_new) and f_new >= f + c1 * step * slope:
            return x_new, f_new
        step *= 0.5
    return None
