"""
Log-intensity surfaces.

A :class:`LinearPredictor` is ``eta(s) = intercept + sum_k coef_k * field_k(s)``
with each field evaluated bilinearly.  It serves both as the parametric form
(coefficients over named covariates) and as the grid form (a single
pixel-registered field holding ``eta`` at quadrature nodes).
"""

import warnings

import numpy as np

from .domain import Rect, Window
from .errors import NumericError

__all__ = ["LinearPredictor", "OverflowGuardWarning", "safe_exp", "EXP_CLAMP"]

EXP_CLAMP = 700.0

# Tensor Gauss-Legendre order used inside each bilinear patch.
_GL_ORDER = 8


class OverflowGuardWarning(RuntimeWarning):
    """Log-intensity values above the exponent clamp were truncated."""


def safe_exp(eta):
    """``exp(eta)`` with ``eta`` clamped to ``EXP_CLAMP`` (warns if clamped)."""
    eta = np.asarray(eta, dtype=float)
    if np.any(eta > EXP_CLAMP):
        warnings.warn(
            f"log-intensity exceeds {EXP_CLAMP}; clamped before exponentiation",
            OverflowGuardWarning,
            stacklevel=2,
        )
        eta = np.minimum(eta, EXP_CLAMP)
    return np.exp(eta)


class LinearPredictor:
    """``eta(s) = intercept + sum_k coef_k * field_k(s)``.

    Parameters
    ----------
    window : Window
    intercept : float
    terms : sequence of (float, CovariateField)
        Fields must be defined on ``window``.
    """

    __slots__ = ("window", "intercept", "terms")

    def __init__(self, window, intercept=0.0, terms=()):
        self.window = window
        self.intercept = float(intercept)
        clean = []
        for coef, fld in terms:
            if fld.window != window:
                raise ValueError("all term fields must share the predictor window")
            clean.append((float(coef), fld))
        self.terms = tuple(clean)
        if not np.isfinite(self.intercept) or not all(np.isfinite(c) for c, _ in clean):
            raise NumericError("predictor coefficients must be finite")

    @classmethod
    def constant(cls, window, value):
        return cls(window, value, ())

    @classmethod
    def from_field(cls, field, intercept=0.0):
        """Grid or raster form: ``eta = intercept + field``."""
        return cls(field.window, intercept, [(1.0, field)])

    @classmethod
    def from_grid_values(cls, grid, values):
        return cls.from_field(grid.field(values))

    def shifted(self, c):
        """The predictor ``eta + c``."""
        return LinearPredictor(self.window, self.intercept + float(c), self.terms)

    def scaled_term(self, k, factor):
        """Copy with the coefficient of term ``k`` multiplied by ``factor``."""
        terms = list(self.terms)
        c, f = terms[k]
        terms[k] = (c * factor, f)
        return LinearPredictor(self.window, self.intercept, terms)

    def with_term(self, coef, field):
        return LinearPredictor(self.window, self.intercept, self.terms + ((coef, field),))

    def __call__(self, xy, check=True):
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        out = np.full(xy.shape[0], self.intercept)
        for coef, fld in self.terms:
            if coef == 0.0:
                continue
            out += coef * fld.evaluate(xy, check=check)
        return out

    def on_grid(self, grid):
        """Values at the nodes of ``grid``."""
        return self(grid.nodes, check=False)

    def as_grid_field(self, grid):
        return grid.field(self.on_grid(grid))

    def _shared_lattice(self):
        keys = {f.lattice_key() for _, f in self.terms}
        return len(keys) == 1

    def upper_bound(self):
        """An upper bound on ``eta`` over the window.

        Exact when all terms share one lattice (bilinear interpolation attains
        its maximum at a node); otherwise the sum of per-term maxima.
        """
        if not self.terms:
            return self.intercept
        if self._shared_lattice():
            combined = sum(c * f.values for c, f in self.terms)
            return self.intercept + float(np.max(combined))
        total = self.intercept
        for c, f in self.terms:
            total += c * float(f.values.max() if c >= 0 else f.values.min())
        return total

    def breakpoints(self, region=None):
        """Sorted x and y coordinates where ``eta`` may be non-smooth."""
        x0, x1, y0, y1 = _region_bounds(self.window, region)
        xs = [x0, x1]
        ys = [y0, y1]
        for _, f in self.terms:
            xs.extend(f.xs)
            ys.extend(f.ys)
        xs = np.unique(np.clip(np.asarray(xs), x0, x1))
        ys = np.unique(np.clip(np.asarray(ys), y0, y1))
        return xs, ys

    def integral_exp(self, region=None, order=_GL_ORDER):
        """``integral of exp(eta)`` over the window or a rectangular region.

        Uses tensor Gauss-Legendre quadrature inside every cell of the union
        of all term lattices, where ``eta`` is a smooth bilinear function.
        """
        xs, ys = self.breakpoints(region)
        gx, wx = _composite_gl(xs, order)
        gy, wy = _composite_gl(ys, order)
        total = 0.0
        # Process by strips of y to bound memory.
        chunk = max(1, 2_000_000 // max(1, gx.size))
        X = gx
        for start in range(0, gy.size, chunk):
            yy = gy[start:start + chunk]
            XX, YY = np.meshgrid(X, yy)
            eta = self(np.column_stack([XX.ravel(), YY.ravel()]), check=False)
            if not np.all(np.isfinite(eta)):
                raise NumericError("non-finite log-intensity during integration")
            vals = safe_exp(eta).reshape(yy.size, X.size)
            total += float(wy[start:start + chunk] @ vals @ wx)
        return total

    def __repr__(self):
        return f"LinearPredictor(intercept={self.intercept:.6g}, n_terms={len(self.terms)})"


def _region_bounds(window, region):
    if region is None:
        return window.bounds
    if isinstance(region, Rect):
        b = (region.x0, region.x1, region.y0, region.y1)
    elif isinstance(region, Window):
        b = region.bounds
    else:
        b = tuple(float(v) for v in region)
    x0 = max(b[0], window.x_min)
    x1 = min(b[1], window.x_max)
    y0 = max(b[2], window.y_min)
    y1 = min(b[3], window.y_max)
    if not (x0 < x1 and y0 < y1):
        raise ValueError(f"region {b} does not overlap the window")
    return x0, x1, y0, y1


def _composite_gl(edges, order):
    t, w = np.polynomial.legendre.leggauss(order)
    a = edges[:-1, None]
    b = edges[1:, None]
    half = 0.5 * (b - a)
    pts = (a + b) * 0.5 + half * t[None, :]
    wts = half * w[None, :]
    return pts.ravel(), wts.ravel()
