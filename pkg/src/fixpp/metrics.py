"""
Evaluation of saliency maps against point patterns.

Maps and densities are :class:`~fixpp.domain.CovariateField` rasters; cell
operations (level sets, area counts, exact two-alternative forced choice
probabilities) work on the field's midpoint cells, see
:meth:`~fixpp.domain.CovariateField.cells`.
"""

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from .domain import CovariateField
from .errors import ValidationError

__all__ = [
    "VolumeCurve",
    "MetricReport",
    "contour_volume_curve",
    "auc_2afc",
    "pairwise_pc",
    "exact_pc",
    "auc_optimal",
    "shuffled_auc_correction",
    "area_count",
    "area_count_curve",
    "area_count_integral",
    "DEFAULT_LADDER",
]

DEFAULT_LADDER = np.linspace(0.0, 1.0, 1001)


@dataclass(frozen=True)
class VolumeCurve:
    """Relative volume ``V(alpha)`` of minimum-volume sets on a ladder."""

    alpha: np.ndarray
    volume: np.ndarray
    _knots: tuple = field(default=(), repr=False, compare=False)

    def integral(self):
        """Exact integral of the piecewise-linear curve over [0, 1]."""
        if self._knots:
            c, a = self._knots
            return float(np.trapezoid(a, c))
        return float(np.trapezoid(self.volume, self.alpha))

    def to_csv(self):
        lines = ["alpha,volume"]
        lines += [f"{a:.12g},{v:.12g}" for a, v in zip(self.alpha, self.volume)]
        return "\n".join(lines) + "\n"


def _cells(density):
    grid, values = density.cells()
    return grid, np.asarray(values, dtype=float)


def _descending(values):
    """Indices sorting ``values`` descending, ties by ascending cell index."""
    idx = np.arange(values.size)
    return np.lexsort((idx, -values))


def contour_volume_curve(density, ladder=None):
    """Minimum-volume-set curve of a density raster.

    Cells are sorted by density (descending, ties by index) and probability
    mass accumulated; ``V(alpha)`` interpolates linearly inside the cell where
    the mass ``alpha`` is reached.  ``V(1)`` is 1 by convention: the
    minimum-volume set at level 1 is the whole window.
    """
    grid, v = _cells(density)
    if np.any(v < 0):
        raise ValidationError("density must be non-negative")
    w = grid.weights
    total = float(np.sum(v * w))
    if total <= 0:
        raise ValidationError("density is zero everywhere")
    if abs(total - 1.0) > 1e-6:
        warnings.warn(f"density integrates to {total:.6g}; renormalizing",
                      RuntimeWarning, stacklevel=2)
    order = _descending(v)
    mass = np.concatenate([[0.0], np.cumsum((v * w)[order]) / total])
    area = np.concatenate([[0.0], np.cumsum(w[order]) / grid.window.area()])
    mass[-1] = 1.0
    # Drop zero-mass cells so interpolation picks the smallest area.
    keep = np.concatenate([[True], np.diff(mass) > 0])
    c, a = mass[keep], area[keep]
    ladder = DEFAULT_LADDER if ladder is None else np.asarray(ladder, dtype=float)
    vol = np.interp(ladder, c, a)
    vol[ladder >= 1.0] = 1.0
    vol[ladder <= 0.0] = 0.0
    knots = (np.append(c, 1.0), np.append(a, 1.0)) if a[-1] < 1.0 else (c, a)
    return VolumeCurve(ladder, vol, (knots[0], knots[1]))


def _values(m, pattern):
    if len(pattern) == 0:
        raise ValidationError("pattern is empty")
    return np.asarray(m(pattern.xy), dtype=float)


def _pc_from_values(f, c):
    c = np.sort(c)
    lo = np.searchsorted(c, f, side="left")
    hi = np.searchsorted(c, f, side="right")
    return float(np.sum(lo + 0.5 * (hi - lo)) / (f.size * c.size))


def auc_2afc(m, fixated, control):
    """Probability that ``m`` ranks a fixated point above a control point.

    Uses all ``n_f * n_c`` pairs exactly (by sorting), ties count one half.
    """
    return _pc_from_values(_values(m, fixated), _values(m, control))


def pairwise_pc(scores, p, q):
    """Exact ``sum_ij p_i q_j [I(s_i > s_j) + I(s_i == s_j) / 2]``."""
    scores = np.asarray(scores, dtype=float)
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    order = np.argsort(scores, kind="stable")
    s = scores[order]
    ps, qs = p[order], q[order]
    starts = np.flatnonzero(np.concatenate([[True], s[1:] != s[:-1]]))
    pg = np.add.reduceat(ps, starts)
    qg = np.add.reduceat(qs, starts)
    q_below = np.concatenate([[0.0], np.cumsum(qg)[:-1]])
    return float(np.sum(pg * (q_below + 0.5 * qg)) / (p.sum() * q.sum()))


def _cell_masses(lam, phi):
    grid, lv = _cells(lam)
    if np.any(lv < 0):
        raise ValidationError("lambda density must be non-negative")
    if phi is None:
        pv = np.ones_like(lv)
    elif isinstance(phi, CovariateField):
        pv = np.asarray(phi(grid.nodes), dtype=float)
    else:
        pv = np.asarray(phi, dtype=float).ravel()
        if pv.size != lv.size:
            raise ValidationError("control density does not match the lambda cells")
    if np.any(pv < 0):
        raise ValidationError("control density must be non-negative")
    w = grid.weights
    return grid, lv * w, pv * w, lv, pv


def auc_optimal(lam, phi=None):
    """Exact forced-choice accuracy of the Bayes rule ``m = lambda / phi``.

    Parameters
    ----------
    lam : CovariateField
        Fixation density (normalized internally).
    phi : CovariateField, optional
        Control density; uniform if omitted.

    Raises
    ------
    ValidationError
        If ``phi`` vanishes in a cell where ``lambda`` is positive.
    """
    grid, p, q, lv, pv = _cell_masses(lam, phi)
    bad = (pv <= 0) & (lv > 0)
    if np.any(bad):
        raise ValidationError(
            f"control density is zero where lambda is positive (cell {int(np.flatnonzero(bad)[0])})"
        )
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(pv > 0, lv / np.where(pv > 0, pv, 1.0), 0.0)
    return pairwise_pc(ratio, p, q)


def exact_pc(m, lam, phi=None):
    """Exact forced-choice accuracy of map ``m`` (values per cell of ``lam``)."""
    grid, p, q, _, _ = _cell_masses(lam, phi)
    if isinstance(m, CovariateField):
        scores = m(grid.nodes)
    else:
        scores = np.asarray(m, dtype=float).ravel()
    return pairwise_pc(scores, p, q)


def shuffled_auc_correction(m, control_intensity, eps=None):
    """Corrected map ``log max(m, eps) - log phi`` on the lattice of ``m``.

    ``eps`` defaults to ``1e-12 * max(m)``.
    """
    phi = control_intensity(m.nodes())
    if np.any(phi <= 0):
        raise ValidationError("control intensity must be positive wherever m is evaluated")
    mv = m.values.ravel()
    top = float(np.max(mv))
    if eps is None:
        if top <= 0:
            raise ValidationError("saliency map has no positive values")
        eps = 1e-12 * top
    corrected = np.log(np.maximum(mv, eps)) - np.log(phi)
    return CovariateField(corrected.reshape(m.shape), m.window, m.registration)


def _area_count_setup(m, fixated):
    if len(fixated) == 0:
        raise ValidationError("pattern is empty")
    grid, v = _cells(m)
    order = _descending(v)
    counts = np.bincount(grid.bin_index(fixated.xy), minlength=grid.size)[order]
    cum_counts = np.concatenate([[0.0], np.cumsum(counts)])
    return grid.size, counts, cum_counts, len(fixated)


def _area_count_eval(q, size, counts, cum_counts, n):
    q = np.asarray(q, dtype=float)
    pos = q * size
    k = np.minimum(np.floor(pos).astype(np.int64), size - 1)
    frac = pos - k
    full = cum_counts[k]
    out = (full + frac * counts[k]) / n
    return np.where(q >= 1.0, 1.0, out)


def area_count(m, fixated, q):
    """Fraction of points inside the top-``q`` area of ``m``.

    Cells enter in descending order of ``m`` (ties by cell index); the cell
    straddling area ``q`` contributes its points in proportion to the part of
    its area that is included.
    """
    if not 0 < q < 1:
        raise ValidationError(f"q must lie in (0, 1), got {q}")
    return float(_area_count_eval(q, *_area_count_setup(m, fixated)))


def area_count_curve(m, fixated, ladder=None):
    ladder = DEFAULT_LADDER if ladder is None else np.asarray(ladder, dtype=float)
    return ladder, _area_count_eval(ladder, *_area_count_setup(m, fixated))


def area_count_integral(m, fixated, ladder=None):
    """Trapezoid integral ``A_c`` of the area-count curve over ``q``."""
    q, ac = area_count_curve(m, fixated, ladder)
    return float(np.trapezoid(ac, q))


def _fmt(x):
    return None if x is None or not np.isfinite(x) else float(f"{float(x):.12g}")


@dataclass(frozen=True)
class MetricReport:
    """Scores of one saliency map against one (pooled) pattern."""

    auc: float
    area_counts: dict
    area_count_integral: float
    volume_integral: float
    auc_shuffled: float = None
    auc_shuffled_uncorrected: float = None
    n_fixations: int = 0
    n_controls: int = 0
    curve: VolumeCurve = None

    def to_dict(self):
        out = {
            "auc": _fmt(self.auc),
            "area_counts": {f"{q:g}": _fmt(v) for q, v in self.area_counts.items()},
            "area_count_integral": _fmt(self.area_count_integral),
            "one_minus_volume_integral": _fmt(1.0 - self.volume_integral),
            "n_fixations": int(self.n_fixations),
            "n_controls": int(self.n_controls),
        }
        if self.auc_shuffled is not None:
            out["auc_shuffled"] = _fmt(self.auc_shuffled)
            out["auc_shuffled_uncorrected"] = _fmt(self.auc_shuffled_uncorrected)
        return out

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2) + "\n"
