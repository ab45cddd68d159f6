"""
Simulation-based model criticism.

Datasets are replicated from a fitted model, conditioning each pattern on its
observed number of points, and pooled regional counts and marginal
histograms of the data are compared against the replicate distribution.
"""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .domain import Partition
from .errors import ValidationError
from .simulate import sample_conditional_n

__all__ = ["RegionSummary", "DiagnosticSummary", "pooled_margin_histogram",
           "posterior_predictive_check"]


def _pooled(patterns):
    arrs = [p.xy for p in patterns if len(p)]
    return np.concatenate(arrs) if arrs else np.zeros((0, 2))


def pooled_margin_histogram(patterns, axis, bins=16, window=None):
    """Counts of pooled points in equal bins along ``axis`` (0 = x, 1 = y).

    Returns
    -------
    counts : ndarray of int
    edges : ndarray
    """
    bins = int(bins)
    if bins < 2:
        raise ValidationError(f"need at least 2 bins, got {bins}")
    if axis not in (0, 1, "x", "y"):
        raise ValidationError(f"axis must be 0/'x' or 1/'y', got {axis!r}")
    axis = {"x": 0, "y": 1}.get(axis, axis)
    patterns = list(patterns)
    window = window or patterns[0].window
    lo, hi = (window.x_min, window.x_max) if axis == 0 else (window.y_min, window.y_max)
    edges = np.linspace(lo, hi, bins + 1)
    v = _pooled(patterns)[:, axis]
    idx = np.clip(np.floor((v - lo) / (hi - lo) * bins).astype(np.int64), 0, bins - 1)
    return np.bincount(idx, minlength=bins), edges


@dataclass(frozen=True)
class RegionSummary:
    bounds: tuple
    observed: int
    mean: float
    lower: float
    upper: float

    @property
    def flag(self):
        if self.observed < self.lower:
            return "low"
        if self.observed > self.upper:
            return "high"
        return ""


def _fmt(x):
    return float(f"{float(x):.12g}")


@dataclass(frozen=True)
class DiagnosticSummary:
    """Observed versus replicated regional counts and pooled margins."""

    regions: tuple
    n_replicates: int
    margins: dict
    discrepancy: float
    shape: tuple = None

    @property
    def flags(self):
        return [r.flag for r in self.regions]

    @property
    def flag_rate(self):
        return sum(bool(f) for f in self.flags) / len(self.regions)

    def flag_grid(self):
        """Flags as a ``(ny, nx)`` array for regular partitions."""
        if self.shape is None:
            raise ValueError("partition is not regular")
        return np.array(self.flags, dtype=object).reshape(self.shape)

    def to_dict(self):
        return {
            "n_replicates": self.n_replicates,
            "discrepancy": _fmt(self.discrepancy),
            "flag_rate": _fmt(self.flag_rate),
            "regions": [
                {
                    "bounds": [_fmt(b) for b in r.bounds],
                    "observed": int(r.observed),
                    "replicate_mean": _fmt(r.mean),
                    "q025": _fmt(r.lower),
                    "q975": _fmt(r.upper),
                    "flag": r.flag,
                }
                for r in self.regions
            ],
            "margins": {
                k: {
                    "edges": [_fmt(e) for e in v["edges"]],
                    "observed": [int(c) for c in v["observed"]],
                    "replicate_mean": [_fmt(c) for c in v["replicate_mean"]],
                }
                for k, v in self.margins.items()
            },
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def regions_csv(self):
        lines = ["x0,x1,y0,y1,observed,replicate_mean,q025,q975,flag"]
        for r in self.regions:
            b = ",".join(f"{v:.12g}" for v in r.bounds)
            lines.append(f"{b},{r.observed},{r.mean:.12g},{r.lower:.12g},{r.upper:.12g},{r.flag}")
        return "\n".join(lines) + "\n"

    def margins_csv(self):
        lines = ["axis,bin_lo,bin_hi,observed,replicate_mean"]
        for k, v in self.margins.items():
            e = v["edges"]
            for j, (o, m) in enumerate(zip(v["observed"], v["replicate_mean"])):
                lines.append(f"{k},{e[j]:.12g},{e[j + 1]:.12g},{int(o)},{m:.12g}")
        return "\n".join(lines) + "\n"


def _replicate_counts(predictors, sizes, partition, bins, window, rng):
    pts = []
    for eta, n in zip(predictors, sizes):
        if n:
            pts.append(sample_conditional_n(eta, n, rng).xy)
    xy = np.concatenate(pts) if pts else np.zeros((0, 2))
    counts = partition.counts(xy) if xy.shape[0] else np.zeros(len(partition), dtype=np.int64)
    hx = _hist(xy[:, 0], window.x_min, window.x_max, bins)
    hy = _hist(xy[:, 1], window.y_min, window.y_max, bins)
    return counts, hx, hy


def _hist(v, lo, hi, bins):
    idx = np.clip(np.floor((v - lo) / (hi - lo) * bins).astype(np.int64), 0, bins - 1)
    return np.bincount(idx, minlength=bins)


def posterior_predictive_check(fit, patterns, covariates=None, n_replicates=99,
                               partition=None, rng=None, bins=16, threads=1):
    """Compare pooled data against datasets replicated from ``fit``.

    Parameters
    ----------
    fit : FitResult
        Its latent field, if any, is part of the replicated log-intensity.
    patterns : sequence of PointPattern
    covariates : mapping, optional
    n_replicates : int
        At least 20.
    partition : Partition, optional
        Defaults to a regular 4x4 partition of the window.
    rng : numpy.random.Generator
        Each replicate draws from its own child generator.
    bins : int
        Margin histogram bins.
    threads : int

    Returns
    -------
    DiagnosticSummary
    """
    if n_replicates < 20:
        raise ValidationError(f"n_replicates must be at least 20, got {n_replicates}")
    if rng is None:
        raise ValidationError("an explicit rng is required")
    patterns = list(patterns)
    window = patterns[0].window
    partition = partition or Partition.regular(window, 4, 4)
    if partition.window != window:
        raise ValidationError("partition window differs from the pattern window")
    predictors = [fit.predictor(p, covariates, index=i) for i, p in enumerate(patterns)]
    sizes = [len(p) for p in patterns]
    children = rng.spawn(n_replicates)

    def one(child):
        return _replicate_counts(predictors, sizes, partition, bins, window, child)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            reps = list(ex.map(one, children))
    else:
        reps = [one(c) for c in children]
    counts = np.array([r[0] for r in reps], dtype=float)
    hx = np.array([r[1] for r in reps], dtype=float)
    hy = np.array([r[2] for r in reps], dtype=float)

    data = _pooled(patterns)
    observed = partition.counts(data) if data.shape[0] else np.zeros(len(partition), dtype=np.int64)
    mean = counts.mean(axis=0)
    lower = np.quantile(counts, 0.025, axis=0)
    upper = np.quantile(counts, 0.975, axis=0)
    regions = tuple(
        RegionSummary((r.x0, r.x1, r.y0, r.y1), int(o), float(m), float(lo), float(hi))
        for r, o, m, lo, hi in zip(partition.rects, observed, mean, lower, upper)
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(mean > 0, (observed - mean) ** 2 / mean, 0.0)
    margins = {}
    for key, rep, ax in (("x", hx, 0), ("y", hy, 1)):
        obs, edges = pooled_margin_histogram(patterns, ax, bins, window)
        margins[key] = {"edges": edges, "observed": obs, "replicate_mean": rep.mean(axis=0)}
    return DiagnosticSummary(regions, int(n_replicates), margins, float(np.sum(terms)),
                             getattr(partition, "shape", None))
