"""
Random generation of point patterns.

All samplers take a :class:`numpy.random.Generator`; :func:`make_rng` builds
one from a ``(seed, stream)`` pair so that identical pairs give bit-identical
output and different streams are statistically independent.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .domain import PointPattern
from .errors import NumericError, ValidationError
from .intensity import EXP_CLAMP, LinearPredictor

__all__ = [
    "make_rng",
    "sample_homogeneous",
    "sample_thinning",
    "sample_conditional_n",
    "CoefficientDistribution",
    "fit_coefficient_kde",
    "sample_predictive",
    "replicate_dataset",
]


def make_rng(seed, stream=0):
    """PCG64 generator for a 64-bit ``seed`` and a stream id."""
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValidationError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(int(stream),))))


def _uniform_points(window, size, rng):
    u = rng.random((size, 2))
    x = window.x_min + u[:, 0] * window.width
    y = window.y_min + u[:, 1] * window.height
    return np.column_stack([x, y])


def sample_homogeneous(window, lam0, rng, group_id=None, labels=None):
    """Homogeneous Poisson process with intensity ``lam0``."""
    lam0 = float(lam0)
    if not (lam0 >= 0 and np.isfinite(lam0)):
        raise ValidationError(f"intensity must be finite and non-negative, got {lam0}")
    n = int(rng.poisson(lam0 * window.area()))
    return PointPattern(_uniform_points(window, n, rng), window, group_id, labels)


def _bound(eta):
    m = float(eta.upper_bound())
    if not np.isfinite(m) or m > EXP_CLAMP:
        raise NumericError(f"log-intensity upper bound {m} gives a non-finite lambda_max")
    return m


def sample_thinning(eta, rng, group_id=None, labels=None):
    """Lewis-Shedler thinning of a homogeneous process at rate ``lambda_max``.

    Parameters
    ----------
    eta : LinearPredictor
        Log-intensity; its window is the sampling window.
    rng : numpy.random.Generator
    """
    window = eta.window
    m = _bound(eta)
    n = int(rng.poisson(math.exp(m) * window.area()))
    cand = _uniform_points(window, n, rng)
    u = rng.random(n)
    keep = u < np.exp(eta(cand, check=False) - m) if n else np.zeros(0, dtype=bool)
    return PointPattern(cand[keep], window, group_id, labels)


def sample_conditional_n(eta, n, rng, group_id=None, labels=None):
    """Exactly ``n`` i.i.d. points with density proportional to ``exp(eta)``.

    Rejection sampling against ``exp(max eta)``.  The intercept cancels in
    the normalized density and is dropped before sampling, and batch sizes
    depend only on integer acceptance counts, so ``eta`` and ``eta + c``
    consume the random stream identically and return identical patterns.
    """
    n = int(n)
    if n < 0:
        raise ValidationError(f"n must be non-negative, got {n}")
    window = eta.window
    if n == 0:
        return PointPattern(np.zeros((0, 2)), window, group_id, labels)
    if isinstance(eta, LinearPredictor):
        eta = LinearPredictor(window, 0.0, eta.terms)
    m = _bound(eta)
    out = []
    accepted = 0
    tried = 0
    while accepted < n:
        need = n - accepted
        rate = (accepted + 1) / (tried + 2)
        batch = int(min(max(math.ceil(1.2 * need / rate) + 16, 64), 4_000_000))
        cand = _uniform_points(window, batch, rng)
        u = rng.random(batch)
        keep = u < np.exp(eta(cand, check=False) - m)
        acc = cand[keep]
        out.append(acc[:need])
        accepted += min(acc.shape[0], need)
        tried += batch
    return PointPattern(np.concatenate(out), window, group_id, labels)


@dataclass(frozen=True)
class CoefficientDistribution:
    """Gaussian kernel density over coefficient estimates.

    ``bandwidth == 0`` with a single support value is a point mass; drawing
    from it returns that value without consuming randomness.
    """

    support: np.ndarray
    bandwidth: float

    @classmethod
    def point_mass(cls, value):
        return cls(np.array([float(value)]), 0.0)

    @property
    def is_point_mass(self):
        return self.bandwidth == 0.0

    def mean(self):
        return float(np.mean(self.support))

    def sample(self, rng, size=None):
        if self.is_point_mass:
            v = float(self.support[0])
            return v if size is None else np.full(size, v)
        k = 1 if size is None else int(np.prod(size))
        idx = rng.integers(0, self.support.size, size=k)
        draw = self.support[idx] + self.bandwidth * rng.standard_normal(k)
        return float(draw[0]) if size is None else draw.reshape(size)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.is_point_mass:
            raise ValidationError("a point mass has no density")
        z = (x[..., None] - self.support) / self.bandwidth
        return np.mean(stats.norm.pdf(z), axis=-1) / self.bandwidth


def silverman_bandwidth(values):
    """``0.9 * min(sd, IQR / 1.34) * n^(-1/5)``; falls back to whichever is positive."""
    v = np.asarray(values, dtype=float)
    sd = float(np.std(v, ddof=1))
    iqr = float(np.subtract(*np.percentile(v, [75, 25])))
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    return 0.9 * spread * v.size ** (-0.2)


def fit_coefficient_kde(estimates, bandwidth=None):
    """Gaussian KDE over coefficient estimates.

    Parameters
    ----------
    estimates : sequence of float
        At least two finite values.
    bandwidth : float, optional
        Overrides Silverman's rule.
    """
    v = np.asarray(estimates, dtype=float).ravel()
    if v.size < 2:
        raise ValidationError(f"need at least 2 estimates, got {v.size}")
    if not np.all(np.isfinite(v)):
        raise ValidationError("coefficient estimates must be finite")
    if bandwidth is None:
        bandwidth = silverman_bandwidth(v)
        if not bandwidth > 0:
            bandwidth = 1e-6 * max(1.0, float(np.max(np.abs(v))))
            warnings.warn(
                "coefficient estimates have no spread; using a minimal bandwidth",
                RuntimeWarning, stacklevel=2,
            )
    elif not bandwidth > 0:
        raise ValidationError(f"bandwidth must be positive, got {bandwidth}")
    v.setflags(write=False)
    return CoefficientDistribution(v, float(bandwidth))


def sample_predictive(new_map, coeff, n, rng, bias=None, group_id=None):
    """Predictive pattern for an unseen covariate map.

    Draws ``beta`` from ``coeff`` and samples exactly ``n`` points from
    ``exp(beta * m + g)``; the intercept cancels under conditioning on ``n``.

    Parameters
    ----------
    new_map : CovariateField
    coeff : CoefficientDistribution
    n : int
    rng : numpy.random.Generator
    bias : LatentField or CovariateField, optional
        Additive spatial bias ``g``.
    """
    if int(n) < 1:
        raise ValidationError(f"n must be at least 1, got {n}")
    beta = coeff.sample(rng)
    eta = LinearPredictor(new_map.window, 0.0, [(beta, new_map)])
    if bias is not None:
        eta = eta.with_term(1.0, getattr(bias, "mean", bias))
    return sample_conditional_n(eta, n, rng, group_id=group_id)


def replicate_dataset(fit, patterns, covariates, rng):
    """One conditional-on-n draw per pattern from its fitted log-intensity."""
    out = []
    for i, p in enumerate(patterns):
        eta = fit.predictor(p, covariates, index=i)
        out.append(sample_conditional_n(eta, len(p), rng, p.group_id, dict(p.labels)))
    return out
