"""
Geometric and raster types shared by the rest of the package.

Conventions
-----------
* Windows are closed rectangles: a point on the boundary is inside.
* A :class:`CovariateField` stores values on a regular lattice, row-major
  with shape ``(ny, nx)`` (rows run along y).  Two lattice registrations
  are supported:

  ``"node"``
      lattice nodes sit on the window edges, ``x_k = x_min + k * W / (nx - 1)``.
      This is the default for covariates: evaluation anywhere in the window
      is a bilinear interpolation, exact at nodes and for affine fields.
  ``"pixel"``
      nodes sit at pixel centres, ``x_k = x_min + (k + 1/2) * W / nx``.
      Values on a :class:`Grid` (quadrature nodes, latent fields) use this
      registration.  In the half-pixel strip along the border the surface is
      extended by clamping to the nearest node row/column.

* A :class:`Grid` is the quadrature discretization: ``nx * ny`` equal pixels
  partitioning the window, one node per pixel at its centre, weight equal to
  the pixel area (midpoint rule).
"""

from dataclasses import dataclass
from types import MappingProxyType

import numpy as np

from .errors import DegenerateCovariateError, NumericError, OutOfDomainError

__all__ = [
    "Window",
    "Rect",
    "PointPattern",
    "CovariateField",
    "Grid",
    "Partition",
    "eval_field",
    "integrate_field",
    "count_in_region",
    "distance_covariate",
    "minmax_scale",
]

# Fractional lattice indices this close to an integer snap onto the node,
# so that evaluating at a node returns the stored value exactly.
_SNAP = 1e-12


@dataclass(frozen=True)
class Window:
    """Closed axis-aligned observation window."""

    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        for name in ("x_min", "x_max", "y_min", "y_max"):
            v = float(getattr(self, name))
            if not np.isfinite(v):
                raise ValueError(f"window bound {name} must be finite")
            object.__setattr__(self, name, v)
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(
                "window needs x_min < x_max and y_min < y_max, got "
                f"{self.bounds}"
            )

    @classmethod
    def unit(cls):
        return cls(0.0, 1.0, 0.0, 1.0)

    @property
    def bounds(self):
        return (self.x_min, self.x_max, self.y_min, self.y_max)

    @property
    def width(self):
        return self.x_max - self.x_min

    @property
    def height(self):
        return self.y_max - self.y_min

    @property
    def center(self):
        return (0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))

    @property
    def diagonal(self):
        return float(np.hypot(self.width, self.height))

    def area(self):
        return self.width * self.height

    def contains(self, xy):
        """Boolean mask of the points of ``xy`` (shape ``(n, 2)``) inside."""
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        x, y = xy[:, 0], xy[:, 1]
        return (
            (x >= self.x_min) & (x <= self.x_max)
            & (y >= self.y_min) & (y <= self.y_max)
        )


@dataclass(frozen=True)
class Rect:
    """Rectangular region usable as a :func:`count_in_region` predicate.

    The left and bottom edges are always included.  The right and top edges
    are included only when ``closed_right``/``closed_top`` is set, which lets
    a set of rectangles partition a closed window without double counting.
    """

    x0: float
    x1: float
    y0: float
    y1: float
    closed_right: bool = True
    closed_top: bool = True

    def area(self):
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    def __call__(self, xy):
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        x, y = xy[:, 0], xy[:, 1]
        inx = (x >= self.x0) & ((x <= self.x1) if self.closed_right else (x < self.x1))
        iny = (y >= self.y0) & ((y <= self.y1) if self.closed_top else (y < self.y1))
        return inx & iny


class PointPattern:
    """A finite set of points in a window, optionally labelled.

    Parameters
    ----------
    xy : array_like, shape (n, 2)
        Point coordinates.  Duplicates are allowed.
    window : Window
    group_id : str, optional
        Pattern identifier (typically image x subject).
    labels : mapping, optional
        Extra per-pattern attributes (image id, subject id, category...).
        These drive label-scoped model terms.
    """

    __slots__ = ("_xy", "window", "group_id", "labels")

    def __init__(self, xy, window, group_id=None, labels=None):
        arr = np.array(xy, dtype=float, copy=True)
        if arr.size == 0:
            arr = arr.reshape(0, 2)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValueError(f"points must have shape (n, 2), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise NumericError("point coordinates must be finite")
        inside = window.contains(arr)
        if not np.all(inside):
            bad = int(np.flatnonzero(~inside)[0])
            raise OutOfDomainError(
                f"point {bad} at {tuple(arr[bad])} lies outside window {window.bounds}"
            )
        arr.setflags(write=False)
        self._xy = arr
        self.window = window
        self.group_id = None if group_id is None else str(group_id)
        self.labels = MappingProxyType(dict(labels or {}))

    @property
    def xy(self):
        return self._xy

    @property
    def x(self):
        return self._xy[:, 0]

    @property
    def y(self):
        return self._xy[:, 1]

    def __len__(self):
        return self._xy.shape[0]

    def __repr__(self):
        return f"PointPattern(n={len(self)}, group_id={self.group_id!r})"

    def with_points(self, xy):
        """Same window, id and labels with new coordinates."""
        return PointPattern(xy, self.window, self.group_id, dict(self.labels))


class CovariateField:
    """Raster of real values over a window with bilinear evaluation.

    Parameters
    ----------
    values : array_like, shape (ny, nx)
        Row-major lattice values; row ``k`` holds the nodes at the ``k``-th
        y coordinate.
    window : Window
    registration : {"node", "pixel"}
        See the module docstring.
    """

    __slots__ = ("_values", "window", "registration", "_xs", "_ys")

    def __init__(self, values, window, registration="node"):
        v = np.array(values, dtype=float, copy=True)
        if v.ndim != 2:
            raise ValueError(f"field values must be 2-D (ny, nx), got shape {v.shape}")
        ny, nx = v.shape
        if nx < 2 or ny < 2:
            raise ValueError(f"field lattice needs nx >= 2 and ny >= 2, got {nx}x{ny}")
        if not np.all(np.isfinite(v)):
            bad = int(np.flatnonzero(~np.isfinite(v.ravel()))[0])
            raise NumericError(f"field value at flat index {bad} is not finite", index=bad)
        if registration not in ("node", "pixel"):
            raise ValueError(f"unknown registration {registration!r}")
        v.setflags(write=False)
        self._values = v
        self.window = window
        self.registration = registration
        self._xs = _axis_nodes(window.x_min, window.x_max, nx, registration)
        self._ys = _axis_nodes(window.y_min, window.y_max, ny, registration)

    @classmethod
    def from_function(cls, func, window, nx, ny, registration="node"):
        """Sample ``func(x, y)`` (vectorized) on the lattice."""
        xs = _axis_nodes(window.x_min, window.x_max, nx, registration)
        ys = _axis_nodes(window.y_min, window.y_max, ny, registration)
        X, Y = np.meshgrid(xs, ys)
        return cls(np.broadcast_to(func(X, Y), X.shape), window, registration)

    @classmethod
    def constant(cls, value, window, nx=2, ny=2):
        return cls(np.full((ny, nx), float(value)), window)

    @property
    def values(self):
        return self._values

    @property
    def shape(self):
        return self._values.shape

    @property
    def nx(self):
        return self._values.shape[1]

    @property
    def ny(self):
        return self._values.shape[0]

    @property
    def xs(self):
        return self._xs

    @property
    def ys(self):
        return self._ys

    @property
    def dx(self):
        return self._xs[1] - self._xs[0]

    @property
    def dy(self):
        return self._ys[1] - self._ys[0]

    def lattice_key(self):
        """Hashable description of the lattice (not the values)."""
        return (self.window.bounds, self.nx, self.ny, self.registration)

    def nodes(self):
        X, Y = np.meshgrid(self._xs, self._ys)
        return np.column_stack([X.ravel(), Y.ravel()])

    def _check(self, xy):
        inside = self.window.contains(xy)
        if not np.all(inside):
            bad = int(np.flatnonzero(~inside)[0])
            raise OutOfDomainError(
                f"query point {tuple(xy[bad])} lies outside window "
                f"{self.window.bounds}"
            )

    def interpolation_weights(self, xy, check=True):
        """Bilinear weights of each query point on the lattice.

        Returns
        -------
        index : ndarray of int, shape (n, 4)
            Flat (row-major) node indices.
        weight : ndarray, shape (n, 4)
            Non-negative weights summing to one per row.
        """
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        if check:
            self._check(xy)
        ix, tx = _locate(xy[:, 0], self._xs)
        iy, ty = _locate(xy[:, 1], self._ys)
        nx = self.nx
        base = iy * nx + ix
        index = np.stack([base, base + 1, base + nx, base + nx + 1], axis=1)
        weight = np.stack(
            [(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty], axis=1
        )
        return index, weight

    def evaluate(self, xy, check=True):
        """Bilinear values at points ``xy`` of shape ``(n, 2)``.

        Computed as nested linear interpolation that returns stored values
        exactly at nodes and along constant edges, so constant fields
        evaluate to their constant without rounding.
        """
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        if check:
            self._check(xy)
        ix, tx = _locate(xy[:, 0], self._xs)
        iy, ty = _locate(xy[:, 1], self._ys)
        v = self._values
        bottom = _lerp(v[iy, ix], v[iy, ix + 1], tx)
        top = _lerp(v[iy + 1, ix], v[iy + 1, ix + 1], tx)
        return _lerp(bottom, top, ty)

    def __call__(self, xy):
        """Evaluate at points ``xy`` of shape ``(n, 2)`` (or a single pair)."""
        arr = np.asarray(xy, dtype=float)
        out = self.evaluate(arr)
        return float(out[0]) if arr.ndim == 1 else out

    def at(self, x, y):
        return self(np.array([float(x), float(y)]))

    def cells(self):
        """Midpoint-rule view of the field: ``(grid, values at grid nodes)``.

        Node-registered fields yield the ``(nx-1) x (ny-1)`` cells between
        lattice nodes (centre value = mean of the four corners); pixel fields
        yield their own pixels.
        """
        if self.registration == "pixel":
            return Grid(self.window, self.nx, self.ny), self._values.ravel().copy()
        v = self._values
        centre = 0.25 * (v[:-1, :-1] + v[:-1, 1:] + v[1:, :-1] + v[1:, 1:])
        return Grid(self.window, self.nx - 1, self.ny - 1), centre.ravel()

    def map(self, func):
        """New field with ``func`` applied to the stored values."""
        return CovariateField(func(self._values), self.window, self.registration)

    def __repr__(self):
        return (
            f"CovariateField({self.nx}x{self.ny}, registration={self.registration!r}, "
            f"window={self.window.bounds})"
        )


def _axis_nodes(lo, hi, n, registration):
    if registration == "node":
        out = np.linspace(lo, hi, n)
    else:
        step = (hi - lo) / n
        out = lo + (np.arange(n) + 0.5) * step
    return out


def _lerp(a, b, t):
    return np.where(a == b, a, (1.0 - t) * a + t * b)


def _locate(q, nodes):
    """Cell index and fractional offset of ``q`` along a regular axis.

    Queries beyond the first/last node are clamped onto it.
    """
    n = nodes.shape[0]
    step = nodes[1] - nodes[0]
    f = (q - nodes[0]) / step
    f = np.clip(f, 0.0, n - 1.0)
    r = np.rint(f)
    f = np.where(np.abs(f - r) < _SNAP * max(1.0, n), r, f)
    i = np.minimum(np.floor(f).astype(np.int64), n - 2)
    return i, f - i


class Grid:
    """Pixel discretization of a window used for quadrature and binning.

    ``nodes[j]`` is the centre of pixel ``j`` (row-major, ``j = iy * nx + ix``),
    ``weights[j]`` its area.  Pixels partition the closed window: a point on
    an internal pixel edge belongs to the pixel on its right/top, a point on
    the window's right/top edge to the last pixel.
    """

    __slots__ = ("window", "nx", "ny", "_nodes")

    def __init__(self, window, nx, ny=None):
        ny = nx if ny is None else ny
        nx, ny = int(nx), int(ny)
        if nx < 1 or ny < 1:
            raise ValueError(f"grid needs at least one pixel per axis, got {nx}x{ny}")
        self.window = window
        self.nx = nx
        self.ny = ny
        xs = _axis_nodes(window.x_min, window.x_max, nx, "pixel")
        ys = _axis_nodes(window.y_min, window.y_max, ny, "pixel")
        X, Y = np.meshgrid(xs, ys)
        nodes = np.column_stack([X.ravel(), Y.ravel()])
        nodes.setflags(write=False)
        self._nodes = nodes

    @property
    def size(self):
        return self.nx * self.ny

    @property
    def dx(self):
        return self.window.width / self.nx

    @property
    def dy(self):
        return self.window.height / self.ny

    @property
    def cell_area(self):
        return self.dx * self.dy

    @property
    def nodes(self):
        return self._nodes

    @property
    def weights(self):
        return np.full(self.size, self.cell_area)

    def __eq__(self, other):
        return (
            isinstance(other, Grid)
            and self.window == other.window
            and self.nx == other.nx
            and self.ny == other.ny
        )

    def __hash__(self):
        return hash((self.window, self.nx, self.ny))

    def __repr__(self):
        return f"Grid({self.nx}x{self.ny}, window={self.window.bounds})"

    def bin_index(self, xy):
        """Flat index of the pixel containing each point."""
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        w = self.window
        ix = np.floor((xy[:, 0] - w.x_min) / self.dx).astype(np.int64)
        iy = np.floor((xy[:, 1] - w.y_min) / self.dy).astype(np.int64)
        ix = np.clip(ix, 0, self.nx - 1)
        iy = np.clip(iy, 0, self.ny - 1)
        return iy * self.nx + ix

    def bin_bounds(self, j):
        """``(x0, x1, y0, y1)`` of pixel ``j``."""
        iy, ix = divmod(int(j), self.nx)
        w = self.window
        return (
            w.x_min + ix * self.dx,
            w.x_min + (ix + 1) * self.dx,
            w.y_min + iy * self.dy,
            w.y_min + (iy + 1) * self.dy,
        )

    def field(self, values):
        """Pixel-registered :class:`CovariateField` from node values."""
        return CovariateField(
            np.asarray(values, dtype=float).reshape(self.ny, self.nx),
            self.window,
            registration="pixel",
        )

    def interpolation_weights(self, xy):
        """Bilinear weights from pixel centres to ``xy`` (clamped at borders).

        These are the Berman-Turner interpolation weights ``a_ij``.
        """
        if self.nx < 2 or self.ny < 2:
            n = np.atleast_2d(xy).shape[0]
            index = np.repeat(self.bin_index(xy)[:, None], 4, axis=1)
            weight = np.tile([1.0, 0.0, 0.0, 0.0], (n, 1))
            return index, weight
        return self.field(np.zeros(self.size)).interpolation_weights(xy)


class Partition:
    """A set of rectangles partitioning a window."""

    def __init__(self, window, rects):
        self.window = window
        self.rects = tuple(rects)
        self.shape = None
        if not self.rects:
            raise ValueError("partition needs at least one region")
        total = sum(r.area() for r in self.rects)
        if not np.isclose(total, window.area(), rtol=1e-9, atol=0.0):
            raise ValueError(
                f"partition regions cover area {total}, window area is {window.area()}"
            )
        for r in self.rects:
            if (
                r.x0 < window.x_min - 1e-12 or r.x1 > window.x_max + 1e-12
                or r.y0 < window.y_min - 1e-12 or r.y1 > window.y_max + 1e-12
            ):
                raise ValueError(f"region {r} extends outside the window")
        for a in range(len(self.rects)):
            for b in range(a + 1, len(self.rects)):
                ra, rb = self.rects[a], self.rects[b]
                ox = min(ra.x1, rb.x1) - max(ra.x0, rb.x0)
                oy = min(ra.y1, rb.y1) - max(ra.y0, rb.y0)
                if ox > 1e-12 and oy > 1e-12:
                    raise ValueError(f"partition regions {a} and {b} overlap")

    @classmethod
    def regular(cls, window, nx=4, ny=None):
        ny = nx if ny is None else ny
        xe = np.linspace(window.x_min, window.x_max, nx + 1)
        ye = np.linspace(window.y_min, window.y_max, ny + 1)
        rects = [
            Rect(xe[i], xe[i + 1], ye[k], ye[k + 1],
                 closed_right=(i == nx - 1), closed_top=(k == ny - 1))
            for k in range(ny)
            for i in range(nx)
        ]
        part = cls(window, rects)
        part.shape = (ny, nx)
        return part

    def __len__(self):
        return len(self.rects)

    def assign(self, xy):
        """Region index of each point (``-1`` if none contains it)."""
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        out = np.full(xy.shape[0], -1, dtype=np.int64)
        for k, rect in enumerate(self.rects):
            hit = rect(xy) & (out < 0)
            out[hit] = k
        return out

    def counts(self, xy):
        idx = self.assign(xy)
        if np.any(idx < 0):
            raise ValueError("some points fall in no partition region")
        return np.bincount(idx, minlength=len(self.rects))


def eval_field(field, p):
    """Bilinear value of ``field`` at point ``p`` (or points, shape (n, 2))."""
    return field(p)


def integrate_field(field, transform=None, grid=None):
    """Midpoint-rule integral of ``transform(field)`` over the window.

    Parameters
    ----------
    field : CovariateField
    transform : callable, optional
        Vectorized pointwise map applied to field values (default identity).
    grid : Grid, optional
        Quadrature grid; defaults to the field's own cells (see
        :meth:`CovariateField.cells`).

    Raises
    ------
    NumericError
        If the transformed value at some node is not finite.
    """
    if grid is None:
        grid, values = field.cells()
    else:
        values = field(grid.nodes)
    if transform is not None:
        with np.errstate(all="ignore"):
            values = np.asarray(transform(values), dtype=float)
    bad = ~np.isfinite(values)
    if np.any(bad):
        j = int(np.flatnonzero(bad)[0])
        raise NumericError(f"non-finite integrand at quadrature node {j}", index=j)
    return float(np.sum(values) * grid.cell_area)


def count_in_region(pattern, region):
    """Number of points of ``pattern`` for which ``region(xy)`` is true."""
    if len(pattern) == 0:
        return 0
    return int(np.count_nonzero(region(pattern.xy)))


def distance_covariate(anchor, window, resolution=(64, 64)):
    """Distance to ``anchor`` in units of the window width.

    ``resolution`` is ``(nx, ny)`` or a single int for a square lattice.
    """
    ax, ay = float(anchor[0]), float(anchor[1])
    if not (np.isfinite(ax) and np.isfinite(ay)):
        raise NumericError("anchor must be finite")
    nx, ny = (resolution, resolution) if np.isscalar(resolution) else resolution
    width = window.width
    return CovariateField.from_function(
        lambda x, y: np.hypot(x - ax, y - ay) / width, window, int(nx), int(ny)
    )


def minmax_scale(field):
    """Affine rescaling of ``field`` onto exactly ``[0, 1]``."""
    v = field.values
    lo, hi = float(v.min()), float(v.max())
    if not hi > lo:
        raise DegenerateCovariateError(
            f"cannot min-max scale a constant field (value {lo})"
        )
    if lo == 0.0 and hi == 1.0:
        return field
    scaled = (v - lo) / (hi - lo)
    # Guard the endpoints against rounding.
    scaled[v == lo] = 0.0
    scaled[v == hi] = 1.0
    return CovariateField(scaled, field.window, field.registration)
