"""Local constant estimation of conditional quantiles, expectiles, and means.

The estimator at a point x minimizes the kernel-weighted empirical loss
sum_i K_h(x - X_i) rho(Y_i - theta) over theta.  For the quantile family
this is a weighted sample quantile, for the expectile family the root of a
monotone moment equation found by bisection, and for the mean family the
kernel-weighted average.
"""

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DataError, EmptyNeighborhoodError
from .kernels import ProductKernel, as_bandwidth_vector
from .losses import TaskSpec, psi

_BISECT_REL_TOL = 1e-10


@dataclass
class Dataset:
    """Covariates x with shape (n, d) and responses y with shape (n,)."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.x.ndim == 1:
            self.x = self.x[:, None]
        if self.x.ndim != 2:
            raise DataError("x must be a 2-d array, got ndim=%d" % self.x.ndim)
        if self.y.ndim != 1:
            raise DataError("y must be a 1-d array, got ndim=%d" % self.y.ndim)
        if self.x.shape[0] != self.y.shape[0]:
            raise DataError(
                "x and y disagree on the sample size: %d vs %d"
                % (self.x.shape[0], self.y.shape[0])
            )
        if self.x.shape[0] == 0:
            raise DataError("empty dataset")
        if not np.all(np.isfinite(self.x)) or not np.all(np.isfinite(self.y)):
            raise DataError("x and y must be finite")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class GridSpec:
    """Rectangular evaluation grid, the cartesian product of per-axis linspaces."""

    ranges: tuple
    counts: tuple

    def __post_init__(self):
        ranges = tuple((float(a), float(b)) for a, b in self.ranges)
        counts = tuple(int(m) for m in self.counts)
        if len(ranges) != len(counts):
            raise ValueError("ranges and counts must have equal length")
        if len(ranges) == 0:
            raise ValueError("grid must have at least one axis")
        for (a, b), m in zip(ranges, counts):
            if not (np.isfinite(a) and np.isfinite(b)) or a >= b:
                raise ValueError("each range must satisfy a < b, got (%r, %r)" % (a, b))
            if m < 2:
                raise ValueError("each axis needs at least 2 points, got %d" % m)
        object.__setattr__(self, "ranges", ranges)
        object.__setattr__(self, "counts", counts)

    @property
    def dim(self) -> int:
        return len(self.ranges)

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    def axes(self) -> list:
        return [np.linspace(a, b, m) for (a, b), m in zip(self.ranges, self.counts)]

    def points(self) -> np.ndarray:
        """All grid nodes as an (M, d) array, row-major in the axis order."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def indices(self) -> np.ndarray:
        """Per-axis index of each node, aligned with ``points()`` rows."""
        mesh = np.meshgrid(*[np.arange(m) for m in self.counts], indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def volume(self) -> float:
        return float(np.prod([b - a for a, b in self.ranges]))


def default_grid(dim: int, lo: float = 0.1, hi: float = 0.9, points: int = 20) -> GridSpec:
    return GridSpec(tuple((lo, hi) for _ in range(dim)), tuple(points for _ in range(dim)))


@dataclass
class FitSurface:
    """Fitted values over a grid, plus the total kernel weight at each node."""

    grid: GridSpec
    theta: np.ndarray
    weight_sum: np.ndarray


def _weighted_quantile(y_sorted, w_sorted_cum, tau):
    """Smallest order statistic whose cumulative weight reaches tau * total."""
    total = w_sorted_cum[..., -1]
    thresh = tau * total
    idx = np.sum(w_sorted_cum < thresh[..., None], axis=-1)
    idx = np.minimum(idx, y_sorted.shape[-1] - 1)
    return y_sorted[idx]


def _expectile_bisect(y, weights, tau):
    """Roots of sum_i w_i psi_tau(y_i - theta) = 0, one per weight row.

    The weighted moment is monotone increasing in theta, non-positive at
    min(y) and non-negative at max(y), so bisection cannot fail.
    """
    lo_val = float(np.min(y))
    hi_val = float(np.max(y))
    m = weights.shape[0]
    lo = np.full(m, lo_val)
    hi = np.full(m, hi_val)
    span = hi_val - lo_val
    if span == 0.0:
        return lo
    tol = _BISECT_REL_TOL * span
    one_m_tau2 = 2.0 * (1.0 - tau)
    tau2 = 2.0 * tau
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        u = y[None, :] - mid[:, None]
        # psi(u): -2(1-tau) u for u <= 0, -2 tau u for u > 0
        vals = u * np.where(u <= 0.0, -one_m_tau2, -tau2)
        s = np.einsum("mn,mn->m", weights, vals)
        go_right = s < 0.0
        lo = np.where(go_right, mid, lo)
        hi = np.where(go_right, hi, mid)
        if np.max(hi - lo) <= tol:
            break
    return 0.5 * (lo + hi)


def fit_at_points(
    data: Dataset,
    spec: TaskSpec,
    kernel: ProductKernel,
    h,
    pts,
    chunk: int = 512,
):
    """Fit the local constant estimator at each row of pts.

    Returns
    -------
    theta : (M,) fitted values
    weight_sum : (M,) total kernel weight at each point

    Raises
    ------
    EmptyNeighborhoodError
        If some evaluation point has zero total kernel weight.
    """
    pts = np.asarray(pts, dtype=float)
    if pts.ndim == 1:
        pts = pts[None, :]
    h = as_bandwidth_vector(h, data.dim)
    m = pts.shape[0]
    theta = np.empty(m)
    wsum = np.empty(m)

    order = np.argsort(data.y, kind="stable")
    y_sorted = data.y[order]

    for start in range(0, m, chunk):
        sl = slice(start, min(start + chunk, m))
        w = kernel.weights_at(pts[sl], data.x, h)
        totals = w.sum(axis=1)
        if np.any(totals <= 0.0):
            bad = int(np.argmax(totals <= 0.0))
            raise EmptyNeighborhoodError(pts[sl][bad], h)
        wsum[sl] = totals
        if spec.family == "quantile":
            cum = np.cumsum(w[:, order], axis=1)
            theta[sl] = _weighted_quantile(y_sorted, cum, spec.tau)
        elif spec.family == "expectile":
            theta[sl] = _expectile_bisect(data.y, w, spec.tau)
        else:
            theta[sl] = (w @ data.y) / totals
    return theta, wsum


def fit_point(data: Dataset, spec: TaskSpec, kernel: ProductKernel, h, x) -> float:
    """Local constant fit at a single point x."""
    theta, _ = fit_at_points(data, spec, kernel, h, np.asarray(x, dtype=float)[None, :])
    return float(theta[0])


def fit_surface(data: Dataset, spec: TaskSpec, kernel: ProductKernel, h, grid: GridSpec) -> FitSurface:
    """Fit the estimator at every node of the grid."""
    if grid.dim != data.dim:
        raise DataError("grid dimension %d does not match data dimension %d" % (grid.dim, data.dim))
    theta, wsum = fit_at_points(data, spec, kernel, h, grid.points())
    return FitSurface(grid=grid, theta=theta, weight_sum=wsum)


def residuals(data: Dataset, spec: TaskSpec, kernel: ProductKernel, h) -> np.ndarray:
    """Residuals y_i minus the fit evaluated at each observation's own covariates.

    Every observation contributes to its own fit; with compactly supported
    kernels the own-point weight K_h(0) is always positive, so the fit is
    defined everywhere on the sample.
    """
    theta, _ = fit_at_points(data, spec, kernel, h, data.x)
    return data.y - theta
