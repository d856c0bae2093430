"""Two-group comparison: treatment-effect surfaces with simultaneous bands.

Fits the same generalized regression to a control group and a treatment
group over one shared grid, wraps each fit in a simultaneous corridor,
and reports where the treatment surface escapes the control corridor.
A node where the treatment fit lies above the control upper band marks
a significant positive effect there; below the lower band, a negative
one.  Corridor overlap is the conservative no-difference reading.
"""

from dataclasses import dataclass

import numpy as np
from scipy.stats import ks_2samp

from .asymptotic import Corridor, asymptotic_cc
from .bandwidth import estimation_bandwidth, make_plan, tail_inflation_factor
from .bootstrap import BootstrapConfig, bootstrap_cc
from .errors import DataError
from .estimator import Dataset, GridSpec, fit_surface
from .kernels import ProductKernel, QUARTIC, kernel_constants
from .losses import TaskSpec
from .nuisance import fit_nuisance, pilot_residuals

DEFAULT_TRIM = 0.10


def common_grid(x0: np.ndarray, x1: np.ndarray, points=20, trim: float = DEFAULT_TRIM) -> GridSpec:
    """Shared evaluation grid inside the support overlap of both groups.

    Each axis range is the intersection of the two sample ranges, pulled
    ``trim`` of its length into the interior on both sides so nodes stay
    away from boundary bias.  ``points`` is one count for all axes or a
    sequence with one count per axis.
    """
    x0 = np.asarray(x0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    if x0.ndim != 2 or x1.ndim != 2 or x0.shape[1] != x1.shape[1]:
        raise DataError("both groups must have the same covariate columns")
    if not 0.0 <= trim < 0.5:
        raise ValueError("trim must lie in [0, 0.5)")
    dim = x0.shape[1]
    if np.isscalar(points):
        counts = (int(points),) * dim
    else:
        counts = tuple(int(p) for p in points)
        if len(counts) == 1 and dim > 1:
            counts = counts * dim
        if len(counts) != dim:
            raise DataError(
                "grid points list has %d entries for %d covariates" % (len(counts), dim)
            )
    ranges = []
    for j in range(dim):
        lo = max(float(x0[:, j].min()), float(x1[:, j].min()))
        hi = min(float(x0[:, j].max()), float(x1[:, j].max()))
        if hi <= lo:
            raise DataError(
                "covariate %d: group supports do not overlap "
                "(group 0 spans [%g, %g], group 1 spans [%g, %g])"
                % (j, x0[:, j].min(), x0[:, j].max(), x1[:, j].min(), x1[:, j].max())
            )
        pad = trim * (hi - lo)
        ranges.append((lo + pad, hi - pad))
    return GridSpec(tuple(ranges), counts)


def group_corridor(
    data: Dataset,
    spec: TaskSpec,
    grid: GridSpec,
    method: str = "bootstrap",
    alpha: float = 0.05,
    h=None,
    delta: float = 0.05,
    h1_inflation: float = 1.0,
    tail_inflation: bool = False,
    boot: BootstrapConfig = None,
) -> Corridor:
    """Fit one group on the grid and wrap it in the requested corridor."""
    kernel = ProductKernel(QUARTIC, data.dim)
    resid = pilot_residuals(data, spec, kernel)
    if h is None:
        h_arr = estimation_bandwidth(data, spec, kernel.base, delta)
    else:
        h_arr = np.asarray(h, dtype=float)
        if h_arr.ndim == 0:
            h_arr = np.full(data.dim, float(h_arr))
    if tail_inflation and spec.family == "quantile":
        h_arr = h_arr * tail_inflation_factor(spec.tau)
    plan = make_plan(data, spec, resid, kernel.base, h=h_arr, delta=delta, h1_inflation=h1_inflation)
    fit = fit_surface(data, spec, kernel, plan.h, grid)
    nuis = fit_nuisance(data, resid, fit.theta, grid.points(), plan, spec)
    if method == "asymptotic":
        return asymptotic_cc(fit, nuis, spec, plan, kernel_constants(kernel), alpha=alpha)
    if method == "bootstrap":
        if boot is None:
            boot = BootstrapConfig()
        return bootstrap_cc(data, fit, resid, nuis, spec, kernel, plan, boot, alpha=alpha)
    raise ValueError("method must be asymptotic or bootstrap, got %r" % method)


@dataclass
class GroupComparison:
    """Corridors for both groups at one level, on one shared grid."""

    tau: float
    corridor0: Corridor
    corridor1: Corridor

    def __post_init__(self):
        if self.corridor0.theta.shape != self.corridor1.theta.shape:
            raise ValueError("group corridors must share one grid")

    @property
    def pts(self) -> np.ndarray:
        return self.corridor0.pts

    @property
    def qte(self) -> np.ndarray:
        """Treatment-minus-control fitted difference at each node."""
        return self.corridor1.theta - self.corridor0.theta

    @property
    def exceed_hi(self) -> np.ndarray:
        """Nodes where the treatment fit clears the control upper band."""
        return self.corridor1.theta > self.corridor0.upper

    @property
    def exceed_lo(self) -> np.ndarray:
        """Nodes where the treatment fit drops below the control lower band."""
        return self.corridor1.theta < self.corridor0.lower

    @property
    def overlap(self) -> np.ndarray:
        """Nodes where the two corridors intersect as intervals."""
        return (self.corridor0.lower <= self.corridor1.upper) & (
            self.corridor1.lower <= self.corridor0.upper
        )

    def summary_line(self) -> str:
        m = self.qte.size
        return (
            "tau=%.3g: group 1 fit above group 0 upper band on %d of %d nodes, "
            "below lower band on %d; corridors overlap on %d"
            % (
                self.tau,
                int(self.exceed_hi.sum()),
                m,
                int(self.exceed_lo.sum()),
                int(self.overlap.sum()),
            )
        )


def compare_groups(
    data0: Dataset,
    data1: Dataset,
    family: str,
    taus,
    alpha: float = 0.05,
    grid: GridSpec = None,
    points=20,
    method: str = "bootstrap",
    h=None,
    delta: float = 0.05,
    h1_inflation: float = 1.0,
    tail_inflation: bool = None,
    n_boot: int = 1000,
    seed=0,
    variant: str = "auto",
    center: str = "analytic",
):
    """Corridors and exceedance maps for every requested level.

    Returns ``(grid, comparisons)`` where comparisons holds one
    GroupComparison per level in ``taus``.  With ``tail_inflation=None``
    the quantile family gets the tail widening automatically; pass False
    to disable it.  Bootstrap draws are seeded per (group, level) so the
    whole comparison is reproducible from one seed.
    """
    if data0.dim != data1.dim:
        raise DataError(
            "groups have different covariate counts (%d vs %d)" % (data0.dim, data1.dim)
        )
    if grid is None:
        grid = common_grid(data0.x, data1.x, points=points)
    if tail_inflation is None:
        tail_inflation = family == "quantile"
    comparisons = []
    for ti, tau in enumerate(taus):
        spec = TaskSpec(family, float(tau))
        corridors = []
        for gi, data in enumerate((data0, data1)):
            boot = None
            if method == "bootstrap":
                boot = BootstrapConfig(
                    n_boot=n_boot, seed=(int(seed), gi, ti), variant=variant, center=center
                )
            corridors.append(
                group_corridor(
                    data,
                    spec,
                    grid,
                    method=method,
                    alpha=alpha,
                    h=h,
                    delta=delta,
                    h1_inflation=h1_inflation,
                    tail_inflation=tail_inflation,
                    boot=boot,
                )
            )
        comparisons.append(GroupComparison(tau=float(tau), corridor0=corridors[0], corridor1=corridors[1]))
    return grid, comparisons


def response_ks(y0, y1):
    """Unconditional two-sample KS test on the raw responses.

    A quick distribution-difference screen to report alongside the
    conditional comparison; it ignores covariates entirely.
    """
    result = ks_2samp(np.asarray(y0, dtype=float), np.asarray(y1, dtype=float))
    return float(result.statistic), float(result.pvalue)
