"""Smoothed bootstrap corridors.

Each replicate redraws covariates and residuals from their jointly
smoothed empirical law, evaluates the kernel-weighted moment average at
every grid point, and converts its deviation from the conditional
expectation into an estimator deviation through one linearization step.
The corridor half-width comes from a high quantile of the weighted
supremum of those deviations.

Replicate b draws from its own generator seeded by (seed, b), so results
do not depend on evaluation order or block size.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .bandwidth import BandwidthPlan
from .errors import ScalingDegeneracyError
from .estimator import Dataset, FitSurface
from .kernels import ProductKernel, convolve_kernels, GAUSSIAN
from .losses import TaskSpec, psi
from .nuisance import NuisanceFit, covariate_weights
from .asymptotic import Corridor

MIN_REPLICATES = 100

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _gauss_pdf(u):
    return _INV_SQRT_2PI * np.exp(-0.5 * u * u)


@dataclass(frozen=True)
class BootstrapConfig:
    """Settings for the bootstrap corridor.

    variant "auto" resolves to "quantile-ratio" for the quantile family
    and "standard" otherwise.  center "analytic" subtracts the exact
    conditional expectation of the moment average; "empirical-mean"
    subtracts the across-replicate mean instead.
    """

    n_boot: int = 1000
    seed: object = 0
    variant: str = "auto"
    center: str = "analytic"
    block: int = 32

    def __post_init__(self):
        if self.n_boot < MIN_REPLICATES:
            raise ValueError(
                "n_boot must be at least %d, got %d" % (MIN_REPLICATES, self.n_boot)
            )
        if self.variant not in ("auto", "standard", "quantile-ratio"):
            raise ValueError("unknown variant %r" % self.variant)
        if self.center not in ("analytic", "empirical-mean"):
            raise ValueError("unknown centering %r" % self.center)
        if self.block < 1:
            raise ValueError("block must be positive")

    def resolve_variant(self, spec: TaskSpec) -> str:
        if self.variant == "auto":
            return "quantile-ratio" if spec.family == "quantile" else "standard"
        if self.variant == "quantile-ratio" and spec.family != "quantile":
            raise ValueError("the quantile-ratio variant requires the quantile family")
        return self.variant


def _seed_key(seed) -> tuple:
    if isinstance(seed, (int, np.integer)):
        return (int(seed),)
    return tuple(int(s) for s in seed)


def replicate_rng(seed, b: int) -> np.random.Generator:
    """Generator for replicate b, independent of evaluation order."""
    return np.random.default_rng(_seed_key(seed) + (b,))


def resample(rng: np.random.Generator, x, resid, h0: float, hbar):
    """One smoothed bootstrap draw of (covariates, residuals).

    Picks indices uniformly with replacement, then perturbs the residual
    with a Gaussian of scale h0 and each covariate coordinate with a
    Gaussian of its smoothing bandwidth.
    """
    x = np.asarray(x, dtype=float)
    resid = np.asarray(resid, dtype=float)
    n, d = x.shape
    idx = rng.integers(0, n, size=n)
    eps_star = resid[idx] + h0 * rng.standard_normal(n)
    x_star = x[idx] + np.asarray(hbar, dtype=float) * rng.standard_normal((n, d))
    return x_star, eps_star


def moment_psi_smoothed(spec: TaskSpec, mu, h0: float) -> np.ndarray:
    """E psi(V) for V Gaussian with mean mu and scale h0, per family."""
    mu = np.asarray(mu, dtype=float)
    if spec.family == "quantile":
        return ndtr(-mu / h0) - spec.tau
    if spec.family == "mean":
        return 2.0 * mu
    tau = spec.tau
    z = mu / h0
    phi = _gauss_pdf(z)
    big = ndtr(z)
    return -2.0 * (mu * (tau * big + (1.0 - tau) * (1.0 - big)) + h0 * phi * (2.0 * tau - 1.0))


def moment_psi_sq_smoothed(spec: TaskSpec, mu, h0: float) -> np.ndarray:
    """E psi(V)^2 for V Gaussian with mean mu and scale h0, per family."""
    mu = np.asarray(mu, dtype=float)
    tau = spec.tau
    if spec.family == "quantile":
        return tau * tau + (1.0 - 2.0 * tau) * ndtr(-mu / h0)
    if spec.family == "mean":
        return 4.0 * (mu * mu + h0 * h0)
    z = mu / h0
    phi = _gauss_pdf(z)
    big = ndtr(z)
    second_pos = (mu * mu + h0 * h0) * big + mu * h0 * phi
    second_neg = (mu * mu + h0 * h0) * (1.0 - big) - mu * h0 * phi
    return 4.0 * (tau * tau * second_pos + (1.0 - tau) ** 2 * second_neg)


def a_star(kernel: ProductKernel, h, pts, x_star, eps_star, spec: TaskSpec) -> np.ndarray:
    """Kernel-weighted moment average of one or more bootstrap draws.

    x_star may be (n, d) for a single draw or (r, n, d) for a block;
    eps_star matches with shape (n,) or (r, n).  Returns (M,) or (r, M).
    """
    pts = np.asarray(pts, dtype=float)
    x_star = np.asarray(x_star, dtype=float)
    eps_star = np.asarray(eps_star, dtype=float)
    single = x_star.ndim == 2
    if single:
        x_star = x_star[None]
        eps_star = eps_star[None]
    h = np.asarray(h, dtype=float)
    if h.ndim == 0:
        h = np.full(x_star.shape[2], float(h))
    n = x_star.shape[1]
    u = (pts[None, :, None, 0] - x_star[:, None, :, 0]) / h[0]
    w = kernel.base.pdf(u)
    for j in range(1, x_star.shape[2]):
        u = (pts[None, :, None, j] - x_star[:, None, :, j]) / h[j]
        w *= kernel.base.pdf(u)
    w /= float(np.prod(h))
    vals = psi(spec, eps_star)
    out = np.einsum("rmn,rn->rm", w, vals) / n
    return out[0] if single else out


def analytic_center(
    data: Dataset,
    resid,
    spec: TaskSpec,
    kernel: ProductKernel,
    plan: BandwidthPlan,
    pts,
) -> np.ndarray:
    """Exact conditional expectation of the moment average given the sample.

    Integrating out the smoothing noise turns the estimation kernel into
    its convolution with the covariate smoother, coordinate by
    coordinate, and the moment function into its Gaussian-smoothed mean.
    Convolutions are evaluated once per distinct coordinate value, which
    makes grids cheap.
    """
    pts = np.asarray(pts, dtype=float)
    m_vals = moment_psi_smoothed(spec, resid, plan.h0)
    prod = None
    for j in range(data.dim):
        uniq, inv = np.unique(pts[:, j], return_inverse=True)
        t = uniq[:, None] - data.x[None, :, j]
        conv = convolve_kernels(kernel.base, plan.h[j], GAUSSIAN, plan.hbar[j], t)
        rows = conv[inv]
        prod = rows if prod is None else prod * rows
    return (prod @ m_vals) / data.n


def s_n_hat(spec: TaskSpec, nuis: NuisanceFit) -> np.ndarray:
    """Slope of the population moment in theta, estimated at each point.

    quantile:   f_resid(0|x) f_x(x)
    expectile:  2 [tau - F_resid(0|x)(2 tau - 1)] f_x(x)
    mean:       2 f_x(x)
    """
    if spec.family == "quantile":
        slope = nuis.density_resid_zero
    elif spec.family == "expectile":
        slope = 2.0 * (spec.tau - nuis.cdf_resid_zero * (2.0 * spec.tau - 1.0))
    else:
        slope = np.full_like(nuis.f_x, 2.0)
    out = slope * nuis.f_x
    if np.any(out <= 0.0) or not np.all(np.isfinite(out)):
        raise ScalingDegeneracyError("moment slope estimate is not positive everywhere")
    return out


def one_step_deviation(s_hat, a_vals, center) -> np.ndarray:
    """Linearized estimator deviation: (a_vals - center) / s_hat."""
    return (np.asarray(a_vals, dtype=float) - center) / s_hat


def sup_statistic(deviation, weight) -> np.ndarray:
    """Weighted supremum over points; deviation (..., M), weight (M,)."""
    return np.max(np.abs(np.asarray(deviation) * weight), axis=-1)


def quantile_of_sups(sups: np.ndarray, alpha: float) -> float:
    """Order statistic at rank ceil((1 - alpha) B)."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    b = sups.shape[0]
    rank = int(math.ceil((1.0 - alpha) * b))
    rank = min(max(rank, 1), b)
    return float(np.sort(sups)[rank - 1])


def bootstrap_draws(
    data: Dataset,
    resid,
    spec: TaskSpec,
    kernel: ProductKernel,
    plan: BandwidthPlan,
    pts,
    config: BootstrapConfig,
) -> np.ndarray:
    """Moment averages for every replicate, shape (n_boot, M)."""
    pts = np.asarray(pts, dtype=float)
    n_boot = config.n_boot
    out = np.empty((n_boot, pts.shape[0]))
    n, d = data.x.shape
    for start in range(0, n_boot, config.block):
        stop = min(start + config.block, n_boot)
        r = stop - start
        xs = np.empty((r, n, d))
        es = np.empty((r, n))
        for k in range(r):
            rng = replicate_rng(config.seed, start + k)
            xs[k], es[k] = resample(rng, data.x, resid, plan.h0, plan.hbar)
        out[start:stop] = a_star(kernel, plan.h, pts, xs, es, spec)
    return out


def bootstrap_cc(
    data: Dataset,
    fit: FitSurface,
    resid,
    nuis: NuisanceFit,
    spec: TaskSpec,
    kernel: ProductKernel,
    plan: BandwidthPlan,
    config: BootstrapConfig,
    alpha: float = 0.05,
) -> Corridor:
    """Simultaneous corridor from the smoothed bootstrap.

    The standard variant weights deviations by 1/sqrt(f_x sigma_sq); the
    quantile-ratio variant replaces the residual-density factor implicit
    in that weight by the response density at the fitted value, which is
    read off the same smoothed sample and is stable when residuals pile
    up near zero.
    """
    pts = fit.grid.points()
    variant = config.resolve_variant(spec)
    s_hat = s_n_hat(spec, nuis)

    a_vals = bootstrap_draws(data, resid, spec, kernel, plan, pts, config)
    if config.center == "analytic":
        center = analytic_center(data, resid, spec, kernel, plan, pts)
    else:
        center = a_vals.mean(axis=0)

    # Weight applied to estimator deviations; xi / weight is the half-width.
    if variant == "standard":
        weight = s_hat / np.sqrt(nuis.f_x * nuis.sigma_sq)
    else:
        weight = np.sqrt(nuis.f_x) * nuis.response_density

    dev = one_step_deviation(s_hat, a_vals, center)
    sups = sup_statistic(dev, weight)
    xi = quantile_of_sups(sups, alpha)
    half = xi / weight

    lw = covariate_weights(pts, data.x, plan.hbar)
    sigma_star = (lw @ moment_psi_sq_smoothed(spec, resid, plan.h0)) / (data.n * nuis.f_x)
    meta = {
        "family": spec.family,
        "tau": spec.tau,
        "alpha": alpha,
        "n": plan.n,
        "n_boot": config.n_boot,
        "seed": list(_seed_key(config.seed)),
        "variant": variant,
        "center": config.center,
        "xi_alpha": xi,
        "h": [float(v) for v in plan.h],
        "h0": plan.h0,
        "h1": plan.h1,
        "hbar": [float(v) for v in plan.hbar],
        "kappa": plan.kappa,
        "sigma_sq_smoothed_sup_diff": float(
            np.max(np.abs(sigma_star - nuis.sigma_sq_empirical))
        ),
        "nuisance_clamps": nuis.clamp_count,
    }
    return Corridor(
        pts=pts,
        theta=fit.theta,
        lower=fit.theta - half,
        upper=fit.theta + half,
        alpha=alpha,
        method="bootstrap",
        metadata=meta,
    )
