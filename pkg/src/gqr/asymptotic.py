"""Simultaneous confidence corridors from the extreme-value limit.

The maximal standardized deviation of the local constant estimator over a
compact region converges, after centering and scaling with the constants
computed here, to a Gumbel-type law with distribution exp(-2 e^{-a}).
Inverting that law at level alpha gives a corridor whose half-width is a
deterministic multiple of the pointwise scale.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .bandwidth import BandwidthPlan
from .errors import ScalingDegeneracyError
from .estimator import FitSurface
from .kernels import KernelConstants
from .losses import TaskSpec
from .nuisance import NuisanceFit


def gumbel_cdf(a) -> np.ndarray:
    """Limit law of the centered maximal deviation: exp(-2 e^{-a})."""
    return np.exp(-2.0 * np.exp(-np.asarray(a, dtype=float)))


def c_alpha(alpha: float) -> float:
    """Quantile of the limit law: gumbel_cdf(c_alpha(alpha)) = 1 - alpha."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    return math.log(2.0) - math.log(abs(math.log(1.0 - alpha)))


def d_n_centering(n: int, dim: int, kappa: float, h2: float, log_volume: float = 0.0) -> float:
    """Centering sequence for the maximal standardized deviation.

    ``log_volume`` shifts the leading term when the supremum runs over a
    region of measure different from one; the default keeps the unit-cube
    normalization.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    if kappa <= 0.0:
        raise ValueError("kappa must be positive")
    lead = dim * kappa * math.log(n) + log_volume
    if lead <= 0.0:
        raise ValueError("effective log term must be positive; region too small")
    two_lead = 2.0 * lead
    sqrt_lead = math.sqrt(two_lead)
    inner = 0.5 * (dim - 1) * math.log(kappa * math.log(n)) + math.log(
        h2 / math.sqrt(2.0 * math.pi) * (2.0 * dim) ** (0.5 * (dim - 1))
    )
    return sqrt_lead + inner / sqrt_lead


@dataclass(frozen=True)
class GumbelConstants:
    """Everything needed to turn a scale function into a corridor width."""

    n: int
    dim: int
    kappa: float
    h2: float
    alpha: float
    d_n: float
    sqrt_two_lead: float
    c_alpha: float

    @property
    def critical_factor(self) -> float:
        """d_n + c(alpha) / sqrt(2 d kappa log n); multiplies the scale."""
        return self.d_n + self.c_alpha / self.sqrt_two_lead


def critical_constants(
    n: int,
    dim: int,
    kappa: float,
    kc: KernelConstants,
    alpha: float = 0.05,
    log_volume: float = 0.0,
) -> GumbelConstants:
    lead = dim * kappa * math.log(n) + log_volume
    if lead <= 0.0:
        raise ValueError("effective log term must be positive")
    return GumbelConstants(
        n=n,
        dim=dim,
        kappa=kappa,
        h2=kc.h2,
        alpha=alpha,
        d_n=d_n_centering(n, dim, kappa, kc.h2, log_volume),
        sqrt_two_lead=math.sqrt(2.0 * lead),
        c_alpha=c_alpha(alpha),
    )


@dataclass
class Corridor:
    """A simultaneous confidence corridor over a set of points."""

    pts: np.ndarray
    theta: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    alpha: float
    method: str
    metadata: dict = field(default_factory=dict)


def pointwise_scale(spec: TaskSpec, nuis: NuisanceFit) -> np.ndarray:
    """Scale of the estimator's fluctuation at each point.

    quantile:   sqrt(tau(1-tau) / f_x) / f_resid(0|x)
    expectile:  sqrt(sigma_sq / f_x) / (2 [tau - F_resid(0|x)(2 tau - 1)])
    mean:       sqrt(sigma_sq / f_x) / 2
    """
    tau = spec.tau
    if spec.family == "quantile":
        denom = nuis.density_resid_zero
    elif spec.family == "expectile":
        denom = 2.0 * (tau - nuis.cdf_resid_zero * (2.0 * tau - 1.0))
    else:
        denom = np.full_like(nuis.f_x, 2.0)
    if np.any(denom <= 0.0) or not np.all(np.isfinite(denom)):
        raise ScalingDegeneracyError("non-positive scaling denominator in corridor width")
    return np.sqrt(nuis.sigma_sq / nuis.f_x) / denom


def asymptotic_cc(
    fit: FitSurface,
    nuis: NuisanceFit,
    spec: TaskSpec,
    plan: BandwidthPlan,
    kc: KernelConstants,
    alpha: float = 0.05,
    volume_normalization: bool = False,
) -> Corridor:
    """Corridor from the extreme-value limit.

    Half-width at x:  (n h_prod)^{-1/2} scale(x) ||K||_2 {d_n + c(alpha)
    / sqrt(2 d kappa log n)}.
    """
    log_volume = math.log(fit.grid.volume()) if volume_normalization else 0.0
    consts = critical_constants(
        plan.n, fit.grid.dim, plan.kappa, kc, alpha=alpha, log_volume=log_volume
    )
    scale = pointwise_scale(spec, nuis)
    half = (
        (plan.n * plan.h_prod) ** -0.5 * scale * kc.l2norm * consts.critical_factor
    )
    meta = {
        "family": spec.family,
        "tau": spec.tau,
        "alpha": alpha,
        "n": plan.n,
        "h": [float(v) for v in plan.h],
        "h0": plan.h0,
        "h1": plan.h1,
        "hbar": [float(v) for v in plan.hbar],
        "kappa": plan.kappa,
        "d_n": consts.d_n,
        "c_alpha": consts.c_alpha,
        "critical_factor": consts.critical_factor,
        "nuisance_clamps": nuis.clamp_count,
    }
    return Corridor(
        pts=nuis.pts,
        theta=fit.theta,
        lower=fit.theta - half,
        upper=fit.theta + half,
        alpha=alpha,
        method="asymptotic",
        metadata=meta,
    )


def covers(corridor: Corridor, truth) -> bool:
    """True when the reference surface lies inside the corridor at every point."""
    truth = np.asarray(truth, dtype=float)
    if truth.shape != corridor.theta.shape:
        raise ValueError("truth shape %s does not match corridor" % (truth.shape,))
    return bool(np.all((corridor.lower <= truth) & (truth <= corridor.upper)))


def corridor_volume(corridor: Corridor) -> float:
    """Average corridor width across evaluation points."""
    return float(np.mean(corridor.upper - corridor.lower))
