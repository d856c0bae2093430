"""Plug-in estimators for the densities and moments entering corridor widths.

All quantities are evaluated on a fixed set of points.  Covariate
smoothing uses a product Gaussian kernel with bandwidths ``hbar``;
residual-direction smoothing uses a Gaussian kernel with bandwidth ``h0``.
Estimates that appear in denominators are clamped to a small positivity
floor, and the number of clamped values is reported so callers can flag
unstable regions.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .bandwidth import BandwidthPlan, estimation_bandwidth
from .estimator import Dataset, residuals
from .kernels import GAUSSIAN, ProductKernel, QUARTIC
from .losses import TaskSpec, psi, sigma_sq_theoretical

POSITIVITY_FLOOR = 1e-12

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def pilot_residuals(data: Dataset, spec: TaskSpec, kernel: ProductKernel = None) -> np.ndarray:
    """Residuals from a fit at the automatic bandwidth without undersmoothing.

    Plug-in density estimates are much more stable on these residuals
    than on residuals from an undersmoothed (or deliberately small) fit:
    with very few effective observations per window the fit interpolates
    its own sample points, which piles residual mass at zero and biases
    the residual density at zero upward.  Corridor callers therefore
    estimate nuisance quantities from this pilot fit regardless of the
    bandwidth used for the surface itself.
    """
    if kernel is None:
        kernel = ProductKernel(QUARTIC, data.x.shape[1])
    h_pilot = estimation_bandwidth(data, spec, kernel.base, delta=0.0)
    return residuals(data, spec, kernel, h_pilot)


def _gauss_pdf(u):
    return _INV_SQRT_2PI * np.exp(-0.5 * u * u)


def covariate_weights(pts, x, hbar) -> np.ndarray:
    """Product Gaussian weights L_hbar(pts_a - x_i), shape (M, n)."""
    kernel = ProductKernel(GAUSSIAN, np.asarray(x).shape[1])
    return kernel.weights_at(pts, x, hbar)


def density_x(lweights) -> np.ndarray:
    """Covariate density estimate: the mean kernel weight at each point."""
    return lweights.mean(axis=1)


def _clamped(values, floor=POSITIVITY_FLOOR):
    clamped = int(np.sum(values < floor))
    return np.maximum(values, floor), clamped


def cond_cdf_resid_at_zero(lweights, f_x, resid, h0) -> np.ndarray:
    """Conditional probability that the residual is below zero, given x.

    Smooths the indicator 1{resid_i < 0} with a Gaussian distribution
    function of bandwidth h0 in the residual direction.
    """
    smoothed = ndtr(-np.asarray(resid, dtype=float) / h0)
    vals = (lweights @ smoothed) / (lweights.shape[1] * f_x)
    return np.clip(vals, 0.0, 1.0)


def cond_density_resid_at_zero(lweights, f_x, resid, h0) -> np.ndarray:
    """Conditional density of the residual at zero, given x."""
    smoothed = _gauss_pdf(np.asarray(resid, dtype=float) / h0) / h0
    return (lweights @ smoothed) / (lweights.shape[1] * f_x)


def cond_moment_psi_sq(lweights, f_x, resid, spec: TaskSpec) -> np.ndarray:
    """Conditional second moment of psi(residual), given x."""
    vals = psi(spec, resid) ** 2
    return (lweights @ vals) / (lweights.shape[1] * f_x)


def response_density_at_fit(lweights, f_x, y, theta, h1) -> np.ndarray:
    """Conditional density of the response at the fitted value, given x.

    Smooths in the response direction with bandwidth h1 around each
    point's own fitted value theta[a].
    """
    u = (np.asarray(y, dtype=float)[None, :] - np.asarray(theta, dtype=float)[:, None]) / h1
    g = _gauss_pdf(u) / h1
    return np.einsum("mn,mn->m", lweights, g) / (lweights.shape[1] * f_x)


@dataclass
class NuisanceFit:
    """All pointwise nuisance estimates a corridor needs.

    ``sigma_sq`` is the second moment of psi used by the corridor
    formulas: the model-free value tau(1-tau) for the quantile family and
    the smoothed empirical moment otherwise.  ``sigma_sq_empirical``
    always holds the smoothed moment, for diagnostics.
    ``density_ratio`` is the response density at the fit divided by the
    residual density at zero; values near one indicate the two readings
    of the residual-density plug-in agree.
    """

    pts: np.ndarray
    f_x: np.ndarray
    cdf_resid_zero: np.ndarray
    density_resid_zero: np.ndarray
    sigma_sq: np.ndarray
    sigma_sq_empirical: np.ndarray
    response_density: np.ndarray
    density_ratio: np.ndarray
    clamp_count: int


def fit_nuisance(
    data: Dataset,
    resid: np.ndarray,
    theta,
    pts,
    plan: BandwidthPlan,
    spec: TaskSpec,
) -> NuisanceFit:
    """Evaluate every nuisance estimate on the given points.

    ``theta`` must hold the fitted values at ``pts`` (needed for the
    response-density reading of the residual density).
    """
    pts = np.asarray(pts, dtype=float)
    lw = covariate_weights(pts, data.x, plan.hbar)
    f_x_raw = density_x(lw)
    f_x, c1 = _clamped(f_x_raw)

    cdf0 = cond_cdf_resid_at_zero(lw, f_x, resid, plan.h0)
    dens0_raw = cond_density_resid_at_zero(lw, f_x, resid, plan.h0)
    dens0, c2 = _clamped(dens0_raw)

    sig_emp_raw = cond_moment_psi_sq(lw, f_x, resid, spec)
    sig_emp, c3 = _clamped(sig_emp_raw)
    fixed = sigma_sq_theoretical(spec)
    if fixed is None:
        sigma_sq = sig_emp
    else:
        sigma_sq = np.full(pts.shape[0], fixed)

    resp_raw = response_density_at_fit(lw, f_x, data.y, theta, plan.h1)
    resp, c4 = _clamped(resp_raw)

    return NuisanceFit(
        pts=pts,
        f_x=f_x,
        cdf_resid_zero=cdf0,
        density_resid_zero=dens0,
        sigma_sq=sigma_sq,
        sigma_sq_empirical=sig_emp,
        response_density=resp,
        density_ratio=resp / dens0,
        clamp_count=c1 + c2 + c3 + c4,
    )
