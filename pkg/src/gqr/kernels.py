"""Kernel functions and the constants derived from them.

Univariate kernels are combined into product kernels for multivariate
smoothing.  The module also computes, by Gauss-Legendre quadrature, the
kernel constants that enter critical values: the squared L2 norm, the
matrix of derivative cross-products, and the scaling constant built from
both.
"""

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import ndtr

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

# Integration window for kernels without compact support.  The Gaussian
# density squared is below 1e-36 outside [-9, 9], far under the quadrature
# tolerance we target.
_UNBOUNDED_QUAD_HALFWIDTH = 9.0


def _quartic_pdf(u):
    u = np.asarray(u, dtype=float)
    t = np.clip(1.0 - u * u, 0.0, None)
    return 0.9375 * t * t


def _quartic_deriv(u):
    u = np.asarray(u, dtype=float)
    t = np.clip(1.0 - u * u, 0.0, None)
    return -3.75 * u * t


def _gauss_pdf(u):
    u = np.asarray(u, dtype=float)
    return _INV_SQRT_2PI * np.exp(-0.5 * u * u)


def _gauss_deriv(u):
    u = np.asarray(u, dtype=float)
    return -u * _gauss_pdf(u)


@dataclass(frozen=True)
class UnivariateKernel:
    """A symmetric univariate kernel.

    Parameters
    ----------
    name : str
        Registry identifier.
    support : float
        Half-width of the support, ``math.inf`` when unbounded.
    pdf : callable
        Vectorized kernel function.
    deriv : callable
        Vectorized derivative of the kernel function.
    cdf : callable, optional
        Antiderivative normalised as a distribution function.  Present for
        kernels used to smooth indicator functions.
    """

    name: str
    support: float
    pdf: Callable
    deriv: Callable
    cdf: Optional[Callable] = None

    @property
    def quad_halfwidth(self) -> float:
        if math.isinf(self.support):
            return _UNBOUNDED_QUAD_HALFWIDTH
        return self.support


QUARTIC = UnivariateKernel("quartic", 1.0, _quartic_pdf, _quartic_deriv)
GAUSSIAN = UnivariateKernel("gaussian", math.inf, _gauss_pdf, _gauss_deriv, cdf=ndtr)

_REGISTRY = {k.name: k for k in (QUARTIC, GAUSSIAN)}


def get_kernel(name: str) -> UnivariateKernel:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise KeyError(
            "unknown kernel %r; available: %s" % (name, sorted(_REGISTRY))
        ) from None


def as_bandwidth_vector(h, dim: int) -> np.ndarray:
    """Broadcast a scalar or length-d bandwidth to a validated (d,) array."""
    arr = np.asarray(h, dtype=float)
    if arr.ndim == 0:
        arr = np.full(dim, float(arr))
    if arr.shape != (dim,):
        raise ValueError("bandwidth must be scalar or length %d, got shape %s" % (dim, arr.shape))
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0.0):
        raise ValueError("bandwidths must be positive and finite, got %s" % arr)
    return arr


@dataclass(frozen=True)
class ProductKernel:
    """Product of d copies of a univariate kernel."""

    base: UnivariateKernel
    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")

    def evaluate(self, u) -> np.ndarray:
        """Evaluate the product kernel at points u with shape (..., dim)."""
        u = np.asarray(u, dtype=float)
        if u.shape[-1] != self.dim:
            raise ValueError("last axis must have length %d" % self.dim)
        out = self.base.pdf(u[..., 0])
        for j in range(1, self.dim):
            out = out * self.base.pdf(u[..., j])
        return out

    def weights(self, h, x, x_data) -> np.ndarray:
        """Scaled kernel weights K_h(x - X_i) for a single evaluation point.

        Returns an (n,) array: the product over coordinates of
        k((x_j - X_ij) / h_j), divided by the bandwidth product.
        """
        return self.weights_at(np.asarray(x, dtype=float)[None, :], x_data, h)[0]

    def weights_at(self, pts, x_data, h) -> np.ndarray:
        """Scaled kernel weights for a batch of evaluation points.

        Parameters
        ----------
        pts : (m, d) array
        x_data : (n, d) array
        h : scalar or (d,) bandwidths

        Returns
        -------
        (m, n) array with entry [a, i] = K_h(pts[a] - x_data[i]).
        """
        h = as_bandwidth_vector(h, self.dim)
        pts = np.asarray(pts, dtype=float)
        x_data = np.asarray(x_data, dtype=float)
        u = (pts[:, None, 0] - x_data[None, :, 0]) / h[0]
        out = self.base.pdf(u)
        for j in range(1, self.dim):
            u = (pts[:, None, j] - x_data[None, :, j]) / h[j]
            out = out * self.base.pdf(u)
        out /= float(np.prod(h))
        return out


@dataclass(frozen=True)
class KernelConstants:
    """Quadrature constants for a product kernel.

    ``l2norm_sq`` is the integral of K^2 over R^d, ``sigma`` the matrix of
    integrated derivative cross-products, and ``h2`` the scaling constant
    ``(2 pi l2norm_sq)^(-d/2) det(sigma)^(1/2)`` used by the critical value
    expansion.
    """

    dim: int
    l2_uni: float
    deriv_l2_uni: float
    l2norm_sq: float
    l2norm: float
    sigma: np.ndarray
    h2: float


def _gauss_legendre(halfwidth: float, order: int):
    nodes, wts = leggauss(order)
    return nodes * halfwidth, wts * halfwidth


def kernel_constants(kernel: ProductKernel, order: int = 240) -> KernelConstants:
    """Compute kernel constants by Gauss-Legendre quadrature on the support."""
    base = kernel.base
    x, w = _gauss_legendre(base.quad_halfwidth, order)
    k = base.pdf(x)
    kd = base.deriv(x)
    l2_uni = float(w @ (k * k))
    deriv_l2_uni = float(w @ (kd * kd))
    d = kernel.dim
    l2norm_sq = l2_uni**d
    # Product kernels with symmetric factors: off-diagonal terms contain the
    # factor int k k' = 0, so sigma is diagonal.
    sigma = np.eye(d) * (deriv_l2_uni * l2_uni ** (d - 1))
    h2 = (2.0 * math.pi * l2norm_sq) ** (-d / 2.0) * math.sqrt(float(np.linalg.det(sigma)))
    return KernelConstants(
        dim=d,
        l2_uni=l2_uni,
        deriv_l2_uni=deriv_l2_uni,
        l2norm_sq=l2norm_sq,
        l2norm=math.sqrt(l2norm_sq),
        sigma=sigma,
        h2=h2,
    )


def univariate_moments(kernel: UnivariateKernel, order: int = 240):
    """Roughness and second moment of a univariate kernel.

    Returns (int k^2, int u^2 k(u) du), computed by Gauss-Legendre
    quadrature on the kernel support.
    """
    x, w = _gauss_legendre(kernel.quad_halfwidth, order)
    k = kernel.pdf(x)
    return float(w @ (k * k)), float(w @ (x * x * k))


def convolve_kernels(a: UnivariateKernel, h_a, b: UnivariateKernel, h_b, t, order: int = 96):
    """Convolution of two scaled kernels, evaluated at t.

    Computes ``int a((t - s)/h_a)/h_a * b(s/h_b)/h_b ds`` by Gauss-Legendre
    quadrature over the window where both factors can be non-negligible.
    ``t`` may be a scalar or an array; the result has the same shape.
    """
    h_a = float(h_a)
    h_b = float(h_b)
    if h_a <= 0 or h_b <= 0:
        raise ValueError("bandwidths must be positive")
    t_arr = np.asarray(t, dtype=float)
    scalar = t_arr.ndim == 0
    t_flat = np.atleast_1d(t_arr).ravel()

    wa = a.quad_halfwidth * h_a
    wb = b.quad_halfwidth * h_b
    lo = np.maximum(t_flat - wa, -wb)
    hi = np.minimum(t_flat + wa, wb)
    width = np.clip(hi - lo, 0.0, None)

    nodes, wts = leggauss(order)
    # s has shape (m, order); each row is the quadrature rule mapped onto its window
    mid = 0.5 * (lo + hi)
    half = 0.5 * width
    s = mid[:, None] + half[:, None] * nodes[None, :]
    vals = a.pdf((t_flat[:, None] - s) / h_a) * b.pdf(s / h_b)
    out = (vals @ wts) * half / (h_a * h_b)
    out[width <= 0.0] = 0.0
    out = out.reshape(t_arr.shape)
    return float(out) if scalar else out
