import math

import numpy as np
import pytest
from scipy.integrate import quad

from gqr.kernels import (
    GAUSSIAN,
    ProductKernel,
    QUARTIC,
    as_bandwidth_vector,
    convolve_kernels,
    get_kernel,
    kernel_constants,
    univariate_moments,
)


def test_quartic_integrates_to_one():
    val, _ = quad(QUARTIC.pdf, -1, 1)
    assert val == pytest.approx(1.0, abs=1e-12)


def test_quartic_l2_and_deriv_l2_match_quadrature():
    # int (15/16)^2 (1-u^2)^4 = 5/7, int (15/4)^2 u^2 (1-u^2)^2 = 15/7
    l2, _ = quad(lambda u: QUARTIC.pdf(u) ** 2, -1, 1)
    dl2, _ = quad(lambda u: QUARTIC.deriv(u) ** 2, -1, 1)
    assert l2 == pytest.approx(5.0 / 7.0, abs=1e-12)
    assert dl2 == pytest.approx(15.0 / 7.0, abs=1e-12)

    kc = kernel_constants(ProductKernel(QUARTIC, 1))
    assert kc.l2_uni == pytest.approx(5.0 / 7.0, abs=1e-9)
    assert kc.deriv_l2_uni == pytest.approx(15.0 / 7.0, abs=1e-9)


def test_gaussian_l2():
    # int phi^2 = 1 / (2 sqrt(pi))
    kc = kernel_constants(ProductKernel(GAUSSIAN, 1))
    assert kc.l2_uni == pytest.approx(1.0 / (2.0 * math.sqrt(math.pi)), abs=1e-12)


def test_quartic_moments():
    rough, mu2 = univariate_moments(QUARTIC)
    assert rough == pytest.approx(5.0 / 7.0, abs=1e-9)
    assert mu2 == pytest.approx(1.0 / 7.0, abs=1e-9)


def test_product_constants_d2():
    kc = kernel_constants(ProductKernel(QUARTIC, 2))
    assert kc.l2norm_sq == pytest.approx(25.0 / 49.0, abs=1e-9)
    assert kc.l2norm == pytest.approx(5.0 / 7.0, abs=1e-9)
    # sigma is diagonal with entries (int k'^2)(int k^2)
    assert np.allclose(kc.sigma, np.eye(2) * (15.0 / 7.0) * (5.0 / 7.0), atol=1e-9)
    assert kc.h2 == pytest.approx(1.5 / math.pi, abs=1e-9)


def test_kernel_registry():
    assert get_kernel("quartic") is QUARTIC
    assert get_kernel("gaussian") is GAUSSIAN
    with pytest.raises(KeyError):
        get_kernel("triweight")


def test_as_bandwidth_vector():
    assert np.allclose(as_bandwidth_vector(0.3, 2), [0.3, 0.3])
    assert np.allclose(as_bandwidth_vector([0.1, 0.2], 2), [0.1, 0.2])
    with pytest.raises(ValueError):
        as_bandwidth_vector([0.1, 0.2, 0.3], 2)
    with pytest.raises(ValueError):
        as_bandwidth_vector(-0.1, 2)


def test_weights_at_matches_direct_loop():
    rng = np.random.default_rng(3)
    x = rng.uniform(size=(17, 2))
    pts = rng.uniform(size=(5, 2))
    h = np.array([0.3, 0.4])
    kernel = ProductKernel(QUARTIC, 2)
    w = kernel.weights_at(pts, x, h)
    for a in range(5):
        for i in range(17):
            direct = (
                QUARTIC.pdf((pts[a, 0] - x[i, 0]) / h[0])
                * QUARTIC.pdf((pts[a, 1] - x[i, 1]) / h[1])
                / (h[0] * h[1])
            )
            assert w[a, i] == pytest.approx(direct, rel=1e-12, abs=1e-300)


def test_gaussian_self_convolution_closed_form():
    # sum of two centered Gaussians: density N(0, ha^2 + hb^2)
    ha, hb = 0.37, 0.21
    s = math.hypot(ha, hb)
    for t in (-0.9, -0.2, 0.0, 0.45, 1.3):
        want = math.exp(-0.5 * (t / s) ** 2) / (s * math.sqrt(2.0 * math.pi))
        got = convolve_kernels(GAUSSIAN, ha, GAUSSIAN, hb, t)
        assert got == pytest.approx(want, rel=1e-9)


def test_quartic_gaussian_convolution_vs_brute_force():
    ha, hb = 0.25, 0.1
    grid = np.linspace(-0.6, 0.6, 4001)
    for t in (0.0, 0.2, -0.35):
        vals = QUARTIC.pdf((t - grid) / ha) / ha * GAUSSIAN.pdf(grid / hb) / hb
        want = np.trapezoid(vals, grid)
        got = convolve_kernels(QUARTIC, ha, GAUSSIAN, hb, t)
        assert got == pytest.approx(want, rel=1e-6)


def test_convolution_symmetry_and_vector_input():
    t = np.array([-0.4, -0.1, 0.0, 0.1, 0.4])
    vals = convolve_kernels(QUARTIC, 0.3, GAUSSIAN, 0.12, t)
    assert vals.shape == t.shape
    assert np.allclose(vals, vals[::-1], atol=1e-12)


def test_convolution_vanishes_outside_joint_support():
    # quartic support 0.2 plus 9 sigma of the Gaussian smoother
    assert convolve_kernels(QUARTIC, 0.2, GAUSSIAN, 0.05, 0.66) == 0.0
