import math

import numpy as np
import pytest

from gqr.bandwidth import (
    BandwidthPlan,
    canonical_bandwidth_factor,
    estimation_bandwidth,
    kappa_for,
    make_plan,
    nuisance_bandwidths,
    rule_of_thumb,
    tail_inflation_factor,
    undersmooth_factor,
    yu_jones_factor,
)
from gqr.errors import DataError
from gqr.estimator import Dataset
from gqr.kernels import GAUSSIAN, QUARTIC
from gqr.losses import TaskSpec


def _dataset(n=128, d=2, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(size=(n, d))
    y = rng.normal(size=n)
    return Dataset(x=x, y=y)


def test_rule_of_thumb_formula():
    data = _dataset(n=200, d=2)
    h = rule_of_thumb(data.x)
    sd = np.std(data.x, axis=0, ddof=1)
    assert np.allclose(h, 1.06 * sd * 200 ** (-1.0 / 6.0))


def test_rule_of_thumb_rejects_constant_column():
    x = np.column_stack([np.ones(50), np.linspace(0, 1, 50)])
    with pytest.raises(DataError):
        rule_of_thumb(x)


def test_canonical_factor_quartic():
    # (int k^2 / mu_2^2)^{1/5} ratio of quartic over gaussian
    quartic = (5.0 / 7.0 / (1.0 / 7.0) ** 2) ** 0.2
    gauss = (1.0 / (2.0 * math.sqrt(math.pi)) / 1.0) ** 0.2
    assert canonical_bandwidth_factor(QUARTIC) == pytest.approx(quartic / gauss, abs=1e-6)
    assert canonical_bandwidth_factor(QUARTIC) == pytest.approx(2.6226, abs=2e-4)
    assert canonical_bandwidth_factor(GAUSSIAN) == pytest.approx(1.0, abs=1e-12)


def test_yu_jones_factor():
    assert yu_jones_factor(0.5) == pytest.approx((math.pi / 2.0) ** 0.2, abs=1e-12)
    assert yu_jones_factor(0.5) == pytest.approx(1.0945, abs=1e-4)
    # symmetric, and minimal at the median over the usual level grid
    grid = np.arange(0.1, 0.95, 0.1)
    f = np.array([yu_jones_factor(t) for t in grid])
    assert np.allclose(f, f[::-1], atol=1e-12)
    assert np.all(f >= yu_jones_factor(0.5) - 1e-12)


def test_undersmooth_factor_values():
    assert undersmooth_factor(100) == pytest.approx(100 ** -0.05)
    assert undersmooth_factor(100) == pytest.approx(0.7943, abs=1e-4)
    assert undersmooth_factor(300) == pytest.approx(0.7518, abs=1e-4)
    assert undersmooth_factor(500) == pytest.approx(0.7329, abs=1e-4)
    assert undersmooth_factor(1000, delta=0.0) == 1.0
    with pytest.raises(ValueError):
        undersmooth_factor(100, delta=-0.1)


def test_estimation_bandwidth_composition():
    data = _dataset()
    spec = TaskSpec("quantile", 0.3)
    h = estimation_bandwidth(data, spec, QUARTIC, delta=0.05)
    want = (
        rule_of_thumb(data.x)
        * canonical_bandwidth_factor(QUARTIC)
        * yu_jones_factor(0.3)
        * undersmooth_factor(data.n, 0.05)
    )
    assert np.allclose(h, want)
    # the level adjustment applies to the quantile family only
    h_mean = estimation_bandwidth(data, TaskSpec("mean"), QUARTIC, delta=0.05)
    assert np.allclose(
        h_mean,
        rule_of_thumb(data.x) * canonical_bandwidth_factor(QUARTIC) * undersmooth_factor(data.n),
    )


def test_nuisance_bandwidths_rate():
    # d=2 gives the n^{-1/7} rate; n=128 makes it exactly 1/2
    data = _dataset(n=128, d=2)
    resid = np.random.default_rng(1).normal(size=128)
    h0, hbar = nuisance_bandwidths(data.x, resid)
    sd_r = float(np.std(resid, ddof=1))
    assert h0 == pytest.approx(1.06 * sd_r * 0.5)
    assert np.allclose(hbar, 1.06 * np.std(data.x, axis=0, ddof=1) * 0.5)
    assert 128 ** (-1.0 / 7.0) == pytest.approx(0.5)


def test_kappa_for_roundtrip():
    # h = n^{-kappa} exactly
    n = 400
    h = n ** -0.25
    assert kappa_for([h, h], n) == pytest.approx(0.25, abs=1e-12)
    # geometric mean mixes anisotropic bandwidths
    assert kappa_for([0.2, 0.4], 300) == pytest.approx(
        -math.log(math.sqrt(0.08)) / math.log(300)
    )


def test_tail_inflation_factor():
    assert tail_inflation_factor(0.1) == 1.7
    assert tail_inflation_factor(0.9) == 1.7
    for t in (0.2, 0.3, 0.7, 0.8):
        assert tail_inflation_factor(t) == 1.3
    assert tail_inflation_factor(0.5) == 1.0
    assert tail_inflation_factor(0.42) == 1.0


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_make_plan_fields_and_overrides():
    data = _dataset(n=300)
    spec = TaskSpec("quantile", 0.5)
    resid = np.random.default_rng(2).normal(size=300)
    plan = make_plan(data, spec, resid, QUARTIC, h=0.3, h1_inflation=1.5)
    assert isinstance(plan, BandwidthPlan)
    assert np.allclose(plan.h, [0.3, 0.3])
    assert plan.h_prod == pytest.approx(0.09)
    assert plan.h1 == pytest.approx(1.5 * plan.h0)
    assert plan.kappa == pytest.approx(-math.log(0.3) / math.log(300))

    auto = make_plan(data, spec, resid, QUARTIC)
    assert np.allclose(auto.h, estimation_bandwidth(data, spec, QUARTIC))


def test_make_plan_warns_when_neighborhoods_too_small():
    data = _dataset(n=100)
    resid = np.random.default_rng(3).normal(size=100)
    with pytest.warns(RuntimeWarning):
        make_plan(data, TaskSpec("mean"), resid, QUARTIC, h=0.15)


def test_make_plan_rejects_bad_manual_bandwidths():
    data = _dataset(n=50)
    resid = np.random.default_rng(4).normal(size=50)
    with pytest.raises(DataError):
        make_plan(data, TaskSpec("mean"), resid, QUARTIC, h=[0.1, 0.2, 0.3])
    with pytest.raises(DataError):
        make_plan(data, TaskSpec("mean"), resid, QUARTIC, h=-0.2)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_plans_are_deterministic():
    data = _dataset(n=150, seed=11)
    resid = np.random.default_rng(5).normal(size=150)
    spec = TaskSpec("expectile", 0.3)
    a = make_plan(data, spec, resid, QUARTIC, h=0.4)
    b = make_plan(data, spec, resid, QUARTIC, h=0.4)
    assert np.array_equal(a.h, b.h)
    assert a.h0 == b.h0 and a.h1 == b.h1 and a.kappa == b.kappa
