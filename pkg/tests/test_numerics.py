import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import selfnorm as sn
from selfnorm.numerics import SummationAccumulator


def test_pairwise_sum_cancellation():
    assert sn.pairwise_sum([1.0, -1.0]) == 0.0


def test_pairwise_sum_large_magnitude():
    assert sn.pairwise_sum([1e16, 1.0, -1e16]) == 1.0


def test_pairwise_sum_many_tenths():
    total = sn.pairwise_sum([0.1] * 10**6)
    assert abs(total - 100000.0) <= 1e-6


def test_pairwise_sum_error_bound():
    # The documented error guarantee: within 4 eps times the sum of magnitudes.
    rng = np.random.default_rng(0)
    for _ in range(25):
        values = rng.standard_normal(rng.integers(1, 2000)) * 10.0 ** rng.integers(-3, 4)
        budget = 4.0 * np.finfo(float).eps * np.abs(values).sum()
        assert abs(sn.pairwise_sum(values) - math.fsum(values)) <= budget


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-1e12, 1e12, allow_nan=False), min_size=1, max_size=400))
def test_pairwise_sum_matches_fsum(values):
    budget = 4.0 * np.finfo(float).eps * float(np.abs(values).sum())
    assert abs(sn.pairwise_sum(values) - math.fsum(values)) <= budget


def test_accumulator_matches_pairwise():
    rng = np.random.default_rng(3)
    values = rng.standard_normal(5000)
    acc = SummationAccumulator()
    for chunk in np.array_split(values, 17):
        acc.extend(chunk)
    budget = 8.0 * np.finfo(float).eps * np.abs(values).sum()
    assert abs(acc.result - math.fsum(values)) <= budget


def test_ols_exact_line():
    fit = sn.ols_fit([0.0, 1.0, 2.0], [1.0, 4.0, 7.0])
    assert fit.slope == pytest.approx(3.0, abs=1e-12)
    assert fit.intercept == pytest.approx(1.0, abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)


def test_ols_two_points_interpolates():
    fit = sn.ols_fit([2.0, 5.0], [-1.0, 8.0])
    assert fit.slope == pytest.approx(3.0, abs=1e-12)
    assert fit.intercept == pytest.approx(-7.0, abs=1e-12)


def test_ols_matches_normal_equations():
    rng = np.random.default_rng(11)
    xs = rng.uniform(-5, 5, 200)
    ys = 0.7 * xs - 2.3 + rng.standard_normal(200)
    fit = sn.ols_fit(xs, ys)
    design = np.column_stack([xs, np.ones_like(xs)])
    slope, intercept = np.linalg.lstsq(design, ys, rcond=None)[0]
    assert fit.slope == pytest.approx(slope, abs=1e-10)
    assert fit.intercept == pytest.approx(intercept, abs=1e-10)


def test_normal_cdf_reference_values():
    assert sn.normal_cdf(0.0) == 0.5
    assert sn.normal_cdf(1.96) == pytest.approx(0.9750021048517795, abs=1e-12)
    assert sn.normal_cdf(-8.0) < 1e-15


def test_normal_cdf_symmetry():
    zs = np.linspace(-10.0, 10.0, 2001)
    residual = np.abs(sn.normal_cdf(zs) + sn.normal_cdf(-zs) - 1.0)
    assert residual.max() <= 1e-15


@settings(max_examples=100, deadline=None)
@given(st.floats(-12.0, 12.0), st.floats(-12.0, 12.0))
def test_normal_cdf_monotone(a, b):
    lo, hi = min(a, b), max(a, b)
    assert sn.normal_cdf(lo) <= sn.normal_cdf(hi)


def test_normal_quantile_round_trip():
    ps = np.linspace(1e-6, 1.0 - 1e-6, 401)
    back = sn.normal_cdf(sn.normal_quantile(ps))
    assert np.abs(back - ps).max() <= 1e-12
