import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pcfortho.core import Constant, EstimatedConstant, ObservationWindow, PointPattern, resolve_intensity
from pcfortho.errors import ConfigurationError, DomainError
from pcfortho.kernel_est import (
    EPANECHNIKOV,
    UNIFORM,
    CrossValidated,
    Fixed,
    Illian,
    KernelSpec,
    StoyanDefault,
    brute_force_cv_criterion,
    cv_bandwidth,
    cv_criterion,
    default_cv_grid,
    estimate_g,
    estimate_gc,
    estimate_gd,
    estimate_gk,
    kernel_mass,
    kernel_value,
    rule_bandwidth,
)
from pcfortho.simulate import Poisson, Thomas, sample_replicate

from conftest import uniform_pattern

TWO_POINT = 1.0 / (2 * math.pi * 0.1) * 2 * 50 / (100 * 0.9)


def test_kernel_values():
    assert kernel_value(KernelSpec(EPANECHNIKOV, 1.0), 0.0) == 0.75
    assert kernel_value(KernelSpec(UNIFORM, 0.5), 0.2) == pytest.approx(1.0)
    for spec in (KernelSpec(EPANECHNIKOV, 0.3), KernelSpec(UNIFORM, 0.3)):
        assert kernel_value(spec, 0.31) == 0.0
        assert kernel_value(spec, -0.5) == 0.0


@pytest.mark.parametrize("kind", [EPANECHNIKOV, UNIFORM])
def test_kernel_integrates_to_one(kind):
    spec = KernelSpec(kind, 0.2)
    t = np.linspace(-0.2, 0.2, 200_001)
    assert np.trapezoid(kernel_value(spec, t), t) == pytest.approx(1.0, abs=1e-6)


def test_kernel_spec_validation():
    with pytest.raises(ConfigurationError):
        KernelSpec("gaussian", 0.1)
    with pytest.raises(ConfigurationError):
        KernelSpec(UNIFORM, 0.0)


def test_kernel_mass_examples():
    assert kernel_mass(KernelSpec(EPANECHNIKOV, 0.1), 0.05) == pytest.approx(0.84375, abs=1e-15)
    assert kernel_mass(KernelSpec(UNIFORM, 0.1), 0.05) == pytest.approx(0.75, abs=1e-15)
    assert kernel_mass(KernelSpec(EPANECHNIKOV, 0.1), 0.1) == 1.0
    assert kernel_mass(KernelSpec(EPANECHNIKOV, 0.1), 0.3) == 1.0


@given(st.floats(1e-4, 0.5), st.floats(1e-4, 0.5), st.sampled_from([EPANECHNIKOV, UNIFORM]))
def test_kernel_mass_properties(r1, r2, kind):
    spec = KernelSpec(kind, 0.1)
    lo, hi = sorted((r1, r2))
    c_lo, c_hi = kernel_mass(spec, lo), kernel_mass(spec, hi)
    assert 0 < c_lo <= c_hi <= 1
    if lo >= 0.1:
        assert c_lo == 1.0


def _two_points(window):
    return PointPattern([[0.3, 0.5], [0.4, 0.5]], window)


@pytest.mark.parametrize("fn", [estimate_gk, estimate_gd, estimate_gc])
def test_two_point_hand_value(backend, unit_square, fn):
    val = fn(_two_points(unit_square), Constant(10.0), KernelSpec(UNIFORM, 0.01), 0.1)
    assert val == pytest.approx(TWO_POINT, rel=1e-12)
    assert val == pytest.approx(1.76839, abs=1e-5)


@pytest.mark.parametrize("fn", [estimate_gk, estimate_gd, estimate_gc])
def test_empty_pattern_gives_zero(unit_square, fn):
    empty = PointPattern(np.zeros((0, 2)), unit_square)
    np.testing.assert_array_equal(fn(empty, Constant(10.0), KernelSpec(EPANECHNIKOV, 0.02), [0.05, 0.1]), 0.0)


def test_gc_equals_gd_beyond_bandwidth(unit_square):
    pat = uniform_pattern(200, seed=4)
    spec = KernelSpec(EPANECHNIKOV, 0.02)
    r = np.linspace(0.02, 0.12, 11)
    np.testing.assert_allclose(estimate_gc(pat, EstimatedConstant(), spec, r),
                               estimate_gd(pat, EstimatedConstant(), spec, r), rtol=1e-14)


def test_rejects_nonpositive_lag(unit_square):
    with pytest.raises(DomainError):
        estimate_gk(_two_points(unit_square), Constant(10.0), KernelSpec(UNIFORM, 0.01), 0.0)
    with pytest.raises(ConfigurationError):
        estimate_g(_two_points(unit_square), Constant(10.0), KernelSpec(UNIFORM, 0.01), 0.1, "x")


@pytest.mark.parametrize("estimator", ["k", "d"])
def test_poisson_unbiased(estimator, unit_square):
    vals = []
    for rep in range(1000):
        pat = sample_replicate(Poisson(100.0), unit_square, 101, rep)
        b = rule_bandwidth(StoyanDefault(), pat)
        vals.append(estimate_g(pat, Constant(100.0), KernelSpec(EPANECHNIKOV, b), 0.05, estimator))
    vals = np.array(vals)
    se = vals.std(ddof=1) / math.sqrt(vals.size)
    assert abs(vals.mean() - 1.0) < 3 * se


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 80), st.integers(0, 1000), st.floats(-5.0, 5.0), st.floats(-5.0, 5.0))
def test_translation_invariance(n, seed, sx, sy):
    pat = uniform_pattern(n, seed=seed)
    moved = pat.translated([sx, sy])
    spec = KernelSpec(EPANECHNIKOV, 0.03)
    r = np.linspace(0.01, 0.2, 9)
    for est in "kdc":
        np.testing.assert_allclose(
            estimate_g(moved, Constant(n), spec, r, est),
            estimate_g(pat, Constant(n), spec, r, est), rtol=1e-9, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 80), st.integers(0, 1000), st.sampled_from([EPANECHNIKOV, UNIFORM]))
def test_nonnegative(n, seed, kind):
    pat = uniform_pattern(n, seed=seed)
    r = np.linspace(0.002, 0.3, 50)
    for est in "kd":
        assert np.all(estimate_g(pat, Constant(100.0), KernelSpec(kind, 0.02), r, est) >= 0)


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 60), st.integers(0, 1000), st.floats(1.01, 20.0))
def test_scaling_identity(n, seed, s):
    pat = uniform_pattern(n, seed=seed)
    big_win = ObservationWindow((0.0, 0.0), (s, s))
    big = PointPattern(pat.points * s, big_win)
    r = np.linspace(0.01, 0.2, 7)
    small_g = estimate_gk(pat, Constant(100.0), KernelSpec(EPANECHNIKOV, 0.03), r, r_min=0.0)
    big_g = estimate_gk(big, Constant(100.0 / s**2), KernelSpec(EPANECHNIKOV, 0.03 * s), r * s, r_min=0.0)
    np.testing.assert_allclose(big_g, small_g, rtol=1e-10, atol=1e-12)


def test_bandwidth_rules(unit_square):
    pat = uniform_pattern(100)
    assert rule_bandwidth(StoyanDefault(), pat) == pytest.approx(0.015)
    assert rule_bandwidth(Illian(), pat) == pytest.approx(0.010)
    assert rule_bandwidth(Fixed(0.02), pat) == 0.02
    with pytest.raises(ConfigurationError):
        rule_bandwidth(CrossValidated(default_cv_grid()), pat)


def test_default_grid():
    g = default_cv_grid()
    assert len(g) == 20
    assert g[0] == pytest.approx(0.005) and g[-1] == pytest.approx(0.1)
    np.testing.assert_allclose(np.diff(np.log(g)), np.log(20) / 19)


def test_cv_single_bandwidth(unit_square):
    pat = uniform_pattern(50)
    res = cv_bandwidth(pat, EstimatedConstant(), "d", 0.1, [0.02])
    assert res.bandwidth == 0.02


def test_cv_grid_validation(unit_square):
    pat = uniform_pattern(50)
    with pytest.raises(ConfigurationError):
        cv_criterion(pat, EstimatedConstant(), "d", 0.1, [])
    with pytest.raises(ConfigurationError):
        cv_criterion(pat, EstimatedConstant(), "d", 0.1, [0.01, -0.1])


@pytest.mark.parametrize("estimator", ["k", "d", "c"])
@pytest.mark.parametrize("kind", [EPANECHNIKOV, UNIFORM])
def test_cv_matches_leave_two_out_recomputation(backend, unit_square, estimator, kind):
    grid = [0.01, 0.02, 0.04, 0.08, 0.15]
    for seed in range(3):
        pat = sample_replicate(Poisson(15.0), unit_square, 5, seed)
        rho = resolve_intensity(pat, EstimatedConstant())
        fast = cv_criterion(pat, None, estimator, 0.3, grid, kind, rho=rho)
        slow = [brute_force_cv_criterion(pat, rho, estimator, 0.3, b, kind) for b in grid]
        np.testing.assert_allclose(fast, slow, rtol=1e-9, atol=1e-12)


def test_cv_threads_identical(unit_square):
    pat = sample_replicate(Thomas(25, 4, 0.03), unit_square, 1, 0)
    a = cv_criterion(pat, EstimatedConstant(), "c", 0.125, default_cv_grid())
    b = cv_criterion(pat, EstimatedConstant(), "c", 0.125, default_cv_grid(), max_workers=4)
    np.testing.assert_array_equal(a, b)


def test_cv_ties_go_to_smaller_bandwidth(unit_square):
    # no pairs below R + b: every criterion value is 0
    pat = PointPattern([[0.1, 0.1], [0.9, 0.9]], unit_square)
    res = cv_bandwidth(pat, EstimatedConstant(), "d", 0.1, [0.04, 0.01, 0.02])
    assert res.bandwidth == 0.01


@pytest.mark.slow
def test_cv_selects_interior_bandwidth():
    # Thomas at intensity 100 on a window holding about 1000 points
    side = math.sqrt(10.0)
    window = ObservationWindow((0.0, 0.0), (side, side))
    grid = default_cv_grid()
    interior = 0
    for rep in range(100):
        pat = sample_replicate(Thomas(25, 4, 0.03), window, 17, rep)
        b = cv_bandwidth(pat, EstimatedConstant(), "c", 0.125, grid).bandwidth
        interior += grid[0] < b < grid[-1]
    assert interior >= 90
