"""Bias decomposition, remainder function, and scaling studies."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vibias.bias import (
    bias_report,
    gaussian_pair_family,
    remainder_bound_check,
    rho_rem,
    scaling_study,
)
from vibias.blocks import BlockStructure
from vibias.errors import NotConverged, ZeroVariance
from vibias.fit import fit_meanfield_cavi, fit_meanfield_gaussian, residual
from vibias.functional import BoxTail, Polynomial, evaluate_on_axes
from vibias.functionals import linear_contrast_variance
from vibias.measures import GaussianMeasure, discretize_gaussian, expect, normalize, GridMeasure


# ---------------------------------------------------------------- rho_rem
def test_rho_rem_reference_values():
    assert rho_rem(0.0) == 0.0
    assert rho_rem(1.0) == pytest.approx(math.exp(-1.0), abs=1e-15)
    assert rho_rem(-1.0) == pytest.approx(math.e - 2.0, abs=1e-14)


def test_rho_rem_series_branch_accuracy():
    # the expm1 oracle loses digits to cancellation, so compare at the
    # oracle's own accuracy (absolute error ~ ulp(x)); for the smallest
    # arguments check the Taylor value directly instead
    for x in (1e-5, -1e-5, 3e-7):
        oracle = math.expm1(-x) + x
        assert abs(float(rho_rem(x)) - oracle) <= 4 * abs(x) * 2**-52
    for x in (-4.2e-9, 1e-12):
        taylor = x * x / 2.0 - x**3 / 6.0
        assert rho_rem(x) == pytest.approx(taylor, rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=-30.0, max_value=30.0, allow_nan=False))
def test_rho_rem_nonnegative_and_quadratic_near_zero(x):
    v = float(rho_rem(x))
    assert v >= 0.0
    if abs(x) <= 1.0:
        assert v <= 0.5 * x * x * math.exp(abs(x)) * (1 + 1e-12)


def test_rho_rem_vectorized():
    xs = np.array([-2.0, -1e-6, 0.0, 1e-6, 2.0])
    vals = rho_rem(xs)
    assert vals.shape == xs.shape
    assert np.all(vals >= 0.0)


# ----------------------------------------------------- decomposition facts
def test_cross_covariance_decomposition_rho02():
    post, fit = gaussian_pair_family(0.2)
    rep = bias_report(Polynomial.monomial(2, 1.0, [1, 1]), post, fit)
    assert rep.exact_bias == pytest.approx(0.2, abs=1e-9)
    assert rep.linear_term == pytest.approx(0.192, abs=1e-9)
    assert rep.interaction_term == pytest.approx(0.192, abs=1e-9)
    assert rep.remainder == pytest.approx(0.008, abs=1e-9)
    assert rep.identity_residual <= 1e-9
    assert rep.transfer_residual <= 1e-9


def test_block_additive_functional_has_zero_linear_term():
    post, fit = gaussian_pair_family(0.2)
    h = Polynomial.from_terms(2, [(1.0, [2, 0]), (1.0, [0, 1])])
    rep = bias_report(h, post, fit)
    assert rep.linear_term == pytest.approx(0.0, abs=1e-10)
    assert rep.interaction_term == pytest.approx(0.0, abs=1e-10)
    # whole bias is second order: it equals the remainder
    assert rep.exact_bias == pytest.approx(rep.remainder, abs=1e-8)


def test_contrast_variance_biases():
    post, fit = gaussian_pair_family(0.2)
    rep_plus = bias_report(linear_contrast_variance([1.0, 1.0]).h, post, fit)
    rep_minus = bias_report(linear_contrast_variance([1.0, -1.0]).h, post, fit)
    assert rep_plus.exact_bias == pytest.approx(0.48, abs=1e-9)
    assert rep_minus.exact_bias == pytest.approx(-0.32, abs=1e-9)


def test_delta_norm_equals_correlation():
    # for the standardized pair, Var_q(delta) = rho^2 exactly at small rho
    post, fit = gaussian_pair_family(0.2)
    rep = bias_report(Polynomial.monomial(2, 1.0, [1, 1]), post, fit)
    assert rep.delta_l2_centered == pytest.approx(0.2, abs=1e-6)


def test_identity_holds_on_grid_random():
    rng = np.random.default_rng(17)
    post = GaussianMeasure(np.zeros(2), np.array([[1.0, 0.3], [0.3, 1.0]]))
    grid = discretize_gaussian(post, points=81)
    fit = fit_meanfield_cavi(grid, BlockStructure.fully_factorized(2), tol=1e-10)
    for k in range(5):
        exps = rng.integers(0, 3, size=(3, 2))
        h = Polynomial.from_terms(
            2, [(float(rng.standard_normal()), e.tolist()) for e in exps]
        )
        rep = bias_report(h, grid, fit, functional_id=f"r{k}")
        assert rep.identity_residual <= 1e-10


def test_uncentered_remainder_sign_for_nonnegative_h():
    # E_q[h rho(delta)] >= 0 pointwise when h >= 0 (uncentered form)
    post = GaussianMeasure(np.zeros(2), np.array([[1.0, 0.4], [0.4, 1.0]]))
    grid = discretize_gaussian(post, points=61)
    fit = fit_meanfield_cavi(grid, BlockStructure.fully_factorized(2), tol=1e-10)
    dv = residual(fit, grid).functional.values
    h = Polynomial.from_terms(2, [(1.0, [2, 0]), (1.0, [0, 0])])
    hv = evaluate_on_axes(h, fit.qstar.axes)
    assert np.all(hv >= 0.0)
    val = float(np.sum(fit.qstar.masses * hv * rho_rem(dv)))
    assert val >= 0.0


def test_boxtail_bias_zero_when_independent():
    post, fit = gaussian_pair_family(0.0)
    rep = bias_report(BoxTail((1.0, 1.0)), post, fit, functional_id="tail")
    assert abs(rep.exact_bias) <= 1e-6


def test_boxtail_bias_positive_under_correlation():
    post, fit = gaussian_pair_family(0.2)
    rep = bias_report(BoxTail((1.0, 1.0)), post, fit, functional_id="tail")
    assert rep.exact_bias > 0.0
    assert rep.identity_residual <= 1e-8
    assert math.isfinite(rep.bound_ratio)
    # self-consistent first-order bound
    assert abs(rep.exact_bias - rep.linear_term) <= rep.delta_l2**2 * rep.bound_ratio * (
        1 + 1e-9
    ) + 1e-12


def test_remainder_bound_check_grid():
    post = GaussianMeasure(np.zeros(2), np.array([[1.0, 0.3], [0.3, 1.0]]))
    grid = discretize_gaussian(post, points=61)
    fit = fit_meanfield_cavi(grid, BlockStructure.fully_factorized(2), tol=1e-10)
    rep = bias_report(Polynomial.monomial(2, 1.0, [1, 1]), grid, fit)
    assert remainder_bound_check(rep, Polynomial.monomial(2, 1.0, [1, 1]), fit, grid) == rep.bound_ratio


def test_remainder_bound_check_rejects_constant():
    post, fit = gaussian_pair_family(0.2)
    rep = bias_report(Polynomial.constant(2, 3.0), post, fit)
    with pytest.raises(ZeroVariance):
        remainder_bound_check(rep, Polynomial.constant(2, 3.0), fit, post)


def test_unconverged_fit_rejected():
    import dataclasses

    post, fit = gaussian_pair_family(0.2)
    bad = dataclasses.replace(fit, converged=False)
    with pytest.raises(NotConverged):
        bias_report(Polynomial.monomial(2, 1.0, [1, 1]), post, bad)


# ------------------------------------------------------------- scaling law
def test_scaling_slopes():
    eps = (0.2, 0.1, 0.05, 0.025)
    s_add = scaling_study(Polynomial.monomial(2, 1.0, [2, 0]), eps)
    s_int = scaling_study(Polynomial.monomial(2, 1.0, [1, 1]), eps)
    assert s_add.slope == pytest.approx(2.0, abs=0.05)
    assert s_int.slope == pytest.approx(1.0, abs=0.05)
    assert not s_add.degenerate and not s_int.degenerate


def test_scaling_degenerate_for_odd_functional():
    # E[theta_1] matches exactly for every eps, so every bias is zero
    study = scaling_study(Polynomial.coordinate(2, 0), (0.2, 0.1, 0.05, 0.025))
    assert study.degenerate
    assert study.slope == math.inf


def test_scaling_needs_four_points():
    with pytest.raises(ValueError):
        scaling_study(Polynomial.monomial(2, 1.0, [1, 1]), (0.2, 0.1))
