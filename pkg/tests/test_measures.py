"""Measures, moments, and quadrature against independent scipy oracles."""
import math

import numpy as np
import pytest
from scipy import stats

from vibias.blocks import BlockStructure
from vibias.errors import AllMassZero, AxesMismatch, NotProductMeasure
from vibias.functional import BoxTail, Polynomial
from vibias.measures import (
    GaussianMeasure,
    GridMeasure,
    discretize_gaussian,
    expect,
    gaussian_boxtail_quadrature,
    inner_product,
    kl_divergence,
    marginal,
    measure_from_json,
    measure_to_json,
    normalize,
)
from vibias.wick import monomial_moment, polynomial_moment


def test_wick_even_moment_closed_form():
    # E[x^2 y^2] = 1 + 2 rho^2 for a standard correlated pair
    for rho in (0.3, 0.5):
        cov = np.array([[1.0, rho], [rho, 1.0]])
        m = monomial_moment(np.zeros(2), cov, (2, 2))
        assert m == pytest.approx(1.0 + 2.0 * rho**2, abs=1e-12)


def test_wick_against_grid_quadrature():
    rng = np.random.default_rng(7)
    mean = np.array([0.3, -0.2])
    a = rng.standard_normal((2, 2)) * 0.3
    cov = a @ a.T + np.eye(2)
    g = GaussianMeasure(mean, cov)
    grid = discretize_gaussian(g, points=401, span=8.0)
    for exps in ((1, 0), (2, 1), (3, 2), (0, 4)):
        poly = Polynomial.monomial(2, 1.0, exps)
        exact = monomial_moment(mean, cov, exps)
        numeric = expect(grid, poly)
        assert numeric == pytest.approx(exact, abs=1e-6)


def test_wick_odd_central_moments_vanish():
    g = np.zeros(3)
    cov = np.eye(3)
    assert monomial_moment(g, cov, (1, 0, 0)) == 0.0
    assert monomial_moment(g, cov, (1, 1, 1)) == 0.0
    assert monomial_moment(g, cov, (3, 0, 0)) == 0.0


def test_polynomial_moment_linearity():
    g = GaussianMeasure(np.zeros(2), np.array([[1.0, 0.4], [0.4, 2.0]]))
    p = Polynomial.from_terms(2, [(2.0, [2, 0]), (-1.0, [1, 1]), (3.0, [0, 0])])
    expected = (
        2.0 * monomial_moment(g.mean, g.covariance, (2, 0))
        - monomial_moment(g.mean, g.covariance, (1, 1))
        + 3.0
    )
    assert polynomial_moment(g.mean, g.covariance, p) == pytest.approx(expected, abs=1e-14)


def test_boxtail_independent_matches_norm_sf():
    g = GaussianMeasure(np.zeros(2), np.eye(2))
    val, _ = gaussian_boxtail_quadrature(g, BoxTail((1.0, 1.0)))
    assert val == pytest.approx(stats.norm.sf(1.0) ** 2, abs=1e-8)


def test_boxtail_correlated_matches_mvn_cdf():
    rho = 0.2
    cov = np.array([[1.0, rho], [rho, 1.0]])
    g = GaussianMeasure(np.zeros(2), cov)
    val, _ = gaussian_boxtail_quadrature(g, BoxTail((1.0, 1.0)))
    # P(X>1, Y>1) = P(X<-1, Y<-1) by central symmetry
    oracle = stats.multivariate_normal(mean=[0, 0], cov=cov).cdf([-1.0, -1.0])
    assert val == pytest.approx(oracle, abs=1e-7)


def test_boxtail_one_sided_and_shifted():
    g = GaussianMeasure(np.array([0.5, 0.0]), np.diag([2.0, 1.0]))
    val, _ = gaussian_boxtail_quadrature(g, BoxTail((1.0, None)))
    assert val == pytest.approx(stats.norm.sf(1.0, loc=0.5, scale=math.sqrt(2.0)), abs=1e-8)


def test_gaussian_kl_closed_form_vs_grid():
    rho = 0.5
    pi = GaussianMeasure(np.zeros(2), np.array([[1.0, rho], [rho, 1.0]]))
    q = GaussianMeasure(np.zeros(2), np.diag([1 - rho**2, 1 - rho**2]))
    closed = kl_divergence(q, pi)
    assert closed == pytest.approx(-0.5 * math.log(1 - rho**2), abs=1e-12)
    qg = discretize_gaussian(q, points=301, span=8.0)
    mesh = np.stack(np.meshgrid(*qg.axes, indexing="ij"), axis=-1)
    pg = normalize(GridMeasure(qg.axes, pi.logpdf_points(mesh)))
    assert kl_divergence(qg, pg) == pytest.approx(closed, abs=1e-4)


def test_grid_expect_linearity_and_normalization():
    ax = np.linspace(-2, 2, 31)
    m = normalize(GridMeasure((ax, ax), -np.add.outer(ax**2, ax**2)))
    assert m.masses.sum() == pytest.approx(1.0, abs=1e-12)
    p1 = Polynomial.monomial(2, 1.0, [2, 0])
    p2 = Polynomial.monomial(2, 1.0, [0, 2])
    lhs = expect(m, p1 + p2 * 2.0)
    assert lhs == pytest.approx(expect(m, p1) + 2.0 * expect(m, p2), abs=1e-12)


def test_normalize_rejects_zero_mass():
    ax = np.array([0.0, 1.0])
    with pytest.raises(AllMassZero):
        normalize(GridMeasure((ax,), np.full(2, -np.inf)))


def test_kl_requires_shared_axes():
    a = normalize(GridMeasure((np.array([0.0, 1.0]),), np.zeros(2)))
    b = normalize(GridMeasure((np.array([0.0, 2.0]),), np.zeros(2)))
    with pytest.raises(AxesMismatch):
        kl_divergence(a, b)


def test_marginal_of_product_grid():
    ax = np.linspace(-1, 1, 9)
    lw = np.add.outer(-(ax**2), -2 * ax**2)
    m = normalize(GridMeasure((ax, ax), lw))
    mx = marginal(m, [0])
    direct = m.masses.sum(axis=1)
    assert np.allclose(mx.masses, direct, atol=1e-14)


def test_inner_product_symmetry_gaussian():
    g = GaussianMeasure(np.zeros(2), np.diag([0.75, 0.75]))
    f = Polynomial.monomial(2, 1.0, [1, 1])
    h = Polynomial.from_terms(2, [(1.0, [2, 0]), (-0.5, [0, 1])])
    assert inner_product(f, h, g) == pytest.approx(inner_product(h, f, g), abs=1e-14)


def test_boxtail_pair_inner_product_is_intersection_mass():
    g = GaussianMeasure(np.zeros(2), np.eye(2))
    a = BoxTail((0.5, None))
    b = BoxTail((1.0, 0.0))
    val = inner_product(a, b, g)
    oracle = stats.norm.sf(1.0) * stats.norm.sf(0.0)
    assert val == pytest.approx(oracle, abs=1e-8)


def test_measure_json_roundtrip():
    g = GaussianMeasure(np.array([0.1, -0.2]), np.array([[1.0, 0.2], [0.2, 1.5]]))
    g2 = measure_from_json(measure_to_json(g))
    assert np.allclose(g2.mean, g.mean)
    assert np.allclose(g2.covariance, g.covariance)
    ax = np.linspace(-1, 1, 5)
    m = normalize(GridMeasure((ax, ax), np.zeros((5, 5))))
    m2 = measure_from_json(measure_to_json(m))
    assert np.allclose(m2.log_weights, m.log_weights)
    assert all(np.allclose(a, b) for a, b in zip(m2.axes, m.axes))


def test_discretize_gaussian_moments():
    g = GaussianMeasure(np.array([1.0, -0.5]), np.diag([0.5, 2.0]))
    grid = discretize_gaussian(g, points=201)
    for i in range(2):
        mean_i = expect(grid, Polynomial.coordinate(2, i))
        assert mean_i == pytest.approx(g.mean[i], abs=1e-8)
        var_i = expect(grid, Polynomial.monomial(2, 1.0, [2 - 2 * i, 2 * i]))
        assert var_i - mean_i**2 == pytest.approx(g.covariance[i, i], rel=1e-6)
