"""Score bases, ANOVA decomposition, and tangent-space projection."""
import math

import numpy as np
import pytest

from vibias.blocks import BlockStructure
from vibias.errors import NotProductMeasure, UnsupportedPair
from vibias.fit import fit_meanfield_cavi, fit_meanfield_gaussian, residual
from vibias.functional import BoxTail, Polynomial, evaluate_on_axes
from vibias.measures import (
    GaussianMeasure,
    conditional_expectation,
    discretize_gaussian,
    expect,
    inner_product,
    normalize,
    GridMeasure,
)
from vibias.tangent import (
    anova_decompose,
    orthogonality_report,
    score_basis,
    tangent_project,
)


def _pair_fit(rho):
    post = GaussianMeasure(np.zeros(2), np.array([[1.0, rho], [rho, 1.0]]))
    return post, fit_meanfield_gaussian(post, BlockStructure.fully_factorized(2))


def test_scores_are_centered():
    post, fit = _pair_fit(0.5)
    basis = score_basis(fit)
    for s in basis.scores:
        assert expect(fit.qstar, s) == pytest.approx(0.0, abs=1e-12)


def test_score_basis_rejects_correlated_q():
    q = GaussianMeasure(np.zeros(2), np.array([[1.0, 0.3], [0.3, 1.0]]))
    from vibias.fit import MeanFieldFit

    fake = MeanFieldFit(q, BlockStructure.fully_factorized(2), (0.0,), True, 0.0)
    with pytest.raises(NotProductMeasure):
        score_basis(fake)


def test_anova_pure_interaction():
    q = GaussianMeasure(np.zeros(2), np.diag([0.75, 0.75]))
    blocks = BlockStructure.fully_factorized(2)
    h = Polynomial.monomial(2, 1.0, [1, 1])
    dec = anova_decompose(h, q, blocks)
    assert dec.mean == pytest.approx(0.0, abs=1e-14)
    for c in dec.block_components:
        assert all(abs(v) <= 1e-14 for v in c.terms.values())
    assert dec.interaction.terms == h.terms


def test_anova_block_additive_has_no_interaction():
    q = GaussianMeasure(np.zeros(2), np.diag([0.96, 0.96]))
    blocks = BlockStructure.fully_factorized(2)
    h = Polynomial.from_terms(2, [(1.0, [2, 0]), (1.0, [0, 1])])
    dec = anova_decompose(h, q, blocks)
    assert all(abs(v) <= 1e-14 for v in dec.interaction.terms.values())
    recon = Polynomial.constant(2, dec.mean)
    for c in dec.block_components:
        recon = recon + c
    diff = recon - h
    assert all(abs(v) <= 1e-12 for v in diff.terms.values())


def test_anova_interaction_annihilated_by_conditioning_grid():
    rng = np.random.default_rng(5)
    ax = np.sort(rng.standard_normal(7))
    lw = np.add.outer(np.log(rng.random(7) + 0.1), np.log(rng.random(7) + 0.1))
    q = normalize(GridMeasure((ax, ax), lw))
    blocks = BlockStructure.fully_factorized(2)
    h = Polynomial.from_terms(2, [(1.0, [1, 2]), (0.5, [2, 0]), (-1.0, [1, 1])])
    dec = anova_decompose(h, q, blocks)
    for b in blocks.blocks:
        ce = conditional_expectation(dec.interaction, q, b)
        assert np.max(np.abs(ce.values)) <= 1e-12


def test_anova_tower_property_grid():
    # conditional expectation given a block integrates back to the mean
    rng = np.random.default_rng(9)
    ax = np.sort(rng.standard_normal(8))
    lw = np.add.outer(np.log(rng.random(8) + 0.2), np.log(rng.random(8) + 0.2))
    q = normalize(GridMeasure((ax, ax), lw))
    h = Polynomial.from_terms(2, [(1.0, [2, 1]), (2.0, [0, 2])])
    ce = conditional_expectation(h, q, [0])
    from vibias.measures import marginal

    m0 = marginal(q, [0])
    back = float(np.sum(m0.masses * ce.values))
    assert back == pytest.approx(expect(q, h), abs=1e-12)


def test_pythagoras_tangent_project():
    post, fit = _pair_fit(0.3)
    h = Polynomial.from_terms(2, [(1.0, [2, 1]), (0.7, [1, 1]), (-0.2, [3, 0])])
    g_par, g_perp = tangent_project(h, fit)
    q = fit.qstar
    hc = h - expect(q, h)
    lhs = inner_product(hc, hc, q)
    rhs = inner_product(g_par, g_par, q) + inner_product(g_perp, g_perp, q)
    assert lhs == pytest.approx(rhs, abs=1e-10)
    assert inner_product(g_par, g_perp, q) == pytest.approx(0.0, abs=1e-10)


def test_anova_gaussian_rejects_boxtail():
    q = GaussianMeasure(np.zeros(2), np.eye(2))
    with pytest.raises(UnsupportedPair):
        anova_decompose(BoxTail((1.0, 1.0)), q, BlockStructure.fully_factorized(2))


def test_orthogonality_gaussian_closed_form():
    post, fit = _pair_fit(0.5)
    res = residual(fit, post)
    val = orthogonality_report(res, score_basis(fit), fit.qstar, seed=123)
    assert val <= 1e-8


def test_orthogonality_cavi_grid():
    post = GaussianMeasure(np.zeros(2), np.array([[1.0, 0.5], [0.5, 1.0]]))
    grid = discretize_gaussian(post, points=81)
    fit = fit_meanfield_cavi(grid, BlockStructure.fully_factorized(2), tol=1e-10)
    res = residual(fit, grid)
    val = orthogonality_report(res, score_basis(fit), fit.qstar, seed=123)
    assert val <= 1e-6


def test_orthogonality_is_seed_deterministic():
    post, fit = _pair_fit(0.2)
    res = residual(fit, post)
    basis = score_basis(fit)
    a = orthogonality_report(res, basis, fit.qstar, seed=77)
    b = orthogonality_report(res, basis, fit.qstar, seed=77)
    assert a == b


def test_anova_two_block_structure():
    rng = np.random.default_rng(3)
    blocks = BlockStructure.two_block(3, 2)
    cov = np.zeros((3, 3))
    a = rng.standard_normal((2, 2)) * 0.3
    cov[:2, :2] = a @ a.T + np.eye(2)
    cov[2, 2] = 1.5
    q = GaussianMeasure(np.zeros(3), cov)
    h = Polynomial.from_terms(3, [(1.0, [1, 1, 1]), (1.0, [2, 0, 0]), (1.0, [0, 0, 2])])
    dec = anova_decompose(h, q, blocks)
    # within-block product x0*x1 is a main effect, the triple is interaction
    assert (1, 1, 1) in dec.interaction.terms
    recon = Polynomial.constant(3, dec.mean)
    for c in dec.block_components:
        recon = recon + c
    recon = recon + dec.interaction
    diff = recon - h
    assert all(abs(v) <= 1e-12 for v in diff.terms.values())
