"""Tangent space of the variational family at the fit: scores, projections,
and the ANOVA (Hoeffding) split into block-additive and interaction parts."""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import wick
from .blocks import BlockStructure
from .errors import NotConverged, NotProductMeasure, UnsupportedPair
from .fit import MeanFieldFit, ResidualFunctional
from .functional import (
    BoxTail,
    FunctionalSpec,
    GridTable,
    Polynomial,
    evaluate_on_axes,
)
from .measures import (
    PRODUCT_TOL,
    GaussianMeasure,
    GridMeasure,
    Measure,
    conditional_expectation,
    expect,
    inner_product,
    marginal,
)


@dataclass(frozen=True)
class ScoreBasis:
    """Centered score functions of the fitted family, one block each."""

    scores: tuple[FunctionalSpec, ...]
    block_index: tuple[int, ...]
    family: str  # "gaussian-meanfield" | "grid-product"
    blocks: BlockStructure


@dataclass(frozen=True)
class AnovaDecomposition:
    """mean + per-block main effects + interaction remainder of a functional."""

    mean: float
    block_components: tuple[FunctionalSpec, ...]
    interaction: FunctionalSpec
    blocks: BlockStructure

    def to_json_dict(self) -> dict:
        return {
            "mean": self.mean,
            "block_components": [c.to_json_dict() for c in self.block_components],
            "interaction": self.interaction.to_json_dict(),
            "blocks": self.blocks.to_json_dict(),
        }


def score_basis(fit: MeanFieldFit) -> ScoreBasis:
    """Scores of the fitted family at the optimum, centered under q*.

    Gaussian mean-field: per block, centered first- and second-degree
    monomials of the block coordinates (mean and covariance directions).
    Grid product: per block, centered node indicators of the block factor,
    dropping one node for the sum constraint.
    """
    if not fit.converged:
        raise NotConverged("score basis requires a converged fit")
    q = fit.qstar
    blocks = fit.blocks
    scores: list[FunctionalSpec] = []
    owner: list[int] = []
    if isinstance(q, GaussianMeasure):
        _check_gaussian_product(q, blocks)
        d = q.dims
        m = q.mean
        V = q.covariance
        for bi, b in enumerate(blocks.blocks):
            for i in b:
                scores.append(Polynomial.coordinate(d, i) - m[i])
                owner.append(bi)
            for i, j in itertools.combinations_with_replacement(b, 2):
                centered_i = Polynomial.coordinate(d, i) - m[i]
                centered_j = Polynomial.coordinate(d, j) - m[j]
                scores.append(centered_i * centered_j - float(V[i, j]))
                owner.append(bi)
        return ScoreBasis(tuple(scores), tuple(owner), "gaussian-meanfield", blocks)
    if isinstance(q, GridMeasure):
        _check_grid_product(q, blocks)
        for bi, b in enumerate(blocks.blocks):
            factor = marginal(q, b)
            probs = factor.masses
            flat = probs.ravel()
            for k in range(flat.size - 1):
                vals = -np.broadcast_to(flat[k], flat.shape).copy()
                vals[k] += 1.0
                scores.append(
                    GridTable(
                        dims=q.dims,
                        coords=tuple(b),
                        axes=factor.axes,
                        values=vals.reshape(probs.shape),
                    )
                )
                owner.append(bi)
        return ScoreBasis(tuple(scores), tuple(owner), "grid-product", blocks)
    raise UnsupportedPair(f"unsupported fitted measure type {type(q)!r}")


def _check_gaussian_product(q: GaussianMeasure, blocks: BlockStructure) -> None:
    V = q.covariance
    mask = np.zeros_like(V, dtype=bool)
    for b in blocks.blocks:
        mask[np.ix_(b, b)] = True
    off = np.where(mask, 0.0, V)
    if np.max(np.abs(off)) > PRODUCT_TOL:
        raise NotProductMeasure("Gaussian covariance is not block-diagonal")


def _check_grid_product(q: GridMeasure, blocks: BlockStructure) -> None:
    prod = np.ones(q.log_weights.shape)
    for b in blocks.blocks:
        mb = marginal(q, b)
        sh = [1] * q.dims
        for c in b:
            sh[c] = len(q.axes[c])
        prod = prod * mb.masses.reshape(sh)
    if np.max(np.abs(prod - q.masses)) > PRODUCT_TOL:
        raise NotProductMeasure("grid measure does not factorize across blocks")


def _partial_expectation_polynomial(
    h: Polynomial, q: GaussianMeasure, block: tuple[int, ...]
) -> Polynomial:
    """E[h | theta_block] under a block-diagonal Gaussian, as a polynomial."""
    rest = tuple(i for i in range(q.dims) if i not in block)
    if not rest:
        return h
    sub_mean = q.mean[list(rest)]
    sub_cov = q.covariance[np.ix_(rest, rest)]
    terms: list[tuple[float, list[int]]] = []
    for e, c in h.terms.items():
        rest_exp = tuple(e[i] for i in rest)
        factor = wick.monomial_moment(sub_mean, sub_cov, rest_exp)
        kept = [e[i] if i in block else 0 for i in range(q.dims)]
        terms.append((c * factor, kept))
    return Polynomial.from_terms(q.dims, terms)


def anova_decompose(
    h: FunctionalSpec, qstar: Measure, blocks: BlockStructure
) -> AnovaDecomposition:
    """Hoeffding/ANOVA split of h under a product measure.

    mean = E[h]; block component b = E[h | theta_b] - mean; interaction is
    the pointwise remainder, which aggregates every non-additive order.
    """
    if isinstance(qstar, GaussianMeasure):
        if not isinstance(h, Polynomial):
            raise UnsupportedPair(
                "closed-form ANOVA under a Gaussian needs a polynomial; "
                "tabulate on a grid for indicators"
            )
        _check_gaussian_product(qstar, blocks)
        mean = expect(qstar, h)
        components = []
        additive_sum = Polynomial.constant(qstar.dims, mean)
        for b in blocks.blocks:
            comp = _partial_expectation_polynomial(h, qstar, b) - mean
            components.append(comp)
            additive_sum = additive_sum + comp
        interaction = h - additive_sum
        return AnovaDecomposition(mean, tuple(components), interaction, blocks)
    if isinstance(qstar, GridMeasure):
        _check_grid_product(qstar, blocks)
        mean = expect(qstar, h)
        hv = evaluate_on_axes(h, qstar.axes)
        components = []
        additive = np.full(hv.shape, mean)
        for b in blocks.blocks:
            table = conditional_expectation(h, qstar, b)
            comp = GridTable(
                dims=qstar.dims,
                coords=table.coords,
                axes=table.axes,
                values=table.values - mean,
            )
            components.append(comp)
            additive = additive + comp.broadcast(qstar.axes)
        interaction = GridTable(
            dims=qstar.dims,
            coords=tuple(range(qstar.dims)),
            axes=qstar.axes,
            values=hv - additive,
        )
        return AnovaDecomposition(mean, tuple(components), interaction, blocks)
    raise UnsupportedPair(f"unsupported measure type {type(qstar)!r}")


def tangent_project(
    h: FunctionalSpec, fit: MeanFieldFit
) -> tuple[FunctionalSpec, FunctionalSpec]:
    """Split h into its tangent-space part and orthogonal interaction part."""
    if not fit.converged:
        raise NotConverged("tangent projection requires a converged fit")
    dec = anova_decompose(h, fit.qstar, fit.blocks)
    if isinstance(dec.interaction, Polynomial):
        g_par = Polynomial.constant(dec.interaction.dims, dec.mean)
        for comp in dec.block_components:
            g_par = g_par + comp
        return g_par, dec.interaction
    q = fit.qstar
    additive = np.full(q.log_weights.shape, dec.mean)
    for comp in dec.block_components:
        additive = additive + comp.broadcast(q.axes)
    g_par = GridTable(
        dims=q.dims, coords=tuple(range(q.dims)), axes=q.axes, values=additive
    )
    return g_par, dec.interaction


def _random_block_additive(
    blocks: BlockStructure, dims: int, rng: np.random.Generator
) -> Polynomial:
    """Random degree-<=2 polynomial built blockwise (not yet centered)."""
    poly = Polynomial.zero(dims)
    for b in blocks.blocks:
        exps: list[tuple[int, ...]] = []
        for i in b:
            e = [0] * dims
            e[i] = 1
            exps.append(tuple(e))
        for i, j in itertools.combinations_with_replacement(b, 2):
            e = [0] * dims
            e[i] += 1
            e[j] += 1
            exps.append(tuple(e))
        coeffs = rng.standard_normal(len(exps))
        poly = poly + Polynomial(dims, dict(zip(exps, coeffs)))
    return poly


def orthogonality_report(
    delta: ResidualFunctional,
    basis: ScoreBasis,
    qstar: Measure,
    seed: int = 20240,
    n_probes: int = 10,
) -> float:
    """Worst |<f, residual>| over all scores and random block-additive probes."""
    worst = 0.0
    for s in basis.scores:
        worst = max(worst, abs(inner_product(s, delta.functional, qstar)))
    rng = np.random.default_rng(seed)
    dims = basis.blocks.dims
    for _ in range(n_probes):
        probe = _random_block_additive(basis.blocks, dims, rng)
        probe = probe - expect(qstar, probe)
        worst = max(worst, abs(inner_product(probe, delta.functional, qstar)))
    return worst
