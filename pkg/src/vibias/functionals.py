"""Ready-made posterior functionals with known additive/interaction splits."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .blocks import BlockStructure
from .errors import BlockOverlap, ZeroVector
from .functional import BoxTail, FunctionalSpec, Polynomial
from .measures import Measure, expect


@dataclass(frozen=True)
class CrossCovFunctional:
    """Product functional u(X)v(Y) with its analytic interaction part."""

    h: Polynomial
    interaction: Polynomial  # (u - E u)(v - E v) under the supplied q*


def cross_cov_functional(
    u: Polynomial, v: Polynomial, qstar: Measure, blocks: BlockStructure
) -> CrossCovFunctional:
    """Build h = u(X) v(Y) for functionals of two distinct blocks.

    The attached interaction component is the centered product, which is the
    exact ANOVA interaction of h under any product measure.
    """
    bu = {blocks.block_of(i) for i in u.support_coords()}
    bv = {blocks.block_of(i) for i in v.support_coords()}
    if bu & bv:
        raise BlockOverlap(f"u and v share blocks {sorted(bu & bv)}")
    if len(bu) > 1 or len(bv) > 1:
        raise BlockOverlap("u and v must each depend on a single block")
    h = u * v
    interaction = (u - expect(qstar, u)) * (v - expect(qstar, v))
    return CrossCovFunctional(h=h, interaction=interaction)


@dataclass(frozen=True)
class ContrastVariance:
    """Squared linear contrast with its exact additive/interaction split."""

    h: Polynomial
    additive_part: Polynomial
    interaction_part: Polynomial


def linear_contrast_variance(a: Sequence[float]) -> ContrastVariance:
    """h = (a^T theta)^2 split into sum a_i^2 theta_i^2 plus cross terms."""
    a = np.asarray(a, dtype=float)
    if not np.any(a != 0.0):
        raise ZeroVector("contrast vector is zero")
    d = len(a)
    additive_terms = []
    cross_terms = []
    for i in range(d):
        if a[i] != 0.0:
            e = [0] * d
            e[i] = 2
            additive_terms.append((float(a[i] ** 2), e))
        for j in range(i + 1, d):
            c = 2.0 * a[i] * a[j]
            if c != 0.0:
                e = [0] * d
                e[i] = 1
                e[j] = 1
                cross_terms.append((float(c), e))
    additive = Polynomial.from_terms(d, additive_terms)
    interaction = Polynomial.from_terms(d, cross_terms)
    return ContrastVariance(
        h=additive + interaction,
        additive_part=additive,
        interaction_part=interaction,
    )


def joint_tail_indicator(thresholds: Sequence[Optional[float]]) -> BoxTail:
    """Indicator of joint exceedance 1{theta_i > t_i for every set t_i}."""
    return BoxTail(tuple(thresholds))


def polynomial(
    terms: Sequence[tuple[float, Sequence[int]]], dims: Optional[int] = None
) -> Polynomial:
    """Canonical polynomial from (coefficient, exponent-vector) pairs."""
    if dims is None:
        if not terms:
            raise ZeroVector("empty polynomial needs explicit dims")
        dims = len(terms[0][1])
    return Polynomial.from_terms(dims, terms)
