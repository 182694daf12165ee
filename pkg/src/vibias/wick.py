"""Exact Gaussian moments of monomials and polynomials.

Moments are computed by the Stein/Isserlis recursion

    E[theta_i f(theta)] = mu_i E[f] + sum_j Sigma_ij E[d_j f],

applied to monomials and memoized on the exponent vector. This is exact for
any mean and covariance and scales comfortably to the low dimensions and
degrees used here (d <= ~6, degree <= ~10).
"""
from __future__ import annotations

import numpy as np

from .functional import Exponents, Polynomial


def monomial_moment(mean: np.ndarray, cov: np.ndarray, exponents: Exponents) -> float:
    """E[prod_i theta_i^{e_i}] under N(mean, cov)."""
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    memo: dict[Exponents, float] = {}

    def rec(e: Exponents) -> float:
        if all(x == 0 for x in e):
            return 1.0
        hit = memo.get(e)
        if hit is not None:
            return hit
        i = next(k for k, x in enumerate(e) if x > 0)
        e1 = list(e)
        e1[i] -= 1
        base = tuple(e1)
        val = mean[i] * rec(base)
        for j in range(len(e)):
            if e1[j] > 0 and cov[i, j] != 0.0:
                e2 = list(e1)
                kj = e2[j]
                e2[j] -= 1
                val += cov[i, j] * kj * rec(tuple(e2))
        memo[e] = val
        return val

    return rec(tuple(int(x) for x in exponents))


def polynomial_moment(mean: np.ndarray, cov: np.ndarray, poly: Polynomial) -> float:
    """E[poly(theta)] under N(mean, cov), exact."""
    return float(
        sum(c * monomial_moment(mean, cov, e) for e, c in poly.terms.items())
    )
