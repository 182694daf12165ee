"""Canonical experiment setups used by the CLI and the acceptance battery."""
from __future__ import annotations

import numpy as np

from .blocks import BlockStructure
from .lan import LanExperiment, make_lan_experiment
from .measures import GaussianMeasure, GridMeasure, normalize


def gaussian2d(rho: float) -> tuple[GaussianMeasure, BlockStructure]:
    """Bivariate unit-variance Gaussian with correlation rho, singleton blocks."""
    post = GaussianMeasure(np.zeros(2), np.array([[1.0, rho], [rho, 1.0]]))
    return post, BlockStructure.fully_factorized(2)


def gaussian3(
    sigma: np.ndarray, mean=None, blocks: BlockStructure | None = None
) -> tuple[GaussianMeasure, BlockStructure]:
    """Trivariate Gaussian from an explicit covariance matrix."""
    sigma = np.asarray(sigma, dtype=float)
    d = sigma.shape[0]
    if mean is None:
        mean = np.zeros(d)
    if blocks is None:
        blocks = BlockStructure.fully_factorized(d)
    return GaussianMeasure(np.asarray(mean, float), sigma), blocks


def grid_bimodal(points: int = 41, extent: float = 3.0) -> tuple[GridMeasure, BlockStructure]:
    """Two-mode grid density proportional to exp(-(x^2-1)^2 - (y-x)^2)."""
    ax = np.linspace(-extent, extent, points)
    x = ax[:, None]
    y = ax[None, :]
    logw = -((x**2 - 1.0) ** 2) - (y - x) ** 2
    post = normalize(GridMeasure((ax, ax), logw))
    return post, BlockStructure.fully_factorized(2)


def lan_default(
    rho: float = 0.3, n_grid=(10, 100, 1000), mu=(0.0, 0.0)
) -> LanExperiment:
    """Default local-asymptotics experiment: rho-correlated pair, singleton blocks."""
    sigma = np.array([[1.0, rho], [rho, 1.0]])
    return make_lan_experiment(mu, sigma, BlockStructure.fully_factorized(2), n_grid)
