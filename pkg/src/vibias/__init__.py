"""Diagnostics for mean-field variational approximations.

Fits KL projections onto block-product families, splits posterior
functionals into block-additive and interaction parts, and checks the
first-order bias identities against exact grid and moment oracles.
"""

from .bias import (
    BiasReport,
    ScalingStudy,
    bias_report,
    convex_functional_bias,
    gaussian_pair_family,
    remainder_bound_check,
    rho_rem,
    scaling_study,
)
from .blocks import BlockStructure
from .errors import VibiasError
from .fit import (
    MeanFieldFit,
    ResidualFunctional,
    fit_meanfield_cavi,
    fit_meanfield_gaussian,
    residual,
    stationarity_check,
)
from .functional import (
    BoxTail,
    GridTable,
    Polynomial,
    parse_functional,
    serialize_functional,
)
from .functionals import (
    cross_cov_functional,
    joint_tail_indicator,
    linear_contrast_variance,
    polynomial,
)
from .lan import (
    LanExperiment,
    LanSweepResult,
    TangentAudit,
    hessian_at,
    make_lan_experiment,
    predict_bias,
    run_sweep,
    tangent_functional_audit,
)
from .measures import (
    GaussianMeasure,
    GridMeasure,
    discretize_gaussian,
    expect,
    gaussian_boxtail_quadrature,
    inner_product,
    kl_divergence,
    l2_norm,
    marginal,
    normalize,
)
from .suite import run_suite, write_suite_outputs
from .tangent import (
    AnovaDecomposition,
    ScoreBasis,
    anova_decompose,
    orthogonality_report,
    score_basis,
    tangent_project,
)
from .wick import monomial_moment, polynomial_moment

__version__ = "0.1.0"

__all__ = [
    "AnovaDecomposition",
    "BiasReport",
    "BlockStructure",
    "BoxTail",
    "GaussianMeasure",
    "GridMeasure",
    "GridTable",
    "LanExperiment",
    "LanSweepResult",
    "MeanFieldFit",
    "Polynomial",
    "ResidualFunctional",
    "ScalingStudy",
    "ScoreBasis",
    "TangentAudit",
    "VibiasError",
    "anova_decompose",
    "bias_report",
    "convex_functional_bias",
    "cross_cov_functional",
    "discretize_gaussian",
    "expect",
    "fit_meanfield_cavi",
    "fit_meanfield_gaussian",
    "gaussian_boxtail_quadrature",
    "gaussian_pair_family",
    "hessian_at",
    "inner_product",
    "joint_tail_indicator",
    "kl_divergence",
    "l2_norm",
    "linear_contrast_variance",
    "make_lan_experiment",
    "marginal",
    "monomial_moment",
    "normalize",
    "orthogonality_report",
    "parse_functional",
    "polynomial",
    "polynomial_moment",
    "predict_bias",
    "remainder_bound_check",
    "residual",
    "rho_rem",
    "run_suite",
    "run_sweep",
    "scaling_study",
    "score_basis",
    "serialize_functional",
    "stationarity_check",
    "tangent_functional_audit",
    "tangent_project",
    "write_suite_outputs",
]
