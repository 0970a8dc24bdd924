"""Divergence-based variance lower bounds for unbiased estimators."""
from .bounds import (
    BoundReport,
    ParametricPath,
    asymptotic_sweep,
    bound_curve,
    continuity_extension,
    cramer_rao_bound,
    fisher_information,
    h_functional,
    optimize_bound,
)
from .distributions import (
    CustomDensity,
    DistributionSpec,
    Exponential,
    Gaussian,
    density,
    distribution_from_config,
    sample,
)
from .divergence import DivergenceEstimate, Method, q_divergence, q_divergence_asymmetry_check, tensorize
from .projection import (
    MomentModel,
    el_asymptotic_bound,
    el_projection,
    orthogonal_part,
    q_projection_linear,
    semiparametric_bound,
)
from .quadrature import QuadratureRule, integrate
from .verify import EstimatorSpec, verify_bound, verify_tensorization

__version__ = "0.1.0"
