"""Exception types raised across the package.

Domain errors (bad models, degenerate bounds) derive from ``QBoundError``;
the CLI maps them to exit status 1. ``ConfigError`` maps to exit status 2.
"""


class QBoundError(Exception):
    """Base class for domain errors."""


class ConfigError(QBoundError):
    """Malformed or inconsistent run configuration."""


class UnsupportedOperationError(QBoundError):
    pass


class UnsupportedPairError(QBoundError):
    """No analytic divergence formula exists for this pair of families."""


class DivergentIntegralError(QBoundError):
    """Adaptive quadrature failed to converge or detected unbounded growth."""


class InfiniteBoundError(QBoundError):
    """Distinct parameter values at zero divergence: the bound is infinite."""


class NonRegularModelError(QBoundError):
    pass


class DegenerateModelError(QBoundError):
    pass


class NonDifferentiablePathError(QBoundError):
    pass


class DiscontinuousParameterError(QBoundError):
    pass


class DegenerateEstimandError(QBoundError):
    """The estimand lies in the span of the constraint functions."""


class IllPosedConstraintError(QBoundError):
    pass


class NonIdentifiedError(QBoundError):
    pass
