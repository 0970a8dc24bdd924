"""Monte-Carlo checks of the variance inequality and the product-divergence law.

Replications are generated in fixed blocks, each from its own counter-based
stream keyed by ``(seed, block)``; results do not depend on how blocks are
scheduled across threads.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .bounds import h_functional
from .distributions import DistributionSpec, Gaussian, rng_for
from .divergence import q_divergence, tensorize
from .errors import ConfigError
from .quadrature import DEFAULT_RULE, QuadratureRule

BLOCK = 1024
SIGMAS = 4.0


@dataclass(frozen=True)
class EstimatorSpec:
    """``statistic`` maps an ``(R, n)`` array of samples to ``R`` estimates."""

    name: str
    statistic: Callable[[np.ndarray], np.ndarray]
    target: float
    analytic_variance: Callable[[int], float] | None = None


def mean_estimator(target: float = 0.0) -> EstimatorSpec:
    return EstimatorSpec("mean", lambda xs: xs.mean(axis=1), target,
                         analytic_variance=lambda n: 1.0 / n)


def exp_mean_corrected_estimator(theta0: float = 0.0, variance: float = 1.0) -> EstimatorSpec:
    """``exp(mean - variance / (2n))``, unbiased for ``exp(theta)`` under ``N(theta, variance)``."""

    def statistic(xs):
        n = xs.shape[1]
        return np.exp(xs.mean(axis=1) - variance / (2.0 * n))

    return EstimatorSpec(
        "exp-mean-corrected",
        statistic,
        math.exp(theta0),
        analytic_variance=lambda n: math.exp(2 * theta0) * math.expm1(variance / n),
    )


def estimator_by_name(name: str, mu: DistributionSpec) -> EstimatorSpec:
    if not isinstance(mu, Gaussian):
        raise ConfigError("built-in estimators assume a Gaussian model")
    if name == "mean":
        est = mean_estimator(mu.mean)
        return EstimatorSpec(est.name, est.statistic, est.target,
                             analytic_variance=lambda n: mu.variance / n)
    if name == "exp-mean-corrected":
        return exp_mean_corrected_estimator(mu.mean, mu.variance)
    raise ConfigError(f"unknown estimator {name!r}; expected 'mean' or 'exp-mean-corrected'")


def replicate_samples(mu: DistributionSpec, n: int, replications: int, seed: int,
                      threads: int = 1) -> np.ndarray:
    """``(replications, n)`` array of i.i.d. draws from ``mu``."""
    blocks = [(b, min(BLOCK, replications - b * BLOCK))
              for b in range(math.ceil(replications / BLOCK))]

    def make(block):
        b, size = block
        return mu.draw(rng_for(seed, b + 1), size * n).reshape(size, n)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(make, blocks))
    else:
        parts = [make(blk) for blk in blocks]
    return np.concatenate(parts, axis=0)


def variance_with_se(values: np.ndarray) -> tuple[float, float]:
    """Sample variance and its standard error from the fourth central moment."""
    r = values.size
    centred = values - values.mean()
    m2 = float(np.mean(centred**2))
    m4 = float(np.mean(centred**4))
    var = m2 * r / (r - 1)
    var_of_var = (m4 - m2 * m2 * (r - 3) / (r - 1)) / r
    return var, math.sqrt(max(var_of_var, 0.0))


@dataclass
class VerificationReport:
    estimator: str
    n: int
    replications: int
    mean: float
    mean_se: float
    empirical_variance: float
    variance_se: float
    bounds: list[float] = field(default_factory=list)
    margins: list[float] = field(default_factory=list)
    passed: bool = False
    aborted: bool = False
    reason: str = ""

    @property
    def n_var(self) -> float:
        return self.n * self.empirical_variance

    def to_dict(self) -> dict:
        return {
            "estimator": self.estimator,
            "n": self.n,
            "replications": self.replications,
            "mean": self.mean,
            "mean_se": self.mean_se,
            "empirical_variance": self.empirical_variance,
            "variance_se": self.variance_se,
            "bounds": self.bounds,
            "margins": self.margins,
            "pass": self.passed,
            "aborted": self.aborted,
            "reason": self.reason,
        }


def verify_bound(
    mu: DistributionSpec,
    estimator: EstimatorSpec,
    nu_list: Sequence[tuple[DistributionSpec, float]],
    n: int,
    replications: int = 10**5,
    seed: int = 0,
    rule: QuadratureRule = DEFAULT_RULE,
    threads: int = 1,
) -> VerificationReport:
    """Simulate ``T`` under ``mu`` and compare ``var(T)`` with the bound from each ``(nu, psi(nu))``."""
    if replications < 10**4:
        raise ValueError("need at least 10^4 replications")
    xs = replicate_samples(mu, n, replications, seed, threads)
    t = np.asarray(estimator.statistic(xs), dtype=float)
    var, var_se = variance_with_se(t)
    mean = float(t.mean())
    mean_se = math.sqrt(var / t.size)
    report = VerificationReport(estimator.name, n, replications, mean, mean_se, var, var_se)
    if abs(mean - estimator.target) > SIGMAS * mean_se:
        report.aborted = True
        report.reason = (f"unbiasedness gate failed: mean {mean:.6g} vs target "
                         f"{estimator.target:.6g} (SE {mean_se:.3g})")
        return report
    for nu, psi_nu in nu_list:
        d = q_divergence(mu, nu, rule=rule).value
        bound = h_functional(n, estimator.target, psi_nu, d) / n
        report.bounds.append(bound)
        report.margins.append(var - bound)
    report.passed = all(m >= -SIGMAS * var_se for m in report.margins)
    return report


@dataclass
class TensorizationReport:
    n: int
    replications: int
    estimate: float
    standard_error: float
    predicted: float
    passed: bool
    inconclusive: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def verify_tensorization(
    mu: DistributionSpec,
    nu: DistributionSpec,
    n: int,
    replications: int = 10**6,
    seed: int = 0,
    rule: QuadratureRule = DEFAULT_RULE,
    threads: int = 1,
) -> TensorizationReport:
    """Estimate ``E[(1 - prod f(X_i))**2]`` by simulation and compare with ``(d + 1)**n - 1``."""
    if not 1 <= n <= 5:
        raise ValueError("tensorisation check supports 1 <= n <= 5")
    d = q_divergence(mu, nu, rule=rule).value
    if math.isinf(d):
        raise ValueError("tensorisation check needs a finite divergence")
    predicted = tensorize(d, n)
    xs = replicate_samples(mu, n, replications, seed, threads)
    with np.errstate(over="ignore"):
        log_ratio = (nu.logpdf(xs) - mu.logpdf(xs)).sum(axis=1)
        terms = np.expm1(log_ratio) ** 2
    estimate = float(terms.mean())
    se = float(terms.std(ddof=1) / math.sqrt(terms.size))
    return TensorizationReport(
        n=n,
        replications=replications,
        estimate=estimate,
        standard_error=se,
        predicted=predicted,
        passed=abs(estimate - predicted) <= SIGMAS * se,
        inconclusive=se > 0.2 * predicted > 0,
    )
