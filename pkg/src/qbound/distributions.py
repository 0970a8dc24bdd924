"""Univariate distributions: densities, seeded sampling and integration.

Analytic families carry closed-form log-densities so that density ratios
can be formed in log space without underflow in the tails.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np

from .errors import ConfigError, UnsupportedOperationError
from .quadrature import DEFAULT_RULE, Interval, QuadratureRule, integrate

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def rng_for(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator keyed by ``(seed, stream)``.

    Distinct streams are statistically independent, so blocks of work can be
    generated in any order (or in parallel) and still reproduce exactly.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, stream])))


class DistributionSpec:
    """Base class of the supported distribution families."""

    support: Interval

    def logpdf(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def pdf(self, x: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.exp(self.logpdf(x))

    def draw(self, rng: np.random.Generator, count: int) -> np.ndarray:
        raise UnsupportedOperationError(f"{type(self).__name__} has no sampler")

    def landmarks(self) -> tuple[float, ...]:
        """Interior points where quadrature should split the support."""
        return ()

    def check_grid(self, size: int = 401) -> np.ndarray:
        """Points covering the bulk of the mass, for pointwise checks."""
        raise NotImplementedError

    def in_support(self, x: np.ndarray) -> np.ndarray:
        lo, hi = self.support
        return (x >= lo) & (x <= hi)


@dataclass(frozen=True)
class Gaussian(DistributionSpec):
    mean: float = 0.0
    variance: float = 1.0
    support: Interval = field(default=(-math.inf, math.inf), init=False)

    def __post_init__(self):
        if not (self.variance > 0 and math.isfinite(self.variance)):
            raise ValueError(f"variance must be positive, got {self.variance}")
        if not math.isfinite(self.mean):
            raise ValueError("mean must be finite")

    @property
    def sd(self) -> float:
        return math.sqrt(self.variance)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        z = (x - self.mean) / self.sd
        return -0.5 * z * z - _LOG_SQRT_2PI - 0.5 * math.log(self.variance)

    def draw(self, rng, count):
        return rng.normal(self.mean, self.sd, size=count)

    def landmarks(self):
        return tuple(self.mean + k * self.sd for k in (-8, -4, -2, 0, 2, 4, 8))

    def check_grid(self, size=401):
        return np.linspace(self.mean - 8 * self.sd, self.mean + 8 * self.sd, size)


@dataclass(frozen=True)
class Exponential(DistributionSpec):
    rate: float = 1.0
    support: Interval = field(default=(0.0, math.inf), init=False)

    def __post_init__(self):
        if not (self.rate > 0 and math.isfinite(self.rate)):
            raise ValueError(f"rate must be positive, got {self.rate}")

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(invalid="ignore"):
            out = math.log(self.rate) - self.rate * x
        return np.where(x >= 0.0, out, -np.inf)

    def draw(self, rng, count):
        return rng.exponential(1.0 / self.rate, size=count)

    def landmarks(self):
        return tuple(k / self.rate for k in (1, 4, 16, 64))

    def check_grid(self, size=401):
        return np.linspace(0.0, 40.0 / self.rate, size)


@dataclass(frozen=True, eq=False)
class CustomDensity(DistributionSpec):
    """A user-supplied Lebesgue density on an interval.

    Normalisation is checked by quadrature at construction. ``sampler``, if
    given, is called as ``sampler(rng, count)``.
    """

    density: Callable[[np.ndarray], np.ndarray]
    support: Interval
    sampler: Callable[[np.random.Generator, int], np.ndarray] | None = None
    breakpoints: tuple[float, ...] = ()
    normalization_tol: float = 1e-6
    rule: QuadratureRule = DEFAULT_RULE
    normalization_checked: bool = field(default=False, init=False)

    def __post_init__(self):
        lo, hi = self.support
        if not lo < hi:
            raise ValueError(f"empty support {self.support}")
        mass, _ = integrate(self.rule, self.pdf, self.support, self.breakpoints)
        if abs(mass - 1.0) > self.normalization_tol:
            raise ValueError(f"density integrates to {mass!r}, not 1")
        object.__setattr__(self, "normalization_checked", True)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = self.in_support(x)
        with np.errstate(all="ignore"):
            vals = np.broadcast_to(np.asarray(self.density(x), dtype=float), x.shape)
        if np.any(vals[inside] < 0):
            raise ValueError("custom density returned negative values")
        return np.where(inside, vals, 0.0)

    def logpdf(self, x):
        with np.errstate(divide="ignore"):
            return np.log(self.pdf(x))

    def draw(self, rng, count):
        if self.sampler is None:
            return super().draw(rng, count)
        return np.asarray(self.sampler(rng, count), dtype=float)

    def landmarks(self):
        return self.breakpoints

    def check_grid(self, size=401):
        lo, hi = self.support
        if math.isfinite(lo) and math.isfinite(hi):
            return np.linspace(lo, hi, size)
        t = np.linspace(-0.999, 0.999, size)
        if math.isinf(lo) and math.isinf(hi):
            return t / (1 - t * t)
        t = np.abs(t)
        return lo + t / (1 - t) if math.isfinite(lo) else hi - t / (1 - t)


def density(spec: DistributionSpec, x):
    """Lebesgue density of ``spec`` at ``x`` (zero off the support)."""
    out = spec.pdf(np.asarray(x, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def sample(spec: DistributionSpec, count: int, seed: int, stream: int = 0) -> np.ndarray:
    """Draw ``count`` i.i.d. values; identical ``(spec, count, seed, stream)`` give identical draws."""
    if count < 1:
        raise ValueError("count must be positive")
    return spec.draw(rng_for(seed, stream), count)


def expect(spec: DistributionSpec, g, rule: QuadratureRule = DEFAULT_RULE, points=()):
    """``E[g(X)]`` for ``X ~ spec`` by quadrature over the support."""
    def integrand(x):
        return np.asarray(g(x)) * spec.pdf(x)

    value, _ = integrate(rule, integrand, spec.support, (*spec.landmarks(), *points))
    return value


_FAMILY_FIELDS = {
    "gaussian": ({"mean", "variance"}, lambda c: Gaussian(float(c.get("mean", 0.0)),
                                                          float(c.get("variance", 1.0)))),
    "exponential": ({"rate"}, lambda c: Exponential(float(c.get("rate", 1.0)))),
}


def distribution_from_config(config: Mapping[str, Any]) -> DistributionSpec:
    """Build a spec from a JSON object such as ``{"family": "gaussian", "mean": 0, "variance": 1}``.

    Unknown fields are rejected.
    """
    if not isinstance(config, Mapping):
        raise ConfigError("distribution config must be a JSON object")
    family = config.get("family")
    if family not in _FAMILY_FIELDS:
        raise ConfigError(f"unknown family {family!r}; expected one of {sorted(_FAMILY_FIELDS)}")
    allowed, build = _FAMILY_FIELDS[family]
    extra = set(config) - allowed - {"family"}
    if extra:
        raise ConfigError(f"unknown fields for {family}: {sorted(extra)}")
    try:
        return build(config)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def distribution_to_config(spec: DistributionSpec) -> dict:
    if isinstance(spec, Gaussian):
        return {"family": "gaussian", "mean": spec.mean, "variance": spec.variance}
    if isinstance(spec, Exponential):
        return {"family": "exponential", "rate": spec.rate}
    raise ConfigError("custom densities are not expressible as config")
