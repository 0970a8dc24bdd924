"""Closed-form quadratic projections onto affine moment-constraint sets.

Two model types are covered:

* linear mode: ``P = {nu : E_nu[phi] = 0}`` with estimand ``E_nu[h]``;
  the level sets ``{f : E[phi f] = 0, E[h f] = theta}`` are affine in
  ``L2(mu)`` and the projection of ``1`` onto them is explicit;
* estimating-equation mode: ``theta`` is defined by ``E_mu[phi_theta] = 0``
  and the level sets are ``{f : E[phi_theta f] = 0}``.

Both produce a projection path whose divergence is known in closed form,
which plugs into :func:`qbound.bounds.optimize_bound`.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable, Mapping

import numpy as np
from scipy import linalg

from .bounds import ParametricPath, optimize_bound
from .distributions import DistributionSpec, distribution_from_config
from .errors import (
    ConfigError,
    DegenerateEstimandError,
    IllPosedConstraintError,
    NonIdentifiedError,
)
from .quadrature import DEFAULT_RULE, QuadratureRule, integrate

log = logging.getLogger(__name__)

MAX_CONDITION = 1e12
RESIDUAL_TOL = 1e-6


def _rows(values, size: int) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.ndim < 2:
        values = values.reshape(1, -1)
    return np.broadcast_to(values, (values.shape[0], size))


def _solve_spd(a: np.ndarray, b: np.ndarray, error: type[Exception], what: str) -> np.ndarray:
    a = 0.5 * (a + a.T)
    try:
        cond = np.linalg.cond(a)
        if not cond <= MAX_CONDITION:
            raise error(f"{what} is singular or ill-conditioned (condition number {cond:.3g})")
        return linalg.cho_solve(linalg.cho_factor(a), b)
    except linalg.LinAlgError as exc:
        raise error(f"{what} is not positive definite") from exc


@dataclass(frozen=True, eq=False)
class MomentModel:
    """Moment-constraint model around a base distribution ``mu``.

    Give ``phi`` and ``h`` for linear mode, or ``phi_theta`` and ``theta0``
    for estimating-equation mode. Vector-valued maps return arrays of shape
    ``(k, len(x))``.
    """

    base: DistributionSpec
    phi: Callable[[np.ndarray], np.ndarray] | None = None
    h: Callable[[np.ndarray], np.ndarray] | None = None
    phi_theta: Callable[[float, np.ndarray], np.ndarray] | None = None
    theta0: float | None = None
    rule: QuadratureRule = DEFAULT_RULE
    moment_tol: float = 1e-8
    gram: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        if self.phi_theta is not None:
            if self.phi is not None or self.h is not None:
                raise ValueError("give either (phi, h) or phi_theta, not both")
            if self.theta0 is None:
                raise ValueError("estimating-equation mode needs theta0")
            mean, _ = self.moments_at(self.theta0)
            if np.max(np.abs(mean)) > self.moment_tol:
                raise ValueError(f"E[phi_theta0] = {mean} is not zero under the base measure")
            return
        if self.phi is None or self.h is None:
            raise ValueError("linear mode needs both phi and h")
        gram = self._linear_gram()
        if np.max(np.abs(gram["mean_phi"])) > self.moment_tol:
            raise ValueError(f"E[phi] = {gram['mean_phi']} is not zero under the base measure")
        if self.theta0 is not None and abs(self.theta0 - gram["mean_h"]) > self.moment_tol:
            raise ValueError("theta0 differs from E[h] under the base measure")
        object.__setattr__(self, "theta0", gram["mean_h"])
        self.gram.update(gram)

    @property
    def mode(self) -> str:
        return "el" if self.phi_theta is not None else "linear"

    def _expect(self, g):
        def integrand(x):
            return g(x) * self.base.pdf(x)

        value, _ = integrate(self.rule, integrand, self.base.support, self.base.landmarks())
        return np.atleast_1d(value)

    def _linear_gram(self) -> dict:
        def stacked(x):
            p = _rows(self.phi(x), x.size)
            hx = np.asarray(self.h(x), dtype=float)
            k = p.shape[0]
            outer = (p[:, None, :] * p[None, :, :]).reshape(k * k, -1)
            return np.vstack([p, outer, hx * p, hx[None, :]])

        k = _rows(self.phi(np.zeros(1)), 1).shape[0]
        v = self._expect(stacked)
        gram_phi = v[k:k + k * k].reshape(k, k)
        _solve_spd(gram_phi, np.zeros(k), ValueError, "E[phi phi^T]")
        return {
            "k": k,
            "mean_phi": v[:k],
            "gram_phi": gram_phi,
            "cross_h_phi": v[k + k * k:2 * k + k * k],
            "mean_h": float(v[-1]),
        }

    def moments_at(self, theta: float) -> tuple[np.ndarray, np.ndarray]:
        """``(E[phi_theta], E[phi_theta phi_theta^T])`` under the base measure."""

        def stacked(x):
            p = _rows(self.phi_theta(theta, x), x.size)
            k = p.shape[0]
            return np.vstack([p, (p[:, None, :] * p[None, :, :]).reshape(k * k, -1)])

        k = _rows(self.phi_theta(theta, np.zeros(1)), 1).shape[0]
        v = self._expect(stacked)
        return v[:k], v[k:].reshape(k, k)

    @cached_property
    def orthogonal(self) -> "OrthogonalPart":
        if self.mode != "linear":
            raise ValueError("orthogonal part is defined in linear mode only")
        g = self.gram
        coef = _solve_spd(g["gram_phi"], g["cross_h_phi"], ValueError, "E[phi phi^T]")
        mean = g["mean_h"] - float(coef @ g["mean_phi"])

        def h_perp(x):
            x = np.asarray(x, dtype=float)
            return np.asarray(self.h(x), dtype=float) - coef @ _rows(self.phi(x), x.size)

        scale = float(self._expect(lambda x: np.asarray(self.h(x), dtype=float) ** 2)[0])
        variance = float(self._expect(lambda x: (h_perp(x) - mean) ** 2)[0])
        if variance <= 1e-10 * (1.0 + scale):
            raise DegenerateEstimandError("h lies in the span of the constraint functions")
        return OrthogonalPart(h_perp, variance, coef, mean)


@dataclass(frozen=True)
class OrthogonalPart:
    function: Callable[[np.ndarray], np.ndarray]
    variance: float
    coefficients: np.ndarray
    mean: float


def orthogonal_part(model: MomentModel) -> OrthogonalPart:
    """Residual of ``h`` after removing its ``L2(mu)`` projection on span(phi), and its variance."""
    return model.orthogonal


@dataclass
class ProjectionResult:
    theta: float
    density: Callable[[np.ndarray], np.ndarray]
    divergence: float
    is_valid_density: bool
    check_residuals: dict[str, float]

    @property
    def max_residual(self) -> float:
        return max(abs(v) for v in self.check_residuals.values())

    def to_dict(self) -> dict:
        return {
            "theta": self.theta,
            "divergence": self.divergence,
            "valid_density": self.is_valid_density,
            "check_residuals": self.check_residuals,
        }


def _finish(model, theta, density, divergence, constraint, names):
    """Residuals of the projection's postconditions, computed by quadrature.

    ``constraint(x)`` stacks functions whose integral against ``f mu`` must vanish.
    """

    def stacked(x):
        f = density(x)
        c = _rows(constraint(x), x.size)
        return np.vstack([f, c * f, (1.0 - f) ** 2])

    v = model._expect(stacked)
    residuals = {"mass": float(v[0] - 1.0)}
    residuals.update((name, float(c)) for name, c in zip(names, v[1:-1]))
    residuals["divergence"] = float(v[-1] - divergence)
    valid = bool(np.all(density(model.base.check_grid()) >= 0))
    result = ProjectionResult(theta, density, divergence, valid, residuals)
    if result.max_residual > RESIDUAL_TOL:
        log.warning("projection at theta=%g: residual %.3g exceeds %g", theta,
                    result.max_residual, RESIDUAL_TOL)
    return result


def linear_projection_density(model: MomentModel, theta: float):
    part = orthogonal_part(model)
    slope = (model.theta0 - theta) / part.variance

    def density(x):
        x = np.asarray(x, dtype=float)
        out = 1.0 - slope * (part.function(x.ravel()) - part.mean)
        return out.reshape(x.shape)

    return density


def q_projection_linear(model: MomentModel, theta: float) -> ProjectionResult:
    """Projection of ``mu`` onto ``{f : E[phi f] = 0, E[h f] = theta}``.

    The density is ``1 - (theta0 - theta) / V * (h_perp - E[h_perp])`` and
    the divergence ``(theta0 - theta)**2 / V``.
    """
    part = orthogonal_part(model)
    density = linear_projection_density(model, theta)
    divergence = (model.theta0 - theta) ** 2 / part.variance

    def constraint(x):
        p = _rows(model.phi(x), x.size)
        hx = np.asarray(model.h(x), dtype=float)
        return np.vstack([p, hx - theta])

    names = [f"phi_{j}" for j in range(model.gram["k"])] + ["estimand"]
    return _finish(model, theta, density, divergence, constraint, names)


def semiparametric_bound(model: MomentModel, n: int = 1) -> float:
    """Efficiency bound of the moment-condition model: ``var(h_perp)`` for every ``n``.

    The supremum over the projection path is the limit at ``theta0``; see
    :func:`numerical_semiparametric_bound` for the value found by search.
    """
    if n < 1:
        raise ValueError("n must be a positive integer")
    return orthogonal_part(model).variance


def projection_path(model: MomentModel, theta_range: tuple[float, float] | None = None) -> ParametricPath:
    """The path ``theta -> f_theta mu`` of projections, parameterised by the estimand."""
    part = orthogonal_part(model)
    t0 = model.theta0
    if theta_range is None:
        w = 4.0 * math.sqrt(part.variance)
        theta_range = (t0 - w, t0 + w)
    return ParametricPath(
        psi=lambda t: t,
        theta0=t0,
        theta_range=theta_range,
        base=model.base,
        density_ratio=lambda t, x: linear_projection_density(model, t)(x),
        divergence_at=lambda t: (t0 - t) ** 2 / part.variance,
        name="moment_projection",
    )


def numerical_semiparametric_bound(model: MomentModel, n: int, grid_size: int = 512, **kwargs):
    """Search-based supremum over the projection path, as a :class:`BoundReport`."""
    return optimize_bound(projection_path(model), n, grid_size, **kwargs)


def _el_parts(model: MomentModel, theta: float):
    mean, second = model.moments_at(theta)
    cov = second - np.outer(mean, mean)
    weights = _solve_spd(cov, mean, IllPosedConstraintError, "var(phi_theta)")
    return mean, weights, float(mean @ weights)


def el_divergence(model: MomentModel, theta: float) -> float:
    """``E[phi_theta]^T var(phi_theta)^-1 E[phi_theta]``."""
    return _el_parts(model, theta)[2]


def el_projection(model: MomentModel, theta: float) -> ProjectionResult:
    """Projection of ``mu`` onto ``{f : E[phi_theta f] = 0}``."""
    if model.mode != "el":
        raise ValueError("el_projection needs an estimating-equation model")
    mean, weights, divergence = _el_parts(model, theta)

    def density(x):
        x = np.asarray(x, dtype=float)
        p = _rows(model.phi_theta(theta, x.ravel()), x.size)
        return (1.0 - weights @ (p - mean[:, None])).reshape(x.shape)

    names = [f"phi_{j}" for j in range(len(mean))]
    return _finish(model, theta, density, divergence,
                   lambda x: model.phi_theta(theta, x), names)


def el_path(model: MomentModel, theta_range: tuple[float, float]) -> ParametricPath:
    cache: dict[float, tuple] = {}

    def parts(t):
        if t not in cache:
            cache[t] = _el_parts(model, t)
        return cache[t]

    def ratio(t, x):
        mean, weights, _ = parts(t)
        p = _rows(model.phi_theta(t, x), np.size(x))
        return 1.0 - weights @ (p - mean[:, None])

    return ParametricPath(
        psi=lambda t: t,
        theta0=model.theta0,
        theta_range=theta_range,
        base=model.base,
        density_ratio=ratio,
        divergence_at=lambda t: parts(float(t))[2],
        name="el_projection",
    )


def el_asymptotic_bound(model: MomentModel) -> float:
    """Limit of the bound along the estimating-equation path: ``(D^T Omega^-1 D)^-1``.

    ``D`` is the expected derivative of ``phi_theta`` at ``theta0`` (central
    differences) and ``Omega`` its second-moment matrix.
    """
    if model.mode != "el":
        raise ValueError("el_asymptotic_bound needs an estimating-equation model")
    t0 = model.theta0
    step = max(1e-5, 1e-5 * abs(t0))
    deriv = (model.moments_at(t0 + step)[0] - model.moments_at(t0 - step)[0]) / (2.0 * step)
    _, omega = model.moments_at(t0)
    inner = float(deriv @ _solve_spd(omega, deriv, NonIdentifiedError, "E[phi phi^T]"))
    if not inner > 1e-14:
        raise NonIdentifiedError("expected derivative of the constraints vanishes")
    return 1.0 / inner


# ---------------------------------------------------------------------------
# JSON configuration: polynomials of degree <= 4

_MONOMIALS = {"1": 0, "x": 1, "x2": 2, "x3": 3, "x4": 4}


def _poly(spec) -> np.ndarray:
    if isinstance(spec, str):
        if spec not in _MONOMIALS:
            raise ConfigError(f"unknown monomial {spec!r}; expected one of {sorted(_MONOMIALS)}")
        c = np.zeros(_MONOMIALS[spec] + 1)
        c[-1] = 1.0
        return c
    if isinstance(spec, list) and 1 <= len(spec) <= 5 and all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in spec):
        return np.asarray(spec, dtype=float)
    raise ConfigError(f"polynomial must be a monomial name or up to 5 coefficients, got {spec!r}")


def _polys(specs) -> list[np.ndarray]:
    if not isinstance(specs, list) or not specs:
        raise ConfigError("constraint list must be a non-empty JSON array")
    return [_poly(s) for s in specs]


def moment_model_from_config(config: Mapping[str, Any]) -> MomentModel:
    """Build a model from JSON.

    Linear mode: ``{"base": {...}, "phi": ["x"], "h": "x2"}``. Estimating
    equations: ``{"base": {...}, "phi_theta": [[0, 1]], "theta0": 0}`` where
    each coefficient list is a polynomial in ``x - theta``.
    """
    if not isinstance(config, Mapping):
        raise ConfigError("model config must be a JSON object")
    if "base" not in config:
        raise ConfigError("moment model needs a base distribution")
    base = distribution_from_config(config["base"])
    try:
        if "phi_theta" in config:
            extra = set(config) - {"base", "phi_theta", "theta0"}
            if extra:
                raise ConfigError(f"unknown fields: {sorted(extra)}")
            coeffs = _polys(config["phi_theta"])

            def phi_theta(theta, x):
                u = np.asarray(x, dtype=float) - theta
                return np.vstack([np.polynomial.polynomial.polyval(u, c) for c in coeffs])

            return MomentModel(base, phi_theta=phi_theta, theta0=float(config.get("theta0", 0.0)))
        extra = set(config) - {"base", "phi", "h"}
        if extra:
            raise ConfigError(f"unknown fields: {sorted(extra)}")
        if "phi" not in config or "h" not in config:
            raise ConfigError("linear moment model needs phi and h")
        coeffs = _polys(config["phi"])
        hc = _poly(config["h"])
        return MomentModel(
            base,
            phi=lambda x: np.vstack([np.polynomial.polynomial.polyval(x, c) for c in coeffs]),
            h=lambda x: np.polynomial.polynomial.polyval(x, hc),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
