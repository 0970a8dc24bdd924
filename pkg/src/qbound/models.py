"""Built-in parametric paths and their JSON configuration."""
from __future__ import annotations

import math
from typing import Any, Callable, Mapping

import numpy as np

from .bounds import ParametricPath
from .distributions import Exponential, Gaussian
from .errors import ConfigError

PSI_FUNCTIONS: dict[str, Callable[[float], float]] = {
    "identity": lambda t: t,
    "exp": math.exp,
    "square": lambda t: t * t,
    "log": math.log,
}


def _psi(psi) -> Callable[[float], float]:
    if callable(psi):
        return psi
    try:
        return PSI_FUNCTIONS[psi]
    except KeyError:
        raise ConfigError(f"unknown psi {psi!r}; expected one of {sorted(PSI_FUNCTIONS)}") from None


def gaussian_mean_path(theta0: float = 0.0, variance: float = 1.0, psi="identity",
                       theta_range: tuple[float, float] = (-1.0, 3.0)) -> ParametricPath:
    """``theta -> N(theta, variance)``."""
    return ParametricPath(
        psi=_psi(psi),
        theta0=theta0,
        theta_range=theta_range,
        measure_at=lambda t: Gaussian(t, variance),
        name="gaussian_mean",
    )


def exponential_rate_path(theta0: float = 1.0, psi="identity",
                          theta_range: tuple[float, float] = (0.5, 3.0)) -> ParametricPath:
    """``theta -> Exponential(rate=theta)``; requires ``theta_range`` inside ``(0, inf)``."""
    if theta_range[0] <= 0:
        raise ConfigError("exponential rates must be positive")
    return ParametricPath(
        psi=_psi(psi),
        theta0=theta0,
        theta_range=theta_range,
        measure_at=Exponential,
        name="exponential_rate",
    )


def example1_path(theta_range=(-1.0, 3.0)) -> ParametricPath:
    """Gaussian location model estimating ``exp(theta)`` at ``theta0 = 0``."""
    return gaussian_mean_path(0.0, 1.0, "exp", theta_range)


def example2_path(theta_range=(0.5, 3.0)) -> ParametricPath:
    """Exponential rate model estimating the rate at ``theta0 = 1``."""
    return exponential_rate_path(1.0, "identity", theta_range)


def example1_h(n: int, theta):
    """Closed form of ``H_n`` along :func:`example1_path`."""
    theta = np.asarray(theta, dtype=float)
    return n * np.expm1(theta) ** 2 / np.expm1(n * theta**2)


def example2_h(n: int, theta):
    """Closed form of ``H_n`` along :func:`example2_path` (zero for ``theta <= 1/2``)."""
    theta = np.asarray(theta, dtype=float)
    with np.errstate(all="ignore"):
        q = 2 * theta - 1
        out = n * (theta - 1) ** 2 * q**n / (theta ** (2 * n) - q**n)
    return np.where(theta > 0.5, out, 0.0)


_PATHS = {
    "gaussian_mean": ({"theta0", "variance", "psi"}, gaussian_mean_path, (-1.0, 3.0)),
    "exponential_rate": ({"theta0", "psi"}, exponential_rate_path, (0.5, 3.0)),
}


def path_from_config(config: Mapping[str, Any], theta_range: tuple[float, float] | None = None):
    """Build a path from e.g. ``{"path": "gaussian_mean", "theta0": 0, "psi": "exp"}``."""
    if not isinstance(config, Mapping):
        raise ConfigError("model config must be a JSON object")
    kind = config.get("path")
    if kind not in _PATHS:
        raise ConfigError(f"unknown path {kind!r}; expected one of {sorted(_PATHS)}")
    allowed, build, default_range = _PATHS[kind]
    extra = set(config) - allowed - {"path"}
    if extra:
        raise ConfigError(f"unknown fields for {kind}: {sorted(extra)}")
    kwargs = {k: config[k] for k in allowed if k in config}
    if "psi" in kwargs and not isinstance(kwargs["psi"], str):
        raise ConfigError("psi must be a name")
    try:
        return build(theta_range=theta_range or default_range, **kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def default_range(kind: str) -> tuple[float, float] | None:
    entry = _PATHS.get(kind)
    return entry[2] if entry else None
