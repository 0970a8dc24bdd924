"""Variance lower bounds along a one-parameter path of distributions.

For a path ``theta -> mu_theta`` through the true distribution ``mu`` at
``theta0`` and a scalar parameter ``psi``, the functional

    H_n(theta) = n * (psi(theta0) - psi(theta))**2 / ((d(mu, mu_theta) + 1)**n - 1)

bounds ``n * var(T)`` for every unbiased estimator ``T``. Its supremum over
the path is the efficiency bound; its limit at ``theta0`` is the
Cramer-Rao bound when the path is smooth.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .distributions import DistributionSpec
from .divergence import q_divergence, tensorize
from .errors import (
    DegenerateModelError,
    DiscontinuousParameterError,
    DivergentIntegralError,
    InfiniteBoundError,
    NonDifferentiablePathError,
    NonRegularModelError,
    QBoundError,
)
from .quadrature import DEFAULT_RULE, QuadratureRule, integrate

log = logging.getLogger(__name__)

LIMIT_AT_THETA0 = "limit-at-theta0"

FLAG_OK = "ok"
FLAG_INFINITE_D = "infinite_d"
FLAG_CONTINUITY = "continuity_extension"
FLAG_INFINITE_BOUND = "infinite_bound"


@dataclass(frozen=True, eq=False)
class ParametricPath:
    """A one-parameter family ``theta -> mu_theta`` with ``mu_theta0 = mu``.

    Either ``measure_at`` or both ``density_ratio`` and ``divergence_at``
    must be given. ``density_ratio(theta, x)`` is ``dmu_theta/dmu`` at ``x``
    and ``divergence_at(theta)`` is ``d(mu, mu_theta)``; when omitted they
    are derived from ``measure_at``. Paths whose members are not proper
    densities (signed L2 perturbations of ``mu``) are described by the
    ratio and divergence callables alone.
    """

    psi: Callable[[float], float]
    theta0: float
    theta_range: tuple[float, float]
    measure_at: Callable[[float], DistributionSpec] | None = None
    base: DistributionSpec | None = None
    density_ratio: Callable[[float, np.ndarray], np.ndarray] | None = None
    divergence_at: Callable[[float], float] | None = None
    name: str = "path"

    def __post_init__(self):
        lo, hi = self.theta_range
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise ValueError(f"theta_range must be a finite interval, got {self.theta_range}")
        if not lo <= self.theta0 <= hi:
            raise ValueError(f"theta0={self.theta0} lies outside {self.theta_range}")
        if self.measure_at is not None:
            at_truth = self.measure_at(self.theta0)
            if self.base is None:
                object.__setattr__(self, "base", at_truth)
            elif at_truth != self.base:
                raise ValueError("measure_at(theta0) differs from the base distribution")
        elif self.divergence_at is None or self.base is None:
            raise ValueError("need measure_at, or base together with divergence_at")

    @property
    def psi0(self) -> float:
        return float(self.psi(self.theta0))

    def divergence(self, theta: float, rule: QuadratureRule = DEFAULT_RULE) -> float:
        if self.divergence_at is not None:
            return float(self.divergence_at(theta))
        return q_divergence(self.base, self.measure_at(theta), rule=rule).value

    def ratio(self, theta: float, x: np.ndarray) -> np.ndarray:
        if self.density_ratio is not None:
            return np.asarray(self.density_ratio(theta, x), dtype=float)
        if self.measure_at is None:
            raise NonRegularModelError(f"{self.name}: no density ratio available")
        with np.errstate(over="ignore", invalid="ignore"):
            return np.exp(self.measure_at(theta).logpdf(x) - self.base.logpdf(x))


def h_functional(n: int, psi_mu: float, psi_nu: float, d: float) -> float:
    """Lower bound for ``n * var(T)`` contributed by one alternative ``nu``.

    Uses ``1/inf = 0``. Raises :class:`InfiniteBoundError` when the
    divergence vanishes but the parameter values differ.
    """
    if n < 1:
        raise ValueError("n must be a positive integer")
    if not d >= 0:
        raise ValueError(f"divergence must be nonnegative, got {d}")
    gap = (psi_mu - psi_nu) ** 2
    if math.isinf(d) or gap == 0:
        return 0.0
    denom = tensorize(d, n)
    if denom == 0:
        raise InfiniteBoundError(
            f"psi differs ({psi_mu} vs {psi_nu}) at zero divergence"
        )
    return n * gap / denom


class _PathEvaluator:
    """Memoises divergences and parameter values along a path.

    Divergences do not depend on ``n``, so one evaluator serves a whole
    sweep over sample sizes.
    """

    def __init__(self, path: ParametricPath, rule: QuadratureRule = DEFAULT_RULE, threads: int = 1):
        self.path = path
        self.rule = rule
        self.threads = max(1, int(threads))
        self._d: dict[float, float] = {}
        self._psi: dict[float, float] = {}
        self.psi0 = path.psi0

    def divergence(self, theta: float) -> float:
        theta = float(theta)
        d = self._d.get(theta)
        if d is None:
            d = self.path.divergence(theta, self.rule)
            self._d[theta] = d
        return d

    def psi(self, theta: float) -> float:
        theta = float(theta)
        v = self._psi.get(theta)
        if v is None:
            v = float(self.path.psi(theta))
            self._psi[theta] = v
        return v

    def prefetch(self, thetas: Iterable[float]) -> None:
        todo = [float(t) for t in thetas if float(t) not in self._d]
        if self.threads > 1 and len(todo) > 1:
            with ThreadPoolExecutor(self.threads) as pool:
                values = list(pool.map(lambda t: self.path.divergence(t, self.rule), todo))
        else:
            values = [self.path.divergence(t, self.rule) for t in todo]
        self._d.update(zip(todo, values))

    def h(self, n: int, theta: float) -> float:
        return h_functional(n, self.psi0, self.psi(theta), self.divergence(theta))


def _fd_step(theta0: float) -> float:
    return max(1e-5, 1e-5 * abs(theta0))


def fisher_information(path: ParametricPath, rule: QuadratureRule = DEFAULT_RULE) -> float:
    """``integral of g**2 dmu`` with the score ``g`` from central differences of the density ratio."""
    h = _fd_step(path.theta0)
    up, down = path.theta0 + h, path.theta0 - h
    base = path.base

    def integrand(x):
        score = (path.ratio(up, x) - path.ratio(down, x)) / (2.0 * h)
        out = base.pdf(x) * score * score
        return np.where(base.pdf(x) > 0, out, 0.0)

    try:
        value, _ = integrate(rule, integrand, base.support, base.landmarks())
    except DivergentIntegralError as exc:
        raise NonRegularModelError(f"{path.name}: score is not square integrable") from exc
    return float(value)


def psi_derivative(path: ParametricPath) -> float:
    h = _fd_step(path.theta0)
    return (path.psi(path.theta0 + h) - path.psi(path.theta0 - h)) / (2.0 * h)


def cramer_rao_bound(path: ParametricPath, rule: QuadratureRule = DEFAULT_RULE) -> float:
    info = fisher_information(path, rule)
    if not info > 1e-14:
        raise DegenerateModelError(f"{path.name}: Fisher information is zero")
    return psi_derivative(path) ** 2 / info


def _richardson_limit(values: Sequence[float], ratio: float, max_cols: int = 6):
    """Extrapolate ``values[k] = F(step_k)`` with steps shrinking by a fixed factor.

    ``ratio`` is the factor by which the leading error term shrinks per
    step. Returns ``(estimate, error)`` from the row with the smallest
    change between successive diagonal entries.
    """
    table: list[list[float]] = []
    best = (math.nan, math.inf)
    prev = None
    for k, v in enumerate(values):
        row = [v]
        for j in range(1, min(k, max_cols) + 1):
            fac = ratio**j
            row.append(row[j - 1] + (row[j - 1] - table[k - 1][j - 1]) / (fac - 1.0))
        table.append(row)
        est = row[-1]
        if prev is not None and k >= 2:
            err = abs(est - prev)
            if err < best[1]:
                best = (est, err)
        prev = est
    return best


def continuity_extension(
    path: ParametricPath,
    n: int,
    rule: QuadratureRule = DEFAULT_RULE,
    *,
    levels: int = 16,
    tol: float = 1e-5,
    _evaluator: _PathEvaluator | None = None,
) -> float:
    """Numerical limit of ``H_n(theta)`` as ``theta -> theta0``.

    Symmetric averages over ``theta0 +/- s * 2**-k`` are extrapolated in
    ``step**2``; at an endpoint of the range a one-sided sequence is used.
    """
    ev = _evaluator or _PathEvaluator(path, rule)
    lo, hi = path.theta_range
    t0 = path.theta0
    left, right = t0 - lo, hi - t0
    if left > 0 and right > 0:
        s = 0.25 * min(left, right, 2.0)
        values = [0.5 * (ev.h(n, t0 + s * 2.0**-k) + ev.h(n, t0 - s * 2.0**-k))
                  for k in range(levels)]
        ratio = 4.0
    else:
        sign = 1.0 if right > 0 else -1.0
        s = 0.25 * min(max(left, right), 2.0)
        values = [ev.h(n, t0 + sign * s * 2.0**-k) for k in range(levels)]
        ratio = 2.0
    est, err = _richardson_limit(values, ratio)
    if not (math.isfinite(est) and err <= tol * (1.0 + abs(est))):
        raise NonDifferentiablePathError(
            f"{path.name}: H does not settle near theta0 (estimate {est}, change {err})"
        )
    return max(est, 0.0)


_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_max(f: Callable[[float], float], a: float, b: float, tol: float = 1e-8):
    """Maximise a unimodal ``f`` on ``[a, b]``; returns ``(x, f(x))`` for the best point seen."""
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    best = max(((fc, -c), (fd, -d)))
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
            best = max(best, (fc, -c))
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
            best = max(best, (fd, -d))
    return -best[1], best[0]


@dataclass
class BoundReport:
    n: int
    B_psi_n: float
    theta_star: float | str
    cramer_rao: float | None
    continuity_extension_value: float | None
    curve: list[tuple[float, float]] = field(default_factory=list)
    dropped_points: int = 0

    def to_dict(self, include_curve: bool = True) -> dict:
        out = {
            "n": self.n,
            "B_psi_n": None if math.isinf(self.B_psi_n) else self.B_psi_n,
            "theta_star": self.theta_star,
            "cramer_rao": self.cramer_rao,
            "continuity_extension_value": self.continuity_extension_value,
            "dropped_points": self.dropped_points,
        }
        if include_curve:
            out["curve"] = [[t, h] for t, h in self.curve]
        return out


def _grid(path: ParametricPath, grid_size: int) -> np.ndarray:
    lo, hi = path.theta_range
    eps = 1e-4 * (hi - lo)
    thetas = np.linspace(lo, hi, grid_size)
    return thetas[np.abs(thetas - path.theta0) >= eps]


def _optimize(ev: _PathEvaluator, n: int, thetas: np.ndarray, with_cramer_rao: bool = True):
    path = ev.path
    lo, hi = path.theta_range
    eps = 1e-4 * (hi - lo)
    t0 = path.theta0

    kept_t, kept_h = [], []
    infinite_bound = 0
    dropped = 0
    for t in thetas:
        try:
            h = ev.h(n, t)
        except InfiniteBoundError:
            infinite_bound += 1
            continue
        if not math.isfinite(h):
            dropped += 1
            continue
        kept_t.append(float(t))
        kept_h.append(h)
    if not kept_t:
        if infinite_bound:
            raise DiscontinuousParameterError(
                f"{path.name}: psi varies at zero divergence on the whole grid"
            )
        raise QBoundError(f"{path.name}: no finite values of H on the grid")
    if infinite_bound or dropped:
        log.warning("%s: dropped %d grid points with non-finite H", path.name, infinite_bound + dropped)

    i = int(np.argmax(kept_h))  # first maximum, i.e. smallest theta on ties
    a = kept_t[i - 1] if i > 0 else kept_t[i]
    b = kept_t[i + 1] if i + 1 < len(kept_t) else kept_t[i]
    if a < t0 < b:
        if kept_t[i] > t0:
            a = t0 + eps
        else:
            b = t0 - eps
    best_t, best_h = kept_t[i], kept_h[i]
    if b > a:
        def safe_h(t):
            try:
                return ev.h(n, t)
            except InfiniteBoundError:
                return -math.inf

        t_ref, h_ref = golden_section_max(safe_h, a, b)
        if h_ref > best_h:
            best_t, best_h = t_ref, h_ref

    try:
        ce = continuity_extension(path, n, ev.rule, _evaluator=ev)
    except (NonDifferentiablePathError, InfiniteBoundError):
        ce = None

    cr = None
    if with_cramer_rao:
        try:
            cr = cramer_rao_bound(path, ev.rule)
        except QBoundError:
            cr = None

    if ce is not None and ce > best_h:
        bound, theta_star = ce, LIMIT_AT_THETA0
    else:
        bound, theta_star = best_h, best_t
    return BoundReport(
        n=n,
        B_psi_n=bound,
        theta_star=theta_star,
        cramer_rao=cr,
        continuity_extension_value=ce,
        curve=list(zip(kept_t, kept_h)),
        dropped_points=infinite_bound + dropped,
    )


def optimize_bound(
    path: ParametricPath,
    n: int,
    grid_size: int = 512,
    rule: QuadratureRule = DEFAULT_RULE,
    threads: int = 1,
) -> BoundReport:
    """Efficiency bound: supremum of ``H_n`` over the path's parameter range.

    A coarse grid (excluding a small ball around ``theta0``) locates the best
    bracket, golden-section search refines it, and the result is compared with
    the continuity extension at ``theta0``.
    """
    if grid_size < 64:
        raise ValueError("grid_size must be at least 64")
    ev = _PathEvaluator(path, rule, threads)
    thetas = _grid(path, grid_size)
    ev.prefetch(thetas)
    return _optimize(ev, n, thetas)


@dataclass(frozen=True)
class CurveRow:
    n: int
    theta: float
    H: float
    flag: str


def bound_curve(
    path: ParametricPath,
    n_list: Sequence[int],
    theta_grid: Sequence[float],
    rule: QuadratureRule = DEFAULT_RULE,
    threads: int = 1,
) -> list[CurveRow]:
    """``H_n(theta)`` for every ``n`` in ``n_list`` and ``theta`` in ``theta_grid``.

    At ``theta0`` the row carries the continuity extension.
    """
    lo, hi = path.theta_range
    theta_grid = [float(t) for t in theta_grid]
    if any(t < lo or t > hi for t in theta_grid):
        raise ValueError("theta grid leaves the path's range")
    ev = _PathEvaluator(path, rule, threads)
    at_truth = [abs(t - path.theta0) <= 1e-12 * (1.0 + abs(path.theta0)) for t in theta_grid]
    ev.prefetch(t for t, z in zip(theta_grid, at_truth) if not z)

    rows = []
    for n in n_list:
        ce = None
        for t, z in zip(theta_grid, at_truth):
            if z:
                if ce is None:
                    ce = continuity_extension(path, n, rule, _evaluator=ev)
                rows.append(CurveRow(n, t, ce, FLAG_CONTINUITY))
                continue
            d = ev.divergence(t)
            if math.isinf(d):
                rows.append(CurveRow(n, t, 0.0, FLAG_INFINITE_D))
                continue
            try:
                rows.append(CurveRow(n, t, h_functional(n, ev.psi0, ev.psi(t), d), FLAG_OK))
            except InfiniteBoundError:
                rows.append(CurveRow(n, t, math.inf, FLAG_INFINITE_BOUND))
    return rows


def asymptotic_sweep(
    path: ParametricPath,
    n_max: int,
    grid_size: int = 512,
    rule: QuadratureRule = DEFAULT_RULE,
    threads: int = 1,
    n_values: Sequence[int] | None = None,
) -> list[tuple[int, float]]:
    """``(n, B_n)`` for ``n = 1..n_max`` (or the given ``n_values``)."""
    if n_max < 2:
        raise ValueError("n_max must be at least 2")
    ev = _PathEvaluator(path, rule, threads)
    thetas = _grid(path, grid_size)
    ev.prefetch(thetas)
    ns = range(1, n_max + 1) if n_values is None else n_values
    return [(n, _optimize(ev, n, thetas, with_cramer_rao=False).B_psi_n) for n in ns]
