"""Adaptive composite Gauss-Legendre quadrature on intervals of the real line.

Unbounded intervals are mapped onto finite ones by rational transforms
(``x = t / (1 - t**2)`` for the whole line, ``x = a + t / (1 - t)`` for a half
line), so a single panel kernel serves every support.

Integrands must be vectorised: they receive a 1-d array of abscissae and
return either an array of the same shape or an array of shape ``(m, N)`` for
an ``m``-vector of integrands evaluated together.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import DivergentIntegralError

Interval = tuple[float, float]


@lru_cache(maxsize=None)
def _gauss_legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(order)


@dataclass(frozen=True)
class QuadratureRule:
    """Settings for :func:`integrate`.

    ``growth_factor`` and ``growth_levels`` define the divergence heuristic:
    if the running value grows by more than ``growth_factor`` on
    ``growth_levels`` consecutive refinement levels the integral is declared
    divergent.
    """

    order: int = 32
    rtol: float = 1e-8
    atol: float = 1e-15
    max_panels: int = 2**14
    initial_panels: int = 4
    max_levels: int = 64
    transform: str = "rational"
    growth_factor: float = 10.0
    growth_levels: int = 4

    def __post_init__(self):
        if self.order < 2:
            raise ValueError("order must be at least 2")
        if self.rtol <= 0 or self.atol < 0:
            raise ValueError("tolerances must be positive")
        if self.transform != "rational":
            raise ValueError(f"unknown transform {self.transform!r}")


DEFAULT_RULE = QuadratureRule()


# Each piece maps a finite t-interval onto part of the x-axis.
class _Piece:
    __slots__ = ("lo", "hi", "kind", "anchor")

    def __init__(self, lo, hi, kind, anchor=0.0):
        self.lo, self.hi, self.kind, self.anchor = lo, hi, kind, anchor

    def to_x(self, t):
        if self.kind == "finite":
            return t, np.ones_like(t)
        if self.kind == "line":
            s = 1.0 - t * t
            return t / s, (1.0 + t * t) / (s * s)
        s = 1.0 - t
        jac = 1.0 / (s * s)
        if self.kind == "right":
            return self.anchor + t / s, jac
        return self.anchor - t / s, jac


def _pieces(support: Interval, points: Sequence[float]) -> list[_Piece]:
    a, b = float(support[0]), float(support[1])
    if not a < b:
        raise ValueError(f"empty interval {support}")
    cuts = sorted({float(p) for p in points if a < p < b and math.isfinite(p)})
    edges = [a, *cuts, b]
    pieces = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        if math.isfinite(lo) and math.isfinite(hi):
            pieces.append(_Piece(lo, hi, "finite"))
        elif math.isinf(lo) and math.isinf(hi):
            pieces.append(_Piece(-1.0, 1.0, "line"))
        elif math.isinf(hi):
            pieces.append(_Piece(0.0, 1.0, "right", lo))
        else:
            pieces.append(_Piece(0.0, 1.0, "left", hi))
    return pieces


class _Evaluator:
    def __init__(self, f, pieces, order):
        self.f = f
        self.pieces = pieces
        self.xi, self.wi = _gauss_legendre(order)
        self.vector = None

    def nodes(self, pid, a, b):
        half = 0.5 * (b - a)
        mid = 0.5 * (b + a)
        t = mid[:, None] + half[:, None] * self.xi[None, :]
        x = np.empty_like(t)
        w = np.empty_like(t)
        for k, piece in enumerate(self.pieces):
            sel = pid == k
            if sel.any():
                with np.errstate(divide="ignore", over="ignore"):
                    xk, jk = piece.to_x(t[sel])
                x[sel] = xk
                w[sel] = jk * half[sel, None] * self.wi[None, :]
        return x, w

    def panel_sums(self, pid, a, b):
        x, w = self.nodes(pid, a, b)
        with np.errstate(all="ignore"):
            raw = np.asarray(self.f(x.ravel()), dtype=float)
        if raw.shape == (x.size,):
            vals = raw.reshape(1, -1)
            vector = False
        else:
            vals = raw.reshape(-1, x.size)
            vector = True
        if self.vector is None:
            self.vector = vector
        vals = vals.reshape(vals.shape[0], *x.shape)
        with np.errstate(all="ignore"):
            # weights vanish nowhere in the open panel, so inf * w stays inf
            return np.einsum("mpk,pk->mp", vals, w)


def _adapt(rule: QuadratureRule, f, support: Interval, points: Sequence[float]):
    pieces = _pieces(support, points)
    ev = _Evaluator(f, pieces, rule.order)

    n0 = max(1, rule.initial_panels)
    pid, a, b = [], [], []
    for k, piece in enumerate(pieces):
        edges = np.linspace(piece.lo, piece.hi, n0 + 1)
        pid.extend([k] * n0)
        a.extend(edges[:-1])
        b.extend(edges[1:])
    pid, a, b = np.array(pid), np.array(a), np.array(b)
    total_width = sum(p.hi - p.lo for p in pieces)

    coarse = ev.panel_sums(pid, a, b)
    done_value = np.zeros(coarse.shape[0])
    done_err = 0.0
    done_panels: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []
    prev_scale = None
    growth = 0

    for _ in range(rule.max_levels):
        mid = 0.5 * (a + b)
        left = ev.panel_sums(pid, a, mid)
        right = ev.panel_sums(pid, mid, b)
        fine = left + right
        if not np.all(np.isfinite(fine)):
            raise DivergentIntegralError("integrand is not finite on the support")
        err = np.max(np.abs(coarse - fine), axis=0)
        value = done_value + fine.sum(axis=1)
        error = done_err + float(err.sum())
        scale = float(np.max(np.abs(value)))

        if prev_scale is not None and prev_scale > 0 and scale > rule.growth_factor * prev_scale:
            growth += 1
            if growth >= rule.growth_levels:
                raise DivergentIntegralError("integral grows without bound under refinement")
        else:
            growth = 0
        prev_scale = scale

        tol = max(rule.atol, rule.rtol * scale)
        if error <= tol:
            done_panels.append((pid, a, b))
            return value, error, ev, done_panels

        split = err > tol * (b - a) / total_width
        keep = ~split
        done_value = done_value + fine[:, keep].sum(axis=1)
        done_err += float(err[keep].sum())
        done_panels.append((pid[keep], a[keep], b[keep]))

        pid_s, a_s, m_s, b_s = pid[split], a[split], mid[split], b[split]
        if np.any(b_s - a_s < 1e-14 * np.maximum(1.0, np.abs(m_s))):
            raise DivergentIntegralError("panel width fell below working precision")
        pid = np.concatenate([pid_s, pid_s])
        a = np.concatenate([a_s, m_s])
        b = np.concatenate([m_s, b_s])
        coarse = np.concatenate([left[:, split], right[:, split]], axis=1)
        n_done = sum(len(p[0]) for p in done_panels)
        if n_done + len(a) > rule.max_panels:
            raise DivergentIntegralError(
                f"no convergence within {rule.max_panels} panels"
            )
    raise DivergentIntegralError(f"no convergence within {rule.max_levels} levels")


def integrate(
    rule: QuadratureRule,
    f: Callable[[np.ndarray], np.ndarray],
    support: Interval,
    points: Sequence[float] = (),
) -> tuple[float | np.ndarray, float]:
    """Integrate ``f`` over ``support`` and return ``(value, error_estimate)``.

    ``points`` are optional interior breakpoints (discontinuities, bulk of
    the mass) where the domain is split before refinement starts.

    Raises :class:`DivergentIntegralError` on non-convergence.
    """
    value, error, ev, _ = _adapt(rule, f, support, points)
    if ev.vector:
        return value, error
    return float(value[0]), error


def adapted_nodes(
    rule: QuadratureRule,
    f: Callable[[np.ndarray], np.ndarray],
    support: Interval,
    points: Sequence[float] = (),
) -> tuple[np.ndarray, np.ndarray]:
    """Abscissae and weights of the composite rule refined for ``f``.

    The returned rule can be reused for integrands of similar shape, e.g.
    to build tensor-product rules.
    """
    _, _, ev, panels = _adapt(rule, f, support, points)
    xs, ws = [], []
    for pid, a, b in panels:
        if len(a) == 0:
            continue
        mid = 0.5 * (a + b)
        for lo, hi in ((a, mid), (mid, b)):
            x, w = ev.nodes(pid, lo, hi)
            xs.append(x.ravel())
            ws.append(w.ravel())
    x = np.concatenate(xs)
    w = np.concatenate(ws)
    order = np.argsort(x, kind="stable")
    return x[order], w[order]
