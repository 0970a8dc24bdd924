"""Command-line front end.

    qbound divergence --mu '{"family":"gaussian","mean":0,"variance":1}' --nu '{...}'
    qbound bound --model '{"path":"gaussian_mean","theta0":0,"psi":"exp"}' --n 5
    qbound curve --model @model.json --n 4-15 --theta-min 0.5 --theta-max 3
    qbound project --model '{"base":{...},"phi":["x"],"h":"x2"}' --theta 2
    qbound verify --model '{"path":"gaussian_mean","theta0":0}' --estimator mean --n 5
    qbound reproduce figure1

JSON arguments may be given inline or as ``@file``. Exit status: 0 on
success, 1 on domain errors, 2 on configuration errors; errors are written
to stderr as JSON. The resolved configuration of every run is echoed to
stderr as a single JSON line.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from typing import Any, Sequence

import numpy as np

from . import bounds, models, projection, verify
from .distributions import distribution_from_config
from .divergence import Method, q_divergence
from .errors import ConfigError, QBoundError
from .quadrature import QuadratureRule


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _json_arg(text: str) -> Any:
    if text.startswith("@"):
        try:
            with open(text[1:], encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read {text[1:]}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc}") from exc


def _n_list(text: str) -> list[int]:
    out = []
    try:
        for part in text.split(","):
            if "-" in part:
                lo, hi = part.split("-")
                out.extend(range(int(lo), int(hi) + 1))
            else:
                out.append(int(part))
    except ValueError:
        raise ConfigError(f"bad n list {text!r}") from None
    if not out or min(out) < 1:
        raise ConfigError("sample sizes must be positive")
    return out


def _default_threads() -> int:
    env = os.environ.get("QBOUND_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"QBOUND_THREADS={env!r} is not an integer") from None
    return os.cpu_count() or 1


def _dumps(obj) -> str:
    try:
        return json.dumps(obj, allow_nan=False) + "\n"
    except ValueError:
        # non-finite floats are not JSON; spell them out
        return json.dumps(_finite(obj)) + "\n"


def _finite(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    return obj


def _fmt(x: float) -> str:
    return format(x, ".17g")


def _range(args, default):
    lo = default[0] if args.theta_min is None else args.theta_min
    hi = default[1] if args.theta_max is None else args.theta_max
    return (lo, hi)


def _path_from_model(config, args) -> bounds.ParametricPath:
    """Parametric path configs name a built-in path; moment models use their projection path."""
    if isinstance(config, dict) and "base" in config:
        model = projection.moment_model_from_config(config)
        if model.mode == "el":
            if args.theta_min is None or args.theta_max is None:
                raise ConfigError("estimating-equation models need --theta-min and --theta-max")
            return projection.el_path(model, (args.theta_min, args.theta_max))
        explicit = None
        if args.theta_min is not None or args.theta_max is not None:
            default = projection.projection_path(model).theta_range
            explicit = _range(args, default)
        return projection.projection_path(model, explicit)
    default = models.default_range(config.get("path")) if isinstance(config, dict) else None
    theta_range = _range(args, default) if default else None
    return models.path_from_config(config, theta_range)


# ---------------------------------------------------------------------------
# subcommands; each returns (output text, resolved config)

def cmd_divergence(args):
    mu = distribution_from_config(_json_arg(args.mu))
    nu = distribution_from_config(_json_arg(args.nu))
    rule = QuadratureRule(rtol=args.rtol)
    est = q_divergence(mu, nu, Method(args.method), rule=rule, seed=args.seed, samples=args.samples)
    config = {"subcommand": "divergence", "mu": _json_arg(args.mu), "nu": _json_arg(args.nu),
              "method": args.method, "rtol": args.rtol, "seed": args.seed, "samples": args.samples}
    return _dumps({**est.to_dict(), "config": config}), config


def cmd_bound(args):
    model = _json_arg(args.model)
    path = _path_from_model(model, args)
    report = bounds.optimize_bound(path, args.n, args.grid, QuadratureRule(rtol=args.rtol),
                                   threads=args.threads)
    config = {"subcommand": "bound", "model": model, "n": args.n,
              "theta_range": list(path.theta_range), "grid": args.grid, "rtol": args.rtol}
    return _dumps({**report.to_dict(include_curve=not args.no_curve), "config": config}), config


def _curve_csv(rows: Sequence[bounds.CurveRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["n", "theta", "H", "flag"])
    for r in rows:
        writer.writerow([r.n, _fmt(r.theta), _fmt(r.H), r.flag])
    return buf.getvalue()


def _theta_grid(lo: float, hi: float, points: int, include_lo: bool) -> list[float]:
    if include_lo:
        return [lo + (hi - lo) * i / (points - 1) for i in range(points)]
    return [lo + (hi - lo) * i / points for i in range(1, points + 1)]


def cmd_curve(args):
    model = _json_arg(args.model)
    path = _path_from_model(model, args)
    lo, hi = path.theta_range
    grid = _theta_grid(lo, hi, args.grid, not args.open_left)
    ns = _n_list(args.n)
    rows = bounds.bound_curve(path, ns, grid, QuadratureRule(rtol=args.rtol), threads=args.threads)
    config = {"subcommand": "curve", "model": model, "n": ns, "theta_range": [lo, hi],
              "grid": args.grid, "open_left": args.open_left, "rtol": args.rtol}
    return _curve_csv(rows), config


def cmd_project(args):
    config_model = _json_arg(args.model)
    model = projection.moment_model_from_config(config_model)
    if model.mode == "el":
        result = projection.el_projection(model, args.theta)
    else:
        result = projection.q_projection_linear(model, args.theta)
    config = {"subcommand": "project", "model": config_model, "theta": args.theta}
    return _dumps({**result.to_dict(), "config": config}), config


def cmd_verify(args):
    config_model = _json_arg(args.model)
    path = _path_from_model(config_model, args)
    if path.measure_at is None:
        raise ConfigError("verify needs a parametric path model")
    mu = path.base
    estimator = verify.estimator_by_name(args.estimator, mu)
    lo, hi = path.theta_range
    thetas = np.linspace(lo, hi, args.nu_grid)
    nu_list = [(path.measure_at(float(t)), float(path.psi(float(t)))) for t in thetas]
    if abs(path.psi0 - estimator.target) > 1e-12 * (1 + abs(estimator.target)):
        raise ConfigError(f"estimator {args.estimator!r} does not target psi of the model")
    report = verify.verify_bound(mu, estimator, nu_list, args.n, args.reps, args.seed,
                                 threads=args.threads)
    config = {"subcommand": "verify", "model": config_model, "estimator": args.estimator,
              "n": args.n, "reps": args.reps, "seed": args.seed,
              "theta_range": [lo, hi], "nu_grid": args.nu_grid}
    out = report.to_dict()
    out["nu_thetas"] = [float(t) for t in thetas]
    return _dumps({**out, "config": config}), config


def figure1_rows(n_list=range(4, 16), points: int = 500):
    path = models.example2_path((0.5, 3.0))
    grid = _theta_grid(0.5, 3.0, points, include_lo=False)
    return bounds.bound_curve(path, list(n_list), grid)


def cmd_reproduce(args):
    target = args.target
    config = {"subcommand": "reproduce", "target": target, "n": args.n}
    if target == "figure1":
        return _curve_csv(figure1_rows()), config
    n = args.n
    if target == "example1":
        report = bounds.optimize_bound(models.example1_path(), n)
        out = {"B": report.B_psi_n, "theta_star": report.theta_star,
               "cramer_rao": report.cramer_rao, "closed_form_B": n * math.expm1(1.0 / n),
               "closed_form_theta_star": 1.0 / n}
    elif target == "example2":
        report = bounds.optimize_bound(models.example2_path(), n)
        out = {"B": report.B_psi_n, "theta_star": report.theta_star,
               "cramer_rao": report.cramer_rao,
               "continuity_extension": report.continuity_extension_value}
    elif target == "example3":
        model = example3_model()
        report = projection.numerical_semiparametric_bound(model, n)
        out = {"V": projection.semiparametric_bound(model, n), "B": report.B_psi_n,
               "theta_star": report.theta_star, "cramer_rao": report.cramer_rao,
               "projection_at_theta0_plus_1": projection.q_projection_linear(
                   model, model.theta0 + 1.0).to_dict()}
    elif target == "example4":
        model = example4_model()
        sweep = bounds.asymptotic_sweep(projection.el_path(model, (-2.0, 2.0)), max(n, 2))
        out = {"el_asymptotic_bound": projection.el_asymptotic_bound(model),
               "sweep": [[k, b] for k, b in sweep]}
    else:  # pragma: no cover - argparse restricts choices
        raise ConfigError(f"unknown target {target}")
    return _dumps({**out, "config": config}), config


def example3_model() -> projection.MomentModel:
    """Standard normal base, constraint ``E[X] = 0``, estimand ``E[X^2]``."""
    from .distributions import Gaussian

    return projection.MomentModel(Gaussian(0.0, 1.0), phi=lambda x: x, h=lambda x: x**2)


def example4_model() -> projection.MomentModel:
    """Location model ``E[X - theta] = 0`` under a standard normal."""
    from .distributions import Gaussian

    return projection.MomentModel(Gaussian(0.0, 1.0), phi_theta=lambda t, x: x - t, theta0=0.0)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qbound", description=__doc__.split("\n\n")[0],
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads (default: $QBOUND_THREADS or all cores)")
    parser.add_argument("-o", "--output", help="write output here instead of stdout")
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    p = sub.add_parser("divergence", help="quadratic divergence of nu with respect to mu")
    p.add_argument("--mu", required=True)
    p.add_argument("--nu", required=True)
    p.add_argument("--method", choices=[m.value for m in Method], default="auto")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=10**6)
    p.add_argument("--rtol", type=float, default=1e-8)
    p.set_defaults(func=cmd_divergence)

    def path_args(p, grid_default):
        p.add_argument("--model", required=True)
        p.add_argument("--theta-min", type=float)
        p.add_argument("--theta-max", type=float)
        p.add_argument("--grid", type=int, default=grid_default)
        p.add_argument("--rtol", type=float, default=1e-8)

    p = sub.add_parser("bound", help="efficiency bound B_n along a path")
    path_args(p, 512)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--no-curve", action="store_true", help="omit the sampled curve")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("curve", help="CSV of H_n(theta) for several n")
    path_args(p, 500)
    p.add_argument("--n", required=True, help="e.g. 4-15 or 1,2,5")
    p.add_argument("--open-left", action="store_true", help="exclude theta-min from the grid")
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("project", help="Q-projection onto a moment-constraint level set")
    p.add_argument("--model", required=True)
    p.add_argument("--theta", type=float, required=True)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("verify", help="Monte-Carlo check of the variance bound")
    p.add_argument("--model", required=True)
    p.add_argument("--estimator", choices=["mean", "exp-mean-corrected"], required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--reps", type=int, default=10**5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--nu-grid", type=int, default=25)
    p.add_argument("--theta-min", type=float)
    p.add_argument("--theta-max", type=float)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("reproduce", help="worked examples and the figure data")
    p.add_argument("target", choices=["figure1", "example1", "example2", "example3", "example4"])
    p.add_argument("--n", type=int, default=4)
    p.set_defaults(func=cmd_reproduce)
    return parser


def _fail(kind: str, exc: Exception, status: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "type": type(exc).__name__,
                                 "message": str(exc)}) + "\n")
    return status


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.threads is None:
            args.threads = _default_threads()
        if getattr(args, "n", None) is not None and isinstance(args.n, int) and args.n < 1:
            raise ConfigError("--n must be positive")
        if getattr(args, "grid", 512) < (64 if args.subcommand == "bound" else 2):
            raise ConfigError("--grid is too small")
        text, config = args.func(args)
    except ConfigError as exc:
        return _fail("config", exc, 2)
    except QBoundError as exc:
        return _fail("domain", exc, 1)
    except ValueError as exc:
        return _fail("config", exc, 2)

    sys.stderr.write(json.dumps({"config": {**config, "threads": args.threads}}) + "\n")
    if args.output:
        with open(args.output, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
