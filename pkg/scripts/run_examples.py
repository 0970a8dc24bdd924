"""Print the bounds of the four worked models next to their closed forms."""
import argparse
import math

from qbound import bounds, models, projection
from qbound.cli import example3_model, example4_model


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, nargs="+", default=[1, 2, 4, 10, 15])
    args = parser.parse_args(argv)

    print("Gaussian location, psi = exp(theta)")
    print(f"{'n':>4} {'B_n':>12} {'n(e^(1/n)-1)':>14} {'theta*':>10} {'CR':>8}")
    for n in args.n:
        r = bounds.optimize_bound(models.example1_path(), n)
        print(f"{n:>4} {r.B_psi_n:12.8f} {n * math.expm1(1 / n):14.8f} "
              f"{r.theta_star:10.6f} {r.cramer_rao:8.5f}")

    print("\nExponential rate on (0.5, 3]")
    print(f"{'n':>4} {'B_n':>12} {'theta*':>10} {'limit':>8}")
    for n in args.n:
        r = bounds.optimize_bound(models.example2_path(), n)
        print(f"{n:>4} {r.B_psi_n:12.8f} {r.theta_star:10.6f} {r.continuity_extension_value:8.5f}")

    model = example3_model()
    print("\nMoment model E[X]=0, estimand E[X^2], base N(0,1)")
    print(f"  V = var(h_perp) = {projection.semiparametric_bound(model):.10f}")
    for n in args.n:
        r = projection.numerical_semiparametric_bound(model, n)
        print(f"  n={n:<3} search sup = {r.B_psi_n:.8f} at {r.theta_star}")

    model = example4_model()
    path = projection.el_path(model, (-2.0, 2.0))
    print("\nEstimating equation E[X - theta] = 0")
    print(f"  asymptotic bound = {projection.el_asymptotic_bound(model):.10f}")
    for n, b in bounds.asymptotic_sweep(path, max(args.n), n_values=args.n):
        print(f"  n={n:<3} B_n = {b:.8f}")


if __name__ == "__main__":
    main()
