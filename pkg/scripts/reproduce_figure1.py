"""Write the exponential-rate curves H_n(theta), n = 4..15, and optionally plot them.

    python scripts/reproduce_figure1.py --csv figure1.csv --png figure1.png
"""
import argparse
import csv
import sys
from collections import defaultdict

from qbound.cli import figure1_rows


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--csv", default="figure1.csv")
    parser.add_argument("--png", help="also draw the curves (needs matplotlib)")
    parser.add_argument("--points", type=int, default=500)
    args = parser.parse_args(argv)

    rows = figure1_rows(points=args.points)
    with open(args.csv, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["n", "theta", "H", "flag"])
        for r in rows:
            writer.writerow([r.n, format(r.theta, ".17g"), format(r.H, ".17g"), r.flag])
    print(f"wrote {len(rows)} rows to {args.csv}")

    if args.png:
        try:
            import matplotlib
        except ImportError:
            sys.exit("matplotlib is not installed; pip install -e .[scripts]")
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        curves = defaultdict(list)
        for r in rows:
            curves[r.n].append((r.theta, r.H))
        fig, ax = plt.subplots(figsize=(6, 4))
        for n, pts in sorted(curves.items()):
            t, h = zip(*pts)
            ax.plot(t, h, lw=1, color=plt.cm.viridis((n - 4) / 11), label=f"n={n}")
        ax.axhline(1.0, color="k", lw=0.5, ls=":")
        ax.set_xlabel(r"$\theta$")
        ax.set_ylabel(r"$H^n_\psi(\mu, \mu_\theta)$")
        ax.legend(fontsize=6, ncol=2)
        fig.tight_layout()
        fig.savefig(args.png, dpi=150)
        print(f"saved {args.png}")


if __name__ == "__main__":
    main()
