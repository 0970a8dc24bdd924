"""Convergence of B_n to the Cramer-Rao bound along the built-in paths.

Writes ``n,path,B`` rows to stdout.
"""
import argparse
import sys

from qbound.bounds import asymptotic_sweep
from qbound.models import example1_path, example2_path


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n-max", type=int, default=200)
    parser.add_argument("--grid", type=int, default=512)
    args = parser.parse_args(argv)

    out = sys.stdout
    out.write("n,path,B\n")
    for name, path in (("gaussian_exp", example1_path()), ("exponential_rate", example2_path())):
        for n, b in asymptotic_sweep(path, args.n_max, grid_size=args.grid):
            out.write(f"{n},{name},{b:.17g}\n")


if __name__ == "__main__":
    main()
