"""Error of the reverse Euler ODE against the exact Gaussian flow as the step count doubles."""

import argparse
import sys

from gdps.checks import ode_errors


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sigma-max", type=float, default=100.0)
    ap.add_argument("--steps", type=int, nargs="+", default=[5, 10, 20, 40, 80, 160])
    args = ap.parse_args(argv)

    errs = ode_errors(sigma_T=args.sigma_max, ns=tuple(args.steps))
    prev = None
    print(f"{'steps':>6} {'error':>12} {'ratio':>7}")
    for n, e in zip(args.steps, errs):
        ratio = "" if prev is None else f"{prev / e:.3f}"
        print(f"{n:>6} {e:>12.4e} {ratio:>7}")
        prev = e
    return 0


if __name__ == "__main__":
    sys.exit(main())
