"""Compare GDPS sample moments with the closed-form Gaussian posterior across ladder sizes."""

import argparse
import sys

from gdps.checks import conjugate_match


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--outer", type=int, nargs="+", default=[50, 100, 200])
    ap.add_argument("--inner", type=int, nargs="+", default=[5, 10])
    ap.add_argument("--chains", type=int, default=500)
    ap.add_argument("--gamma", type=float, default=1e-3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    all_ok = True
    for N in args.outer:
        for n in args.inner:
            ok, detail = conjugate_match(N=N, n=n, chains=args.chains, gamma=args.gamma, seed=args.seed)
            all_ok &= ok
            print(("ok  " if ok else "off ") + detail)
    return 0 if all_ok else 1


if __name__ == "__main__":
    sys.exit(main())
