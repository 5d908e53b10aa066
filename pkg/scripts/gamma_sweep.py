"""Sweep the guidance weight on the canonical 2-d blur benchmark and compare against DAPS."""

import argparse
import csv
import sys

import numpy as np

from gdps import Measurement, Method, SamplerSpec, build_schedule, psnr
from gdps.benchmarks import blur_2d, canonical_gmm_2d, paired_trials
from gdps.samplers import sample_gdps


def evaluate(prior, op, y, truths, spec, schedule):
    res = sample_gdps(prior, op, y, schedule, spec, len(truths))
    good = [t for t in range(len(truths)) if t not in res.failures]
    if not good:
        return len(res.failures), np.inf, -np.inf
    r = np.sum((op.apply(res.samples[good]) - y.values[good]) ** 2, axis=-1)
    p = [psnr(res.samples[t], truths[t]) for t in good]
    return len(res.failures), float(np.mean(r)), float(np.mean(p))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--gammas", type=float, nargs="+", default=[0.0, 0.1, 0.25, 0.5, 1.0, 2.0])
    ap.add_argument("--trials", type=int, default=100)
    ap.add_argument("--noise", type=float, default=0.05)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--csv", help="optional output path")
    args = ap.parse_args(argv)

    prior, op = canonical_gmm_2d(), blur_2d()
    truths, ys = paired_trials(prior, op, args.trials, args.noise, args.seed)
    y = Measurement(ys, op.name, args.noise)
    schedule = build_schedule()

    rows = [("DAPS", "", *evaluate(prior, op, y, truths, SamplerSpec(method=Method.DAPS, seed=args.seed), schedule))]
    for g in args.gammas:
        spec = SamplerSpec(method=Method.GDPS, gamma=g, seed=args.seed)
        rows.append(("GDPS", g, *evaluate(prior, op, y, truths, spec, schedule)))

    print(f"{'method':<6} {'gamma':>7} {'failed':>7} {'residual':>11} {'psnr':>7}")
    for m, g, f, r, p in rows:
        print(f"{m:<6} {g!s:>7} {f:>7} {r:>11.4g} {p:>7.2f}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", "gamma", "failed", "residual", "psnr"])
            w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
