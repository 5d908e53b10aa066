"""Run every sampler on one config through the harness and print the summary table."""

import argparse
import sys
from pathlib import Path

from gdps import emit_reports, parse_config, run_experiment
from gdps.harness import fmt

DEFAULT = Path(__file__).resolve().parents[1] / "configs" / "methods_blur.cfg"


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("config", nargs="?", default=str(DEFAULT))
    ap.add_argument("--trials", type=int)
    ap.add_argument("--out", help="also write the CSV reports here")
    args = ap.parse_args(argv)

    overrides = {"experiment.trials": str(args.trials)} if args.trials else None
    result = run_experiment(parse_config(args.config, overrides))
    for row in result.summary:
        if row.metric != "lpips":
            print(f"{row.method:<10} {row.metric:<9} {fmt(row.mean):>24} +/- {fmt(row.stderr)}")
    if args.out:
        return emit_reports(result, args.out)
    return 0 if result.ok else 1


if __name__ == "__main__":
    sys.exit(main())
