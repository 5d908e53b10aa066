"""Command line entry point: ``gdps run | check | sweep``.

Exit status: 0 success, 1 run or check failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from .checks import CHECKS, FAST_CHECKS
from .config import ConfigError, parse_config
from .harness import emit_reports, emit_sweep, run_experiment, run_sweep

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _overrides(args) -> dict[str, str]:
    out = {}
    if args.trials is not None:
        out["experiment.trials"] = str(args.trials)
    if args.seed is not None:
        out["experiment.seed"] = str(args.seed)
    return out


def _out_dir(args, config) -> Path:
    return Path(args.out) if args.out else Path(config.out_dir)


def cmd_run(args) -> int:
    config = parse_config(args.config, _overrides(args))
    result = run_experiment(config)
    out = _out_dir(args, config)
    status = emit_reports(result, out)
    for row in result.summary:
        if row.metric != "lpips":
            print(f"{row.method:>12} {row.metric:<9} {row.mean:.6g} +/- {row.stderr:.3g}")
    failed = sum(not r.ok for reps in result.reports.values() for r in reps)
    print(f"wrote {out}/ ({failed} failed trial runs)")
    return status


def cmd_sweep(args) -> int:
    base = _overrides(args)

    def rebuild(extra):
        return parse_config(args.config, {**base, **extra})

    config = rebuild({args.param: args.values[0]})
    results = run_sweep(args.param, args.values, rebuild)
    out = _out_dir(args, config)
    status = emit_sweep(args.param, results, out)
    print(f"wrote {out}/sweep.csv ({len(results)} values)")
    return status


def cmd_check(args) -> int:
    numbers = args.only or list(FAST_CHECKS)
    unknown = [k for k in numbers if k not in CHECKS]
    if unknown:
        print(f"error: unknown check numbers {unknown}", file=sys.stderr)
        return EXIT_CONFIG
    t0 = time.perf_counter()
    ok = True
    for k in numbers:
        res = CHECKS[k]()
        ok &= res.passed
        print(res.line(), flush=True)
    print(f"{'all passed' if ok else 'FAILED'} in {time.perf_counter() - t0:.1f}s")
    return EXIT_OK if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gdps", description="Guided decoupled posterior sampling experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="experiment config file (key = value lines)")
        sp.add_argument("--out", help="output directory (overrides experiment.out_dir)")
        sp.add_argument("--trials", type=int, help="number of trials (overrides experiment.trials)")
        sp.add_argument("--seed", type=int, help="seed base (overrides experiment.seed)")

    run = sub.add_parser("run", help="run every configured sampler on paired trials")
    common(run)
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="repeat a run over values of one config key")
    common(sweep)
    sweep.add_argument("--param", required=True, help="config key, e.g. sampler.gdps.gamma")
    sweep.add_argument("--values", required=True, nargs="+", help="values to substitute")
    sweep.set_defaults(func=cmd_sweep)

    check = sub.add_parser("check", help="run the self-checks (default: the fast set 4-7)")
    check.add_argument("--only", type=int, nargs="+", metavar="K", help="check numbers to run (1-9)")
    check.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as err:
        print(f"I/O error: {err}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
