"""Seeded paired-trial experiments and their CSV reports."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .benchmarks import paired_trials
from .config import ExperimentConfig
from .core import Measurement, RunReport
from .samplers import BatchResult, make_report, run_batch

METRICS = ("psnr", "ssim", "residual", "lpips")


@dataclass(frozen=True)
class SummaryRow:
    method: str
    metric: str
    mean: Optional[float]
    stderr: Optional[float]


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    truths: np.ndarray
    measurements: np.ndarray
    reports: dict[str, list[RunReport]]
    traces: dict[str, np.ndarray]
    summary: list[SummaryRow]

    @property
    def ok(self) -> bool:
        return all(r.ok for reps in self.reports.values() for r in reps)


def _mean_se(values: list[float]) -> tuple[float, float]:
    if not values:
        return math.nan, math.nan
    v = np.asarray(values, dtype=float)
    mean = float(v.mean())
    if v.size == 1:
        return mean, 0.0
    if not np.all(np.isfinite(v)):
        return mean, math.nan
    return mean, float(v.std(ddof=1) / math.sqrt(v.size))


def summarize(reports: dict[str, list[RunReport]]) -> list[SummaryRow]:
    rows = []
    for name, reps in reports.items():
        for metric in METRICS:
            if metric == "lpips":
                rows.append(SummaryRow(name, metric, None, None))
                continue
            vals = [r.metrics[metric] for r in reps if r.ok]
            rows.append(SummaryRow(name, metric, *_mean_se(vals)))
    return rows


def _failed_batch(trials: int, N: int, dim: int, message: str) -> BatchResult:
    return BatchResult(
        np.full((trials, dim), np.nan),
        np.full((N, trials), np.nan),
        {t: message for t in range(trials)},
    )


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Run every configured sampler on the same trials.

    Trials are the chains of one batched run per method and all methods share
    the seed base, so chain t of every method sees the same measurement and
    the same noise keys. A failure in one trial leaves the others intact.
    """
    op, T = config.operator, config.trials
    truths, ys = paired_trials(config.prior, op, T, config.noise_sigma, config.seed)
    y = Measurement(ys, op.name, config.noise_sigma)
    reports, traces = {}, {}
    for name, spec in config.samplers.items():
        try:
            result = run_batch(spec, config.prior, op, y, config.schedule, chains=T, autoencoder=config.autoencoder)
        except (ArithmeticError, ValueError, np.linalg.LinAlgError) as err:
            result = _failed_batch(T, config.schedule.outer_steps, op.input_dim, f"{type(err).__name__}: {err}")
        reports[name] = [make_report(result, spec, op, ys[t], t, truths[t]) for t in range(T)]
        traces[name] = result.trace
    return ExperimentResult(config, truths, ys, reports, traces, summarize(reports))


def fmt(value) -> str:
    """Deterministic text for a CSV cell."""
    if value is None:
        return "null"
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    v = float(value)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def _write(path: Path, rows: list[list]) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        for row in rows:
            fh.write(",".join(c if isinstance(c, str) else fmt(c) for c in row) + "\n")


def emit_reports(result: ExperimentResult, out_dir) -> int:
    """Write summary.csv, trace.csv, trials.csv and run_meta.txt.

    Returns the process exit status: 0 when every trial succeeded, else 1.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = list(result.reports)

    _write(
        out / "summary.csv",
        [["method", "metric", "mean", "stderr"]] + [[r.method, r.metric, r.mean, r.stderr] for r in result.summary],
    )

    rows: list[list] = [["trial", "step"] + names]
    N = result.config.schedule.outer_steps
    for t in range(result.config.trials):
        for step in range(N):
            rows.append([t, step] + [result.traces[n][step, t] for n in names])
    _write(out / "trace.csv", rows)

    rows = [["trial", "method", "status"] + list(METRICS)]
    for t in range(result.config.trials):
        for n in names:
            rep = result.reports[n][t]
            rows.append([t, n, "ok" if rep.ok else "failed"] + [rep.metrics.get(m) for m in METRICS])
    _write(out / "trials.csv", rows)

    meta = list(result.config.echo())
    meta.append(("seeds.trial_data", f"default_rng(seed + t) for t in 0..{result.config.trials - 1}"))
    meta.append(("seeds.sampler", str(result.config.seed)))
    for n in names:
        failed = [t for t, r in enumerate(result.reports[n]) if not r.ok]
        meta.append((f"result.{n}.failed_trials", " ".join(map(str, failed)) or "none"))
        for t in failed[:20]:
            meta.append((f"result.{n}.failure.{t}", result.reports[n][t].failure or ""))
    with open(out / "run_meta.txt", "w", newline="\n", encoding="utf-8") as fh:
        for k, v in meta:
            fh.write(f"{k} = {v}\n")
    return 0 if result.ok else 1


def run_sweep(param: str, values: list[str], rebuild) -> list[tuple[str, ExperimentResult]]:
    """Run ``rebuild({param: value})`` for each value; ``rebuild`` returns a config."""
    return [(v, run_experiment(rebuild({param: v}))) for v in values]


def emit_sweep(param: str, results: list[tuple[str, ExperimentResult]], out_dir) -> int:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows: list[list] = [["param", "value", "method", "metric", "mean", "stderr"]]
    status = 0
    for value, res in results:
        rows += [[param, value, r.method, r.metric, r.mean, r.stderr] for r in res.summary]
        sub = out / f"{param}={value}"
        status = max(status, emit_reports(res, sub))
    _write(out / "sweep.csv", rows)
    return status
