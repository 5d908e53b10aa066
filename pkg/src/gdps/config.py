"""Experiment configuration: flat ``key = value`` text with dotted prefixes.

Example::

    # 2-d mixture, Gaussian blur, DAPS vs GDPS
    prior.preset = canonical2d
    operator.kind = gaussian_blur
    operator.size = 3
    sampler.daps.method = DAPS
    sampler.gdps.method = GDPS
    sampler.gdps.gamma = 0.5
    experiment.trials = 100

Unknown keys, duplicate keys, malformed values and missing files are
:class:`ConfigError` with the offending line or key in the message.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

from .benchmarks import PRESETS
from .core import AnnealingSchedule, Method, SamplerSpec, build_schedule
from .operators import ForwardOperator, load_vector_csv, make_operator
from .samplers import LinearAutoencoder
from .score import GaussianMixturePrior


class ConfigError(ValueError):
    pass


# Task code of each operator kind; kinds without a code need an explicit gamma.
TASK_OF_KIND = {
    "downsample": "SR",
    "box_inpaint": "IB",
    "random_inpaint": "IR",
    "gaussian_blur": "GD",
    "motion_blur": "MD",
    "dft_magnitude": "PR",
    "nonlinear_blur": "ND",
    "hdr": "HDR",
}

# Guidance step per task for each guided method.
DEFAULT_GAMMA = {
    Method.GDPS: {"SR": 2.0, "IB": 3.0, "IR": 5.0, "GD": 10.0, "MD": 8.0, "PR": 7.0, "ND": 1.0, "HDR": 2.0},
    Method.G_LATENTDAPS: {"SR": 3.0, "IB": 1.0, "IR": 6.0, "GD": 2.0, "MD": 3.0, "PR": 8.0, "ND": 3.0, "HDR": 1.0},
    Method.G_SITCOM: {"SR": 7.0, "IB": 0.5, "IR": 0.5, "GD": 1.0, "MD": 0.5, "PR": 4.0, "ND": 0.1, "HDR": 0.1},
}

# Harder tasks use a longer ladder and finer inner grid.
LONG_TASKS = ("PR", "ND")


def _float(v: str) -> float:
    return float(v)


def _int(v: str) -> int:
    f = float(v)
    if not f.is_integer():
        raise ValueError(f"expected an integer, got {v!r}")
    return int(f)


def _bool(v: str) -> bool:
    low = v.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected a boolean, got {v!r}")


def _str(v: str) -> str:
    return v


def _optional_float(v: str) -> Optional[float]:
    return None if v.lower() in ("none", "auto") else float(v)


def _vector(v: str) -> np.ndarray:
    return np.array([float(t) for t in v.replace(",", " ").split()])


def _rows(v: str) -> list[np.ndarray]:
    """Semicolon-separated rows of whitespace/comma separated numbers."""
    return [_vector(r) for r in v.split(";") if r.strip()]


def _shape(v: str) -> tuple[int, ...]:
    return tuple(_int(t) for t in v.replace(",", " ").replace("x", " ").split())


_KEYS: dict[str, Callable[[str], Any]] = {
    "prior.preset": _str,
    "prior.file": _str,
    "prior.shape": _shape,
    "prior.weights": _vector,
    "prior.means": _rows,
    "prior.variances": _vector,
    "prior.covariances": _rows,
    "operator.kind": _str,
    "operator.size": _int,
    "operator.std": _float,
    "operator.factor": _int,
    "operator.drop_fraction": _float,
    "operator.mask_seed": _int,
    "operator.top": _int,
    "operator.left": _int,
    "operator.height": _int,
    "operator.width": _int,
    "operator.oversampling": _float,
    "operator.alpha": _float,
    "operator.gain": _float,
    "operator.kernel_file": _str,
    "operator.kernel_shape": _shape,
    "operator.mask_file": _str,
    "measurement.sigma": _float,
    "schedule.sigma_min": _float,
    "schedule.sigma_max": _float,
    "schedule.outer_steps": _int,
    "schedule.inner_steps": _int,
    "schedule.rho": _float,
    "latent.dim": _int,
    "latent.seed": _int,
    "experiment.task": _str,
    "experiment.trials": _int,
    "experiment.seed": _int,
    "experiment.out_dir": _str,
}

_SAMPLER_KEYS: dict[str, Callable[[str], Any]] = {
    "method": _str,
    "gamma": _float,
    "langevin_steps": _int,
    "langevin_eta": _float,
    "eta_rule": _str,
    "beta_y": _optional_float,
    "r_scale": _float,
    "lambda": _float,
    "sitcom_inner_steps": _int,
    "sitcom_step": _float,
    "final_langevin": _bool,
    "stage2_init": _str,
}

_SPEC_FIELD = {"lambda": "lam"}


@dataclass
class ExperimentConfig:
    prior: GaussianMixturePrior
    shape: tuple[int, ...]
    operator: ForwardOperator
    operator_params: dict[str, Any]
    schedule: AnnealingSchedule
    samplers: dict[str, SamplerSpec]
    noise_sigma: float = 0.05
    trials: int = 1
    seed: int = 0
    out_dir: str = "out"
    task: Optional[str] = None
    autoencoder: Optional[LinearAutoencoder] = None
    entries: dict[str, str] = field(default_factory=dict)

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        """Copy with experiment-level fields replaced (trials, seed, out_dir)."""
        entries = dict(self.entries)
        for k, v in overrides.items():
            if v is not None:
                entries[f"experiment.{k}"] = str(v)
        return build_config(entries, Path("."))

    def echo(self) -> list[tuple[str, str]]:
        """Every resolved setting as sorted ``(key, value)`` pairs."""
        out = dict(self.entries)
        out["schedule.sigma_min"] = repr(self.schedule.sigma_min)
        out["schedule.sigma_max"] = repr(self.schedule.sigma_max)
        out["schedule.outer_steps"] = str(self.schedule.outer_steps)
        out["schedule.inner_steps"] = str(self.schedule.inner_steps)
        out["schedule.rho"] = repr(self.schedule.rho)
        out["measurement.sigma"] = repr(self.noise_sigma)
        out["experiment.trials"] = str(self.trials)
        out["experiment.seed"] = str(self.seed)
        out["experiment.task"] = str(self.task)
        for k, v in self.operator_params.items():
            if np.ndim(v) == 0:
                out[f"operator.{'mask_seed' if k == 'seed' else k}"] = repr(v) if isinstance(v, float) else str(v)
        for name, spec in self.samplers.items():
            for k, v in spec.as_dict().items():
                if k != "seed":
                    out[f"sampler.{name}.{k}"] = repr(v) if isinstance(v, float) else str(v)
        return sorted(out.items())


def read_entries(text: str, source: str = "<config>") -> dict[str, str]:
    """Raw ``key -> value`` map; syntax errors cite the line number."""
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        if not key or not value:
            raise ConfigError(f"{source}:{lineno}: empty key or value")
        if key in entries:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        _converter(key, f"{source}:{lineno}")
        entries[key] = value
    return entries


def _converter(key: str, where: str):
    if key in _KEYS:
        return _KEYS[key]
    parts = key.split(".")
    if len(parts) == 3 and parts[0] == "sampler" and parts[1] and parts[2] in _SAMPLER_KEYS:
        return _SAMPLER_KEYS[parts[2]]
    raise ConfigError(f"{where}: unknown key {key!r}")


def _typed(entries: dict[str, str]) -> dict[str, Any]:
    out = {}
    for key, value in entries.items():
        conv = _converter(key, "override")
        try:
            out[key] = conv(value)
        except ValueError as err:
            raise ConfigError(f"invalid value for {key!r}: {err}") from None
    return out


def _resolve(path: str, base: Path) -> Path:
    p = Path(path)
    if not p.is_absolute():
        p = base / p
    if not p.is_file():
        raise ConfigError(f"referenced file does not exist: {path}")
    return p


def _build_prior(c: dict[str, Any], base: Path) -> GaussianMixturePrior:
    sources = [k for k in ("prior.preset", "prior.file", "prior.means") if k in c]
    if len(sources) != 1:
        raise ConfigError("exactly one of prior.preset, prior.file, prior.means is required")
    if "prior.preset" in c:
        name = c["prior.preset"]
        if name not in PRESETS:
            raise ConfigError(f"prior.preset: unknown preset {name!r}")
        return PRESETS[name]()
    if "prior.file" in c:
        try:
            data = json.loads(_resolve(c["prior.file"], base).read_text())
            return GaussianMixturePrior(data["weights"], data["means"], data["covariances"])
        except (KeyError, json.JSONDecodeError, ValueError) as err:
            raise ConfigError(f"prior.file: {err}") from None
    means = np.array(c["prior.means"]) if len({m.size for m in c["prior.means"]}) == 1 else None
    if means is None:
        raise ConfigError("prior.means: rows have different lengths")
    C, d = means.shape
    weights = c.get("prior.weights", np.full(C, 1.0 / C))
    try:
        if "prior.covariances" in c:
            if "prior.variances" in c:
                raise ConfigError("give prior.variances or prior.covariances, not both")
            covs = np.array([r.reshape(d, d) for r in c["prior.covariances"]])
            return GaussianMixturePrior(weights, means, covs)
        return GaussianMixturePrior.isotropic(weights, means, c.get("prior.variances", np.ones(1)))
    except ValueError as err:
        raise ConfigError(f"prior: {err}") from None


def _build_operator(c: dict[str, Any], shape, base: Path):
    if "operator.kind" not in c:
        raise ConfigError("operator.kind is required")
    kind = c["operator.kind"]
    params: dict[str, Any] = {}
    for key, value in c.items():
        if key.startswith("operator.") and key not in ("operator.kind", "operator.kernel_shape"):
            params[key.split(".", 1)[1]] = value
    if "mask_seed" in params:
        params["seed"] = params.pop("mask_seed")
    elif kind == "random_inpaint":
        params["seed"] = 0
    if "kernel_file" in params:
        kernel = load_vector_csv(_resolve(params.pop("kernel_file"), base))
        kshape = c.get("operator.kernel_shape")
        if kshape is None:
            side = round(kernel.size ** (1.0 / len(shape)))
            kshape = (side,) * len(shape)
        try:
            params["kernel"] = kernel.reshape(kshape)
        except ValueError:
            raise ConfigError(f"operator.kernel_file: {kernel.size} values do not fit shape {kshape}") from None
    if "mask_file" in params:
        params["keep"] = load_vector_csv(_resolve(params.pop("mask_file"), base), dtype=int)
    try:
        op = make_operator(kind, shape, **params)
    except KeyError as err:
        raise ConfigError(f"operator.{err.args[0]} is required for kind {kind!r}") from None
    except (TypeError, ValueError) as err:
        raise ConfigError(f"operator: {err}") from None
    return op, params


def _build_samplers(c: dict[str, Any], task: Optional[str], seed: int) -> dict[str, SamplerSpec]:
    grouped: dict[str, dict[str, Any]] = {}
    for key, value in c.items():
        if key.startswith("sampler."):
            _, name, field_name = key.split(".")
            grouped.setdefault(name, {})[field_name] = value
    if not grouped:
        grouped = {"daps": {"method": "DAPS"}, "gdps": {"method": "GDPS"}}
    specs = {}
    for name in sorted(grouped):
        fields = grouped[name]
        if "method" not in fields:
            raise ConfigError(f"sampler.{name}.method is required")
        try:
            method = Method(fields["method"].upper())
        except ValueError:
            raise ConfigError(f"sampler.{name}.method: unknown method {fields['method']!r}") from None
        kwargs = {_SPEC_FIELD.get(k, k): v for k, v in fields.items() if k != "method"}
        if method is not Method.DAPS and "gamma" not in kwargs:
            if task is None:
                raise ConfigError(f"sampler.{name}.gamma is required (no task default for this operator)")
            kwargs["gamma"] = DEFAULT_GAMMA[method][task]
        try:
            specs[name] = SamplerSpec(method=method, seed=seed, **kwargs)
        except ValueError as err:
            raise ConfigError(f"sampler.{name}: {err}") from None
    return specs


def build_config(entries: dict[str, str], base: Path) -> ExperimentConfig:
    """Validate raw entries (relative file paths resolve against ``base``)."""
    c = _typed(entries)
    prior = _build_prior(c, base)
    shape = c.get("prior.shape", (prior.dim,))
    if int(np.prod(shape)) != prior.dim:
        raise ConfigError(f"prior.shape {shape} does not match prior dimension {prior.dim}")
    op, params = _build_operator(c, shape, base)

    task = c.get("experiment.task", TASK_OF_KIND.get(c["operator.kind"].lower()))
    if task is not None and task not in DEFAULT_GAMMA[Method.GDPS]:
        raise ConfigError(f"experiment.task: unknown task {task!r}")
    long_task = task in LONG_TASKS
    try:
        schedule = build_schedule(
            c.get("schedule.sigma_min", 0.01),
            c.get("schedule.sigma_max", 100.0),
            c.get("schedule.outer_steps", 400 if long_task else 200),
            c.get("schedule.inner_steps", 10 if long_task else 5),
            c.get("schedule.rho", 7.0),
        )
    except ValueError as err:
        raise ConfigError(f"schedule: {err}") from None

    trials = c.get("experiment.trials", 1)
    if trials < 1:
        raise ConfigError("experiment.trials must be >= 1")
    seed = c.get("experiment.seed", 0)
    if not 0 <= seed < 2**63:
        raise ConfigError("experiment.seed must be a nonnegative 63-bit integer")
    noise_sigma = c.get("measurement.sigma", 0.05)
    if noise_sigma < 0:
        raise ConfigError("measurement.sigma must be >= 0")

    samplers = _build_samplers(c, task, seed)
    autoencoder = None
    if any(s.method is Method.G_LATENTDAPS for s in samplers.values()):
        if "latent.dim" not in c:
            raise ConfigError("latent.dim is required for G_LATENTDAPS")
        m = c["latent.dim"]
        if not 1 <= m <= prior.dim:
            raise ConfigError(f"latent.dim must be in [1, {prior.dim}]")
        autoencoder = LinearAutoencoder.random(prior.dim, m, c.get("latent.seed", 0))

    return ExperimentConfig(
        prior=prior,
        shape=tuple(shape),
        operator=op,
        operator_params=params,
        schedule=schedule,
        samplers=samplers,
        noise_sigma=noise_sigma,
        trials=trials,
        seed=seed,
        out_dir=c.get("experiment.out_dir", "out"),
        task=task,
        autoencoder=autoencoder,
        entries={k: v for k, v in entries.items()},
    )


def parse_config(path, overrides: Optional[dict[str, str]] = None) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err.strerror}") from None
    entries = read_entries(text, str(path))
    for key, value in (overrides or {}).items():
        _converter(key, "override")
        entries[key] = str(value)
    base = path.parent
    # Store file references as absolute paths so the config can be rebuilt anywhere.
    for key in ("prior.file", "operator.kernel_file", "operator.mask_file"):
        if key in entries:
            entries[key] = str(_resolve(entries[key], base).resolve())
    return build_config(entries, base)
