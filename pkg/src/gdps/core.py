"""Shared domain types, the seeded noise stream, and the annealing ladder."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np


class DivergenceError(RuntimeError):
    """Raised when a sampler state becomes non-finite or leaves the guard ball."""

    def __init__(self, where: str, chains=None):
        self.where = where
        self.chains = [] if chains is None else list(chains)
        msg = f"state diverged at {where}"
        if self.chains:
            msg += f" (chains {self.chains[:8]}{'...' if len(self.chains) > 8 else ''})"
        super().__init__(msg)


@dataclass(frozen=True)
class Signal:
    """Flat real vector carrying the shape it should be viewed with."""

    values: np.ndarray
    shape: tuple[int, ...]

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).reshape(-1)
        shape = tuple(int(s) for s in self.shape)
        if any(s <= 0 for s in shape):
            raise ValueError(f"shape entries must be positive, got {shape}")
        if int(np.prod(shape)) != values.size:
            raise ValueError(f"shape {shape} does not match {values.size} values")
        if not np.all(np.isfinite(values)):
            raise ValueError("signal contains non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "shape", shape)

    @classmethod
    def flat(cls, values) -> "Signal":
        values = np.asarray(values, dtype=float).reshape(-1)
        return cls(values, (values.size,))

    @property
    def dim(self) -> int:
        return self.values.size

    def view(self) -> np.ndarray:
        return self.values.reshape(self.shape)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class Measurement:
    values: np.ndarray
    operator_id: str
    noise_sigma: float

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)


def alpha_bar(sigma):
    """VE noise level -> VP signal fraction, 1 / (1 + sigma^2)."""
    return 1.0 / (1.0 + np.square(sigma))


def sigma_from_alpha_bar(abar):
    abar = np.asarray(abar, dtype=float)
    return np.sqrt(1.0 / abar - 1.0)


@dataclass(frozen=True)
class AnnealingSchedule:
    """Power-rho ladder of outer noise levels plus the inner ODE grid rule.

    ``sigmas`` is stored in decreasing order, so ``sigmas[0] == sigma_max`` is
    the noise level of outer step N and ``sigmas[-1] == sigma_min`` that of
    step 0.
    """

    sigma_min: float
    sigma_max: float
    outer_steps: int
    inner_steps: int
    rho: float
    sigmas: np.ndarray = field(repr=False)

    def sigma_at(self, i: int) -> float:
        """Noise level of outer index i, with i = N the start of sampling."""
        return float(self.sigmas[self.outer_steps - i])

    def inner_grid(self, sigma_from: float) -> np.ndarray:
        return inner_grid(sigma_from, self.sigma_min, self.inner_steps)

    def alpha_bars(self) -> np.ndarray:
        return alpha_bar(self.sigmas)


def inner_grid(sigma_from: float, sigma_min: float, n: int) -> np.ndarray:
    """Decreasing grid of n + 1 levels for the reverse ODE, ending at 0.

    The first n points are geometric from ``sigma_from`` to ``sigma_min``;
    when ``sigma_min`` is 0 (or not below ``sigma_from``) the grid is linear.
    """
    if n < 1:
        raise ValueError("need at least one inner step")
    if n == 1:
        return np.array([float(sigma_from), 0.0])
    if 0 < sigma_min < sigma_from:
        head = np.geomspace(sigma_from, sigma_min, n)
        head[0], head[-1] = sigma_from, sigma_min
        return np.append(head, 0.0)
    return np.linspace(sigma_from, 0.0, n + 1)


def build_schedule(
    sigma_min: float = 0.01,
    sigma_max: float = 100.0,
    N: int = 200,
    n: int = 5,
    rho: float = 7.0,
) -> AnnealingSchedule:
    if not sigma_max > sigma_min >= 0:
        raise ValueError(f"need sigma_max > sigma_min >= 0, got {sigma_max}, {sigma_min}")
    if N < 1 or n < 1:
        raise ValueError(f"step counts must be >= 1, got N={N}, n={n}")
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")
    frac = np.arange(N + 1) / N
    hi, lo = sigma_max ** (1.0 / rho), sigma_min ** (1.0 / rho)
    sigmas = (hi + frac * (lo - hi)) ** rho
    sigmas[0], sigmas[-1] = sigma_max, sigma_min
    if np.any(np.diff(sigmas) >= 0):
        raise ValueError("ladder is not strictly decreasing; increase sigma_max - sigma_min")
    sigmas.setflags(write=False)
    return AnnealingSchedule(float(sigma_min), float(sigma_max), int(N), int(n), float(rho), sigmas)


class NoiseStream:
    """Deterministic keyed source of Gaussian and uniform variates.

    Each draw is addressed by an integer key such as ``(stage, i, j)`` and is
    produced by a fresh PCG64 generator seeded from
    ``SeedSequence([seed, *key])``, so results do not depend on the order in
    which steps are executed. Drawing shape ``(B, d)`` fills rows in order:
    row 0 of a batched draw equals the unbatched draw of shape ``(d,)``.
    """

    def __init__(self, seed: int):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        self.seed = seed

    def generator(self, *key: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence([self.seed, *map(int, key)]))

    def normal(self, shape, *key: int) -> np.ndarray:
        return self.generator(*key).standard_normal(shape)

    def uniform(self, shape, *key: int) -> np.ndarray:
        return self.generator(*key).random(shape)

    def __repr__(self):
        return f"NoiseStream(seed={self.seed})"


def seeded_rng(seed: int) -> NoiseStream:
    return NoiseStream(seed)


# Key prefixes for NoiseStream draws. Stage-2 of the latent sampler reuses the
# pixel sampler's tags so that an identity autoencoder reproduces it exactly.
TAG_INIT = 0
TAG_LANGEVIN = 1
TAG_RENOISE = 2
TAG_LATENT_PIXEL = 3
TAG_TRUTH = 10
TAG_MEASUREMENT = 11
TAG_CHECK = 20


class Method(str, enum.Enum):
    DAPS = "DAPS"
    GDPS = "GDPS"
    G_SITCOM = "G_SITCOM"
    G_LATENTDAPS = "G_LATENTDAPS"


@dataclass(frozen=True)
class SamplerSpec:
    """Method choice plus every tunable that affects a run.

    ``langevin_eta`` is read according to ``eta_rule``: with ``"fixed"`` it is
    the raw Langevin step; with ``"curvature"`` the step at outer level r is
    ``langevin_eta / L`` where ``L = 1/r^2 + |A|^2 / beta_y^2`` bounds the
    curvature of the Langevin potential. ``beta_y=None`` means
    ``max(noise_sigma, 0.01)``. The Langevin prior radius is
    ``r_t = r_scale * sigma_t``.
    """

    method: Method = Method.GDPS
    gamma: float = 0.0
    langevin_steps: int = 100
    langevin_eta: float = 0.1
    eta_rule: str = "curvature"
    beta_y: Optional[float] = None
    r_scale: float = 1.0
    lam: float = 1.0
    sitcom_inner_steps: int = 20
    sitcom_step: float = 0.1
    final_langevin: bool = True
    stage2_init: str = "stage1"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if self.method is Method.DAPS and self.gamma != 0:
            object.__setattr__(self, "gamma", 0.0)
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")
        if self.langevin_steps < 1:
            raise ValueError("langevin_steps must be >= 1")
        if not self.langevin_eta > 0:
            raise ValueError("langevin_eta must be > 0")
        if self.eta_rule not in ("fixed", "curvature"):
            raise ValueError(f"unknown eta_rule {self.eta_rule!r}")
        if self.beta_y is not None and not self.beta_y > 0:
            raise ValueError("beta_y must be > 0")
        if not self.r_scale > 0:
            raise ValueError("r_scale must be > 0")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.sitcom_inner_steps < 1 or not self.sitcom_step > 0:
            raise ValueError("sitcom_inner_steps >= 1 and sitcom_step > 0 required")
        if self.stage2_init not in ("anchor", "stage1"):
            raise ValueError(f"unknown stage2_init {self.stage2_init!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def resolved_beta(self, noise_sigma: float) -> float:
        if self.beta_y is not None:
            return float(self.beta_y)
        return max(float(noise_sigma), 0.01)

    def as_dict(self) -> dict[str, Any]:
        return {
            "method": self.method.value,
            "gamma": self.gamma,
            "langevin_steps": self.langevin_steps,
            "langevin_eta": self.langevin_eta,
            "eta_rule": self.eta_rule,
            "beta_y": self.beta_y,
            "r_scale": self.r_scale,
            "lambda": self.lam,
            "sitcom_inner_steps": self.sitcom_inner_steps,
            "sitcom_step": self.sitcom_step,
            "final_langevin": self.final_langevin,
            "stage2_init": self.stage2_init,
            "seed": self.seed,
        }


@dataclass
class RunReport:
    final_sample: Optional[Signal]
    residual_trace: np.ndarray
    metrics: dict[str, Optional[float]]
    seed: int
    wall_time_ms: float
    spec_echo: SamplerSpec
    failure: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.failure is None
