"""Decoupled posterior samplers: DAPS, GDPS, G-SITCOM and G-LatentDAPS.

All state arrays have shape ``(d,)`` for a single chain or ``(B, d)`` for B
independent chains advanced in lockstep. Batched chains share one
:class:`NoiseStream` and take consecutive rows of every draw, so chain 0 of a
batch reproduces the unbatched run with the same seed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    TAG_INIT,
    TAG_LANGEVIN,
    TAG_LATENT_PIXEL,
    TAG_RENOISE,
    AnnealingSchedule,
    DivergenceError,
    Method,
    NoiseStream,
    RunReport,
    SamplerSpec,
    Signal,
    alpha_bar,
    inner_grid,
)
from .metrics import psnr, residual, ssim
from .operators import DecodedOperator, ForwardOperator, data_consistency_grad
from .score import GaussianMixturePrior, ScoreModel, tweedie_vp

GUARD_NORM = 1e6


class DivergenceGuard:
    """Checks chain states after every update.

    In strict mode the first bad chain raises :class:`DivergenceError`.
    Otherwise the offending chains are recorded with the step that broke them
    and reset to zero so the rest of the batch can continue.
    """

    def __init__(self, strict: bool = True, threshold: float = GUARD_NORM):
        self.strict = strict
        self.threshold = threshold
        self.failures: dict[int, str] = {}

    def __call__(self, x: np.ndarray, where: str) -> np.ndarray:
        flat = x.reshape(-1, x.shape[-1])
        with np.errstate(over="ignore", invalid="ignore"):
            norms = np.sqrt(np.sum(flat**2, axis=1))
        bad = ~np.isfinite(norms) | (norms > self.threshold)
        if not bad.any():
            return x
        chains = np.flatnonzero(bad).tolist()
        if self.strict:
            raise DivergenceError(where, chains)
        for c in chains:
            self.failures.setdefault(c, f"diverged at {where}")
        return np.where(bad[:, None], 0.0, flat).reshape(x.shape)


def _guard(guard):
    return DivergenceGuard() if guard is None else guard


class LinearAutoencoder:
    """Decoder with orthonormal columns; the encoder is its transpose."""

    def __init__(self, decoder):
        D = np.asarray(decoder, dtype=float)
        if D.ndim != 2 or D.shape[1] > D.shape[0]:
            raise ValueError("decoder must be d x m with m <= d")
        if not np.allclose(D.T @ D, np.eye(D.shape[1]), atol=1e-10):
            raise ValueError("decoder columns must be orthonormal")
        self.decoder = D
        self.dim, self.latent_dim = D.shape

    @classmethod
    def random(cls, d: int, m: int, seed: int = 0) -> "LinearAutoencoder":
        q, r = np.linalg.qr(np.random.default_rng(seed).standard_normal((d, m)))
        return cls(q * np.sign(np.diag(r)))

    @classmethod
    def identity(cls, d: int) -> "LinearAutoencoder":
        return cls(np.eye(d))

    def encode(self, x):
        return np.asarray(x, dtype=float) @ self.decoder

    def decode(self, z):
        return np.asarray(z, dtype=float) @ self.decoder.T

    def project(self, x):
        return self.decode(self.encode(x))


# ---------------------------------------------------------------------------
# primitives


def reverse_ode_step(model: ScoreModel, x, sigma_from: float, sigma_to: float) -> np.ndarray:
    """One Euler step of dx/dsigma = -sigma * score(x, sigma), from sigma_from down to sigma_to."""
    if not sigma_from > sigma_to >= 0:
        raise ValueError(f"need sigma_from > sigma_to >= 0, got {sigma_from}, {sigma_to}")
    x = np.asarray(x, dtype=float)
    return x + sigma_from * model.score(x, sigma_from) * (sigma_from - sigma_to)


def guided_reverse(
    model: ScoreModel,
    op: ForwardOperator,
    y,
    x_t,
    sigma_from: float,
    gamma: float,
    n: int = 5,
    *,
    sigma_min: float = 0.01,
    grid=None,
    guard: Optional[DivergenceGuard] = None,
) -> np.ndarray:
    """Probability-flow ODE from sigma_from to 0, each Euler step followed by a
    data-consistency gradient step of size gamma. gamma = 0 is the plain reverse."""
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    guard = _guard(guard)
    grid = inner_grid(sigma_from, sigma_min, n) if grid is None else np.asarray(grid)
    y = np.asarray(y, dtype=float)
    x = np.asarray(x_t, dtype=float)
    for k in range(len(grid) - 1):
        x = reverse_ode_step(model, x, grid[k], grid[k + 1])
        if gamma:
            x = x - gamma * data_consistency_grad(op, x, y)
        x = guard(x, f"reverse step {k + 1}/{len(grid) - 1} (sigma={grid[k]:.4g})")
    return x


def langevin_posterior(
    anchor,
    op: ForwardOperator,
    y,
    r_t: float,
    beta_y: float,
    eta: float,
    n_steps: int,
    rng: NoiseStream,
    key: tuple = (),
    *,
    init=None,
    noise: bool = True,
    guard: Optional[DivergenceGuard] = None,
) -> np.ndarray:
    """Unadjusted Langevin on |x - anchor|^2/(2 r^2) + |A(x) - y|^2/(2 beta^2).

    Step j draws its noise from ``rng.normal(shape, *key, j)``. ``noise=False``
    turns the chain into plain gradient descent (test hook).
    """
    if not (r_t > 0 and beta_y > 0 and eta > 0):
        raise ValueError("r_t, beta_y and eta must be positive")
    guard = _guard(guard)
    anchor = np.asarray(anchor, dtype=float)
    y = np.asarray(y, dtype=float)
    x = anchor.copy() if init is None else np.array(init, dtype=float)
    inv_r2, inv_b2 = 1.0 / r_t**2, 1.0 / beta_y**2
    scale = np.sqrt(2.0 * eta)
    for j in range(n_steps):
        grad = (x - anchor) * inv_r2 + op.vjp(x, op.apply(x) - y) * inv_b2
        x = x - eta * grad
        if noise:
            x = x + scale * rng.normal(x.shape, *key, j)
        x = guard(x, f"Langevin step {j + 1}/{n_steps}")
    return x


def renoise(x, sigma_next: float, rng: NoiseStream, key: tuple = ()) -> np.ndarray:
    if sigma_next < 0:
        raise ValueError("sigma_next must be >= 0")
    x = np.asarray(x, dtype=float)
    if sigma_next == 0:
        return x.copy()
    return x + sigma_next * rng.normal(x.shape, *key)


def langevin_step_size(spec: SamplerSpec, r_t: float, beta_y: float, op: ForwardOperator) -> float:
    if spec.eta_rule == "fixed":
        return spec.langevin_eta
    curvature = 1.0 / r_t**2 + op.norm_bound**2 / beta_y**2
    return spec.langevin_eta / curvature


def tweedie_vp_vjp(model: ScoreModel, v, sigma: float, u, h: float = 1e-5) -> np.ndarray:
    """u^T d(tweedie_vp)/dv.

    The VE Tweedie Jacobian I + sigma^2 Hess(log p_sigma) is symmetric, so its
    transpose-product equals a directional derivative. That derivative is
    exact for a single Gaussian and a central difference along u otherwise.
    """
    s = np.sqrt(alpha_bar(sigma))
    u = np.asarray(u, dtype=float)
    if isinstance(model, GaussianMixturePrior) and model.n_components == 1:
        return (u @ model.tweedie_jacobian(sigma)) / s
    x = np.asarray(v, dtype=float) / s
    norm = np.sqrt(np.sum(u**2, axis=-1, keepdims=True))
    unit = np.divide(u, norm, out=np.zeros_like(u), where=norm > 0)
    plus = x + h * unit
    minus = x - h * unit
    t_plus = plus + sigma**2 * model.score(plus, sigma)
    t_minus = minus + sigma**2 * model.score(minus, sigma)
    return (t_plus - t_minus) / (2 * h) * norm / s


def _sitcom_objective(model, op, y, x_t, v, sigma, lam):
    r = op.apply(tweedie_vp(model, v, sigma)) - y
    return np.sum(r**2, axis=-1) + lam * np.sum((x_t - v) ** 2, axis=-1)


def sitcom_inner_solve(
    model: ScoreModel,
    op: ForwardOperator,
    y,
    x_t,
    sigma: float,
    lam: float,
    K: int,
    step: float,
    *,
    guard: Optional[DivergenceGuard] = None,
    max_halvings: int = 20,
) -> np.ndarray:
    """Descent on |A(tweedie_vp(v)) - y|^2 + lam |x_t - v|^2 starting from v = x_t.

    Each of the K iterations tries ``step``, halving up to ``max_halvings``
    times until the objective decreases; chains that never decrease stay put.
    Works in VP coordinates at noise level sigma.
    """
    if lam < 0 or K < 1 or not step > 0:
        raise ValueError("need lam >= 0, K >= 1, step > 0")
    guard = _guard(guard)
    y = np.asarray(y, dtype=float)
    x_t = np.asarray(x_t, dtype=float)
    v = x_t.copy()
    f = _sitcom_objective(model, op, y, x_t, v, sigma, lam)
    if not np.all(np.isfinite(f)):
        guard(np.where(np.isfinite(f)[..., None], v, np.nan), "SITCOM objective at start")
    for k in range(K):
        x0 = tweedie_vp(model, v, sigma)
        u = 2.0 * op.vjp(x0, op.apply(x0) - y)
        g = tweedie_vp_vjp(model, v, sigma, u) + 2.0 * lam * (v - x_t)
        pending = np.ones(f.shape, dtype=bool)
        t = step
        for _ in range(max_halvings + 1):
            cand = v - t * g
            with np.errstate(over="ignore", invalid="ignore"):
                fc = _sitcom_objective(model, op, y, x_t, cand, sigma, lam)
            take = pending & (fc < f)
            if take.any():
                v = np.where(take[..., None], cand, v)
                f = np.where(take, fc, f)
                pending &= ~take
            if not pending.any():
                break
            t *= 0.5
        v = guard(v, f"SITCOM inner iteration {k + 1}/{K}")
    return v


# ---------------------------------------------------------------------------
# full samplers


@dataclass
class BatchResult:
    """Raw output of a batched run: samples (B, d), residual trace (N, B)."""

    samples: np.ndarray
    trace: np.ndarray
    failures: dict[int, str] = field(default_factory=dict)
    wall_time_ms: float = 0.0


def _start(spec, chains, dim):
    shape = (dim,) if chains is None else (int(chains), dim)
    return NoiseStream(spec.seed), shape, DivergenceGuard(strict=False)


def _y(y):
    return np.asarray(getattr(y, "values", y), dtype=float)


def _noise_sigma(y, default=0.05):
    return float(getattr(y, "noise_sigma", default))


def sample_gdps(
    model: ScoreModel,
    op: ForwardOperator,
    y,
    schedule: AnnealingSchedule,
    spec: SamplerSpec,
    chains: Optional[int] = None,
) -> BatchResult:
    """DAPS / GDPS annealing loop (reverse with guidance, Langevin, re-noise)."""
    if spec.method not in (Method.DAPS, Method.GDPS):
        raise ValueError(f"sample_gdps cannot run {spec.method.value}")
    t0 = time.perf_counter()
    stream, shape, guard = _start(spec, chains, op.input_dim)
    yv = _y(y)
    beta = spec.resolved_beta(_noise_sigma(y))
    gamma = spec.gamma if spec.method is Method.GDPS else 0.0
    N = schedule.outer_steps
    trace = np.zeros((N,) + shape[:-1])
    with np.errstate(over="ignore", invalid="ignore"):
        x = schedule.sigma_max * stream.normal(shape, TAG_INIT)
        for step, i in enumerate(range(N, 0, -1)):
            s = schedule.sigma_at(i)
            x0 = guided_reverse(model, op, yv, x, s, gamma, grid=schedule.inner_grid(s), guard=guard)
            if i > 1 or spec.final_langevin:
                r = spec.r_scale * s
                eta = langevin_step_size(spec, r, beta, op)
                x0 = langevin_posterior(
                    x0, op, yv, r, beta, eta, spec.langevin_steps, stream, (TAG_LANGEVIN, i), guard=guard
                )
            trace[step] = residual(op, x0, yv)
            if i > 1:
                x = renoise(x0, schedule.sigma_at(i - 1), stream, (TAG_RENOISE, i))
    return BatchResult(x0, trace, dict(guard.failures), (time.perf_counter() - t0) * 1e3)


def sample_g_latentdaps(
    latent_model: ScoreModel,
    autoencoder: LinearAutoencoder,
    op: ForwardOperator,
    y,
    schedule: AnnealingSchedule,
    spec: SamplerSpec,
    chains: Optional[int] = None,
) -> BatchResult:
    """Two-stage latent sampler; returned samples are decoded to pixel space.

    Stage 1 runs the unguided latent reverse, decodes, and refines in pixel
    space before encoding. Stage 2 runs the guided latent reverse from the same
    noisy latent and refines in latent space through the decoder. With
    ``stage2_init="stage1"`` the latent chain starts from the stage-1 result,
    otherwise from its own anchor.
    """
    if op.input_dim != autoencoder.dim:
        raise ValueError("operator input does not match decoder output")
    if latent_model.dim != autoencoder.latent_dim:
        raise ValueError("latent model dimension does not match autoencoder")
    t0 = time.perf_counter()
    stream, shape, guard = _start(spec, chains, autoencoder.latent_dim)
    latent_op = DecodedOperator(op, autoencoder)
    yv = _y(y)
    beta = spec.resolved_beta(_noise_sigma(y))
    N = schedule.outer_steps
    trace = np.zeros((N,) + shape[:-1])
    with np.errstate(over="ignore", invalid="ignore"):
        z = schedule.sigma_max * stream.normal(shape, TAG_INIT)
        for step, i in enumerate(range(N, 0, -1)):
            s = schedule.sigma_at(i)
            grid = schedule.inner_grid(s)
            refine = i > 1 or spec.final_langevin
            r = spec.r_scale * s
            eta = langevin_step_size(spec, r, beta, op)

            z_init = None
            if spec.stage2_init == "stage1":
                z0 = guided_reverse(latent_model, latent_op, yv, z, s, 0.0, grid=grid, guard=guard)
                x0 = autoencoder.decode(z0)
                if refine:
                    x0 = langevin_posterior(
                        x0, op, yv, r, beta, eta, spec.langevin_steps, stream, (TAG_LATENT_PIXEL, i), guard=guard
                    )
                z_init = autoencoder.encode(x0)

            z0 = guided_reverse(latent_model, latent_op, yv, z, s, spec.gamma, grid=grid, guard=guard)
            if refine:
                z0 = langevin_posterior(
                    z0,
                    latent_op,
                    yv,
                    r,
                    beta,
                    eta,
                    spec.langevin_steps,
                    stream,
                    (TAG_LANGEVIN, i),
                    init=z_init,
                    guard=guard,
                )
            trace[step] = residual(latent_op, z0, yv)
            if i > 1:
                z = renoise(z0, schedule.sigma_at(i - 1), stream, (TAG_RENOISE, i))
    return BatchResult(autoencoder.decode(z0), trace, dict(guard.failures), (time.perf_counter() - t0) * 1e3)


def sample_g_sitcom(
    model: ScoreModel,
    op: ForwardOperator,
    y,
    schedule: AnnealingSchedule,
    spec: SamplerSpec,
    chains: Optional[int] = None,
) -> BatchResult:
    """SITCOM-style loop in VP coordinates with a guidance step on the Tweedie estimate.

    The VP schedule is abar_i = 1 / (1 + sigma_{t_i}^2) on the same ladder.
    """
    t0 = time.perf_counter()
    stream, shape, guard = _start(spec, chains, op.input_dim)
    yv = _y(y)
    N = schedule.outer_steps
    trace = np.zeros((N,) + shape[:-1])
    with np.errstate(over="ignore", invalid="ignore"):
        x = stream.normal(shape, TAG_INIT)
        for step, i in enumerate(range(N, 0, -1)):
            s = schedule.sigma_at(i)
            v = sitcom_inner_solve(
                model, op, yv, x, s, spec.lam, spec.sitcom_inner_steps, spec.sitcom_step, guard=guard
            )
            x0 = tweedie_vp(model, v, s)
            if spec.gamma:
                x0 = x0 - spec.gamma * data_consistency_grad(op, x0, yv)
            x0 = guard(x0, f"guidance at outer step {i}")
            trace[step] = residual(op, x0, yv)
            ab = alpha_bar(schedule.sigma_at(i - 1))
            x = np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * stream.normal(shape, TAG_RENOISE, i)
    return BatchResult(x, trace, dict(guard.failures), (time.perf_counter() - t0) * 1e3)


def run_batch(
    spec: SamplerSpec,
    model: ScoreModel,
    op: ForwardOperator,
    y,
    schedule: AnnealingSchedule,
    chains: Optional[int] = None,
    autoencoder: Optional[LinearAutoencoder] = None,
    latent_model: Optional[ScoreModel] = None,
) -> BatchResult:
    """Dispatch on ``spec.method``. The latent sampler needs an autoencoder; its
    latent model defaults to the pushforward of a mixture prior through the encoder."""
    if spec.method in (Method.DAPS, Method.GDPS):
        return sample_gdps(model, op, y, schedule, spec, chains)
    if spec.method is Method.G_SITCOM:
        return sample_g_sitcom(model, op, y, schedule, spec, chains)
    if autoencoder is None:
        raise ValueError("G_LATENTDAPS needs an autoencoder")
    if latent_model is None:
        if not isinstance(model, GaussianMixturePrior):
            raise ValueError("latent model must be given for non-mixture priors")
        latent_model = model.pushforward(autoencoder.decoder.T)
    return sample_g_latentdaps(latent_model, autoencoder, op, y, schedule, spec, chains)


def make_report(
    result: BatchResult,
    spec: SamplerSpec,
    op: ForwardOperator,
    y,
    chain: Optional[int] = None,
    reference=None,
) -> RunReport:
    """Package one chain of a batch (or an unbatched result) as a RunReport."""
    yv = _y(y)
    samples = result.samples if chain is None else result.samples[chain]
    trace = result.trace if chain is None else result.trace[:, chain]
    failure = result.failures.get(0 if chain is None else chain)
    metrics: dict[str, Optional[float]] = {}
    final = None
    if failure is None:
        final = Signal(samples, op.shape)
        metrics["residual"] = float(residual(op, samples, yv))
        if reference is not None:
            ref = np.asarray(reference, dtype=float)
            metrics["psnr"] = psnr(samples, ref)
            metrics["ssim"] = ssim(samples, ref)
            metrics["lpips"] = None
    return RunReport(final, np.array(trace), metrics, spec.seed, result.wall_time_ms, spec, failure)


def _single(result, spec, op, y, reference):
    return make_report(result, spec, op, y, None, reference)


def run_gdps(model, op, y, schedule, spec, reference=None) -> RunReport:
    return _single(sample_gdps(model, op, y, schedule, spec), spec, op, y, reference)


def run_g_sitcom(model, op, y, schedule, spec, reference=None) -> RunReport:
    if spec.method is not Method.G_SITCOM:
        raise ValueError("spec.method must be G_SITCOM")
    return _single(sample_g_sitcom(model, op, y, schedule, spec), spec, op, y, reference)


def run_g_latentdaps(latent_model, autoencoder, op, y, schedule, spec, reference=None) -> RunReport:
    result = sample_g_latentdaps(latent_model, autoencoder, op, y, schedule, spec)
    return _single(result, spec, op, y, reference)
