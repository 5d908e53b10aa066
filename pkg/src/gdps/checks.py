"""Oracle, invariant and benchmark self-checks.

Each ``check_*`` function returns a :class:`CheckResult`; :data:`CHECKS`
maps the check number to its function. Numbers 4 to 7 are the fast set run
by ``gdps check``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .benchmarks import blur_2d, canonical_gmm_2d, conjugate_problem, paired_trials, phase_problem
from .core import TAG_CHECK, Measurement, Method, NoiseStream, SamplerSpec, alpha_bar, build_schedule
from .metrics import psnr
from .operators import (
    ConvBlurOp,
    DecodedOperator,
    DftMagnitudeOp,
    HdrOp,
    LinearOperator,
    MaskOp,
    data_consistency_grad,
    make_operator,
    measure,
)
from .oracle import conjugate_posterior, grid_posterior_moments, sample_moments
from .samplers import (
    LinearAutoencoder,
    guided_reverse,
    langevin_posterior,
    run_gdps,
    sample_g_latentdaps,
    sample_g_sitcom,
    sample_gdps,
)
from .score import GaussianMixturePrior, tweedie_denoise, tweedie_vp


@dataclass(frozen=True)
class CheckResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] criterion {self.number}: {self.name} ({self.seconds:.1f}s) {self.detail}"


def _timed(number, name, fn, *args, **kwargs) -> CheckResult:
    t0 = time.perf_counter()
    passed, detail = fn(*args, **kwargs)
    return CheckResult(number, name, bool(passed), detail, time.perf_counter() - t0)


def _fmt(v) -> str:
    return np.array2string(np.asarray(v), precision=4, separator=", ")


# --- 1 / 9: conjugate oracle -------------------------------------------------


def conjugate_match(N=50, n=5, chains=500, gamma=1e-3, seed=0, check_cov=True):
    prob = conjugate_problem()
    post = conjugate_posterior(
        prob.prior.means[0], prob.prior.covariances[0], prob.op.dense(), prob.y.values, prob.y.noise_sigma
    )
    spec = SamplerSpec(method=Method.GDPS, gamma=gamma, seed=seed)
    res = sample_gdps(prob.prior, prob.op, prob.y, build_schedule(N=N, n=n), spec, chains)
    mean, cov, se = sample_moments(res.samples)
    z = np.abs(mean - post.mean) / se
    frob = np.linalg.norm(cov - post.covariance) / np.linalg.norm(post.covariance)
    ok = not res.failures and bool(np.all(z <= 3.0))
    detail = f"N={N} n={n} |z|={_fmt(z)} cov_err={frob:.3f}"
    if check_cov:
        ok = ok and frob < 0.10
    return ok, detail


def check_conjugate() -> CheckResult:
    return _timed(1, "conjugate oracle (500 GDPS runs)", conjugate_match)


def _stability():
    parts, ok = [], True
    for N in (100, 200):
        for n in (5, 10):
            passed, detail = conjugate_match(N=N, n=n, check_cov=False)
            ok &= passed
            parts.append(detail)
    return ok, "; ".join(parts)


def check_stability() -> CheckResult:
    return _timed(9, "posterior-mean match over (N, n) grid", _stability)


# --- 2: brute-force oracle, phase retrieval ----------------------------------


def _phase(chains=1000, gamma=1e-3, seed=0):
    prob = phase_problem()
    std = np.sqrt(prob.prior.covariances[:, 0, 0].max())
    bounds = [(prob.prior.means[:, k].min() - 7 * std, prob.prior.means[:, k].max() + 7 * std) for k in range(2)]
    mean_ref, _ = grid_posterior_moments(prob.prior, prob.op, prob.y.values, prob.y.noise_sigma, bounds, 600)
    spec = SamplerSpec(method=Method.GDPS, gamma=gamma, seed=seed)
    res = sample_gdps(prob.prior, prob.op, prob.y, build_schedule(N=400, n=10), spec, chains)
    mean, _, se = sample_moments(res.samples)
    z = np.abs(mean - mean_ref) / se
    ok = not res.failures and bool(np.all(z <= 3.0))
    return ok, f"oracle mean={_fmt(mean_ref)} sample mean={_fmt(mean)} |z|={_fmt(z)}"


def check_phase() -> CheckResult:
    return _timed(2, "grid oracle, DFT magnitude (1000 GDPS runs)", _phase)


# --- 3: directional benchmark ------------------------------------------------


def _directional(trials=100, gammas=(0.5, 2.0, 10.0), seed=0):
    prior, op = canonical_gmm_2d(), blur_2d()
    truths, ys = paired_trials(prior, op, trials, 0.05, seed)
    y = Measurement(ys, op.name, 0.05)
    schedule = build_schedule()

    def score(spec):
        res = sample_gdps(prior, op, y, schedule, spec, trials)
        good = [t for t in range(trials) if t not in res.failures]
        r = np.sum((op.apply(res.samples) - ys) ** 2, axis=-1)
        p = [psnr(res.samples[t], truths[t]) for t in good]
        return len(res.failures), float(np.mean(r[good])) if good else np.inf, float(np.mean(p)) if p else -np.inf

    _, daps_r, daps_p = score(SamplerSpec(method=Method.DAPS, seed=seed))
    parts = [f"DAPS res={daps_r:.3g} psnr={daps_p:.2f}"]
    best = None
    for g in gammas:
        fails, r, p = score(SamplerSpec(method=Method.GDPS, gamma=g, seed=seed))
        parts.append(f"GDPS(gamma={g}) failed={fails} res={r:.3g} psnr={p:.2f}")
        if fails == 0 and (best is None or r < best[1]):
            best = (g, r, p)
    if best is None:
        return False, "; ".join(parts) + "; no gamma without divergence"
    ok = best[1] <= daps_r and best[2] >= daps_p
    return ok, "; ".join(parts) + f"; best gamma={best[0]}"


def check_directional() -> CheckResult:
    return _timed(3, "GDPS vs DAPS, canonical 2-d blur benchmark", _directional)


# --- 4: gamma = 0 reduction --------------------------------------------------


def _random_setup(rng: np.random.Generator):
    d = int(rng.choice([2, 4, 6]))
    C = int(rng.integers(1, 4))
    prior = GaussianMixturePrior.isotropic(
        np.full(C, 1.0 / C), rng.uniform(0, 1, (C, d)), rng.uniform(0.005, 0.05, C)
    )
    kind = str(rng.choice(["identity", "gaussian_blur", "random_inpaint", "downsample", "dft_magnitude", "hdr", "nonlinear_blur"]))
    params = {
        "gaussian_blur": {"size": 3, "std": 1.0},
        "random_inpaint": {"drop_fraction": 0.5, "seed": int(rng.integers(1000))},
        "downsample": {"factor": 2},
        "nonlinear_blur": {"size": 3, "std": 1.0, "gain": 1.5},
    }.get(kind, {})
    op = make_operator(kind, (d,), **params)
    y = measure(op, prior.sample(rng), 0.05, rng)
    schedule = build_schedule(N=int(rng.integers(3, 15)), n=int(rng.integers(1, 6)))
    common = dict(langevin_steps=int(rng.integers(2, 15)), seed=int(rng.integers(2**32)))
    return prior, op, y, schedule, common


def _gamma_zero(configs=20):
    rng = np.random.default_rng([TAG_CHECK, 4])
    bad = []
    for k in range(configs):
        prior, op, y, schedule, common = _random_setup(rng)
        a = run_gdps(prior, op, y, schedule, SamplerSpec(method=Method.GDPS, gamma=0.0, **common))
        b = run_gdps(prior, op, y, schedule, SamplerSpec(method=Method.DAPS, **common))
        same = (
            a.failure == b.failure
            and np.array_equal(a.residual_trace, b.residual_trace)
            and (a.final_sample is None or np.array_equal(a.final_sample.values, b.final_sample.values))
        )
        if not same:
            bad.append(k)
    return not bad, f"{configs - len(bad)}/{configs} configs bitwise equal"


def check_gamma_zero() -> CheckResult:
    return _timed(4, "gamma=0 reproduces DAPS bitwise", _gamma_zero)


# --- 5: gradient correctness -------------------------------------------------


def gradient_operators():
    """One instance of every operator kind, each with input dimension <= 16."""
    rng = np.random.default_rng([TAG_CHECK, 5, 0])
    return {
        "identity": make_operator("identity", (4, 4)),
        "matrix": LinearOperator(rng.standard_normal((5, 6))),
        "mask": MaskOp([0, 3, 5, 9, 15], (4, 4)),
        "random_inpaint": make_operator("random_inpaint", (4, 4), drop_fraction=0.7, seed=3),
        "box_inpaint": make_operator("box_inpaint", (4, 4), size=2),
        "downsample": make_operator("downsample", (4, 4), factor=2),
        "gaussian_blur": make_operator("gaussian_blur", (4, 4), size=3, std=1.0),
        "motion_blur": ConvBlurOp([[0.2, 0.3, 0.5]], (4, 4)),
        "dft_magnitude_2d": DftMagnitudeOp((4, 4), oversampling=1.0),
        "dft_magnitude_1d": DftMagnitudeOp((16,), oversampling=0.5),
        "hdr": HdrOp((16,), alpha=2.0),
        "nonlinear_blur": make_operator("nonlinear_blur", (4, 4), size=3, std=1.0, gain=2.0),
        "decoded_blur": DecodedOperator(
            make_operator("gaussian_blur", (8,), size=3, std=1.0), LinearAutoencoder.random(8, 3, seed=1)
        ),
    }


def directional_error(f, g, x, w, h=1e-6) -> float:
    """|central difference of f along w - <g, w>| relative to |g| |w|."""
    fd = (f(x + h * w) - f(x - h * w)) / (2 * h)
    scale = np.linalg.norm(g) * np.linalg.norm(w)
    return abs(fd - float(g @ w)) / max(scale, 1e-300)


def _gradients(probes=100, tol=1e-5):
    worst = {}
    for name, op in gradient_operators().items():
        rng = np.random.default_rng([TAG_CHECK, 5, len(name)])
        d, m = op.input_dim, op.output_dim
        y = rng.uniform(0, 1, m)
        err = 0.0
        for _ in range(probes):
            x = rng.uniform(0.05, 0.95, d)
            u, w = rng.standard_normal(m), rng.standard_normal(d)
            err = max(err, directional_error(lambda v: float(u @ op.apply(v)), op.vjp(x, u), x, w))
            err = max(
                err,
                directional_error(lambda v: float(np.sum((y - op.apply(v)) ** 2)), data_consistency_grad(op, x, y), x, w),
            )
        worst[name] = err
    bad = {k: v for k, v in worst.items() if v > tol}
    detail = f"max rel err {max(worst.values()):.2e} over {len(worst)} operators"
    if bad:
        detail += f"; failing: {bad}"
    return not bad, detail


def check_gradients() -> CheckResult:
    return _timed(5, "vjp and data-consistency gradients vs finite differences", _gradients)


# --- 6: Langevin stationarity ------------------------------------------------


def _langevin(chains=10_000, steps=200, frac=0.1):
    a, anchor, r, beta, y = 0.8, 0.3, 0.2, 0.1, 0.5
    op = make_operator("matrix", (1,), matrix=[[a]])
    precision = 1 / r**2 + a**2 / beta**2
    mean_ref = (anchor / r**2 + a * y / beta**2) / precision
    var_ref = 1 / precision
    eta = frac / precision
    x = langevin_posterior(
        np.full((chains, 1), anchor), op, np.array([y]), r, beta, eta, steps, NoiseStream(0), (TAG_CHECK, 6)
    )[:, 0]
    se = x.std(ddof=1) / np.sqrt(chains)
    z = abs(x.mean() - mean_ref) / se
    rel = abs(x.var(ddof=1) - var_ref) / var_ref
    return z <= 3 and rel < 0.10, f"|z|={z:.2f} var_err={rel:.3f} (step {frac}/curvature)"


def check_langevin() -> CheckResult:
    return _timed(6, "Langevin stationarity, 1-d linear Gaussian", _langevin)


# --- 7: reverse ODE order ----------------------------------------------------


def ode_errors(sigma_T=100.0, ns=(5, 10, 20, 40), sigma_min=0.01):
    prior = GaussianMixturePrior.gaussian([0.0, 0.0], np.eye(2))
    op = make_operator("identity", (2,))
    x = np.array([3.0, -1.0])
    exact = x / np.sqrt(1 + sigma_T**2)
    return [
        float(np.linalg.norm(guided_reverse(prior, op, np.zeros(2), x, sigma_T, 0.0, n, sigma_min=sigma_min) - exact))
        for n in ns
    ]


def _ode_order():
    errs = ode_errors()
    ratios = [errs[k] / errs[k + 1] for k in range(len(errs) - 1)]
    ok = all(1.7 <= q <= 2.3 for q in ratios)
    return ok, f"errors={_fmt(errs)} ratios={_fmt(ratios)}"


def check_ode_order() -> CheckResult:
    return _timed(7, "reverse ODE first-order convergence", _ode_order)


# --- 8: latent and VP-coordinate samplers -----------------------------------


def _ve_vp():
    prior = canonical_gmm_2d()
    rng = np.random.default_rng([TAG_CHECK, 8])
    worst = 0.0
    for s in build_schedule().sigmas:
        x = prior.sample(rng, 64) + s * rng.standard_normal((64, 2))
        a = tweedie_vp(prior, np.sqrt(alpha_bar(s)) * x, s)
        b = tweedie_denoise(prior, x, s)
        worst = max(worst, float(np.max(np.abs(a - b))))
    return worst <= 1e-10, f"VE/VP Tweedie max diff {worst:.1e}"


def _identity_collapse():
    prior, op = canonical_gmm_2d(), blur_2d()
    truths, ys = paired_trials(prior, op, 8, 0.05, 0)
    y = Measurement(ys, op.name, 0.05)
    schedule = build_schedule(N=20, n=3)
    spec = SamplerSpec(method=Method.G_LATENTDAPS, gamma=0.5, langevin_steps=20, stage2_init="anchor")
    lat = sample_g_latentdaps(prior, LinearAutoencoder.identity(2), op, y, schedule, spec, 8)
    pix = sample_gdps(prior, op, y, schedule, SamplerSpec(method=Method.GDPS, gamma=0.5, langevin_steps=20), 8)
    diff = float(np.max(np.abs(lat.samples - pix.samples)))
    return diff <= 1e-10, f"identity autoencoder vs pixel GDPS max diff {diff:.1e}"


def latent_problem(d=8, m=2, seed=0):
    ae = LinearAutoencoder.random(d, m, seed=seed)
    pixel_prior = GaussianMixturePrior.gaussian(np.full(d, 0.5), np.eye(d))
    latent_prior = pixel_prior.pushforward(ae.decoder.T)
    op = make_operator("gaussian_blur", (d,), size=3, std=1.0)
    rng = np.random.default_rng([TAG_CHECK, 8, seed])
    x_true = ae.decode(latent_prior.sample(rng))
    y = measure(op, x_true, 0.05, rng)
    return ae, latent_prior, op, y


def _latent_oracle(chains=500, N=50, n=5, gamma=1e-3):
    ae, latent_prior, op, y = latent_problem()
    A_latent = op.dense() @ ae.decoder
    post = conjugate_posterior(latent_prior.means[0], latent_prior.covariances[0], A_latent, y.values, y.noise_sigma)
    spec = SamplerSpec(method=Method.G_LATENTDAPS, gamma=gamma)
    res = sample_g_latentdaps(latent_prior, ae, op, y, build_schedule(N=N, n=n), spec, chains)
    off_span = float(np.max(np.abs(res.samples - ae.project(res.samples))))
    mean, cov, se = sample_moments(ae.encode(res.samples))
    z = np.abs(mean - post.mean) / se
    frob = np.linalg.norm(cov - post.covariance) / np.linalg.norm(post.covariance)
    ok = not res.failures and bool(np.all(z <= 3)) and frob < 0.10 and off_span <= 1e-10
    return ok, f"latent |z|={_fmt(z)} cov_err={frob:.3f} off-span {off_span:.1e}"


def _sitcom_descent(seeds=100):
    prior, op = canonical_gmm_2d(), blur_2d()
    truths, ys = paired_trials(prior, op, seeds, 0.05, 0)
    y = Measurement(ys, op.name, 0.05)
    spec = SamplerSpec(method=Method.G_SITCOM, gamma=1.0)
    res = sample_g_sitcom(prior, op, y, build_schedule(N=50, n=5), spec, seeds)
    good = (res.trace[-1] <= res.trace[0]) & ~np.isin(np.arange(seeds), list(res.failures))
    frac = float(good.mean())
    return frac >= 0.95, f"G-SITCOM final <= initial residual on {frac:.0%} of seeds"


def _variants():
    parts, ok = [], True
    for fn in (_ve_vp, _identity_collapse, _latent_oracle, _sitcom_descent):
        passed, detail = fn()
        ok &= passed
        parts.append(detail)
    return ok, "; ".join(parts)


def check_variants() -> CheckResult:
    return _timed(8, "G-SITCOM and G-LatentDAPS oracles", _variants)


CHECKS = {
    1: check_conjugate,
    2: check_phase,
    3: check_directional,
    4: check_gamma_zero,
    5: check_gradients,
    6: check_langevin,
    7: check_ode_order,
    8: check_variants,
    9: check_stability,
}

FAST_CHECKS = (4, 5, 6, 7)
