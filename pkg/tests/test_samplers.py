import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gdps.benchmarks import blur_2d, canonical_gmm_2d, conjugate_problem, paired_trials
from gdps.checks import latent_problem
from gdps.core import (
    TAG_INIT,
    DivergenceError,
    Measurement,
    Method,
    NoiseStream,
    SamplerSpec,
    alpha_bar,
    build_schedule,
)
from gdps.operators import make_operator
from gdps.samplers import (
    DivergenceGuard,
    LinearAutoencoder,
    _sitcom_objective,
    guided_reverse,
    langevin_posterior,
    renoise,
    reverse_ode_step,
    run_batch,
    run_g_latentdaps,
    run_g_sitcom,
    run_gdps,
    sample_g_latentdaps,
    sample_g_sitcom,
    sample_gdps,
    sitcom_inner_solve,
    tweedie_vp_vjp,
)
from gdps.score import GaussianMixturePrior, ZeroScore, tweedie_vp

N01 = GaussianMixturePrior.gaussian([0.0], [[1.0]])


def small_problem(trials=8):
    prior, op = canonical_gmm_2d(), blur_2d()
    truths, ys = paired_trials(prior, op, trials, 0.05, 0)
    return prior, op, truths, Measurement(ys, op.name, 0.05)


# --- reverse ODE and guidance -----------------------------------------------


def test_reverse_step_examples():
    x = np.array([0.4, -2.0])
    np.testing.assert_array_equal(reverse_ode_step(ZeroScore(2), x, 3.0, 1.0), x)
    assert reverse_ode_step(N01, np.array([1.0]), 1.0, 0.0)[0] == pytest.approx(0.5)
    with pytest.raises(ValueError):
        reverse_ode_step(N01, np.array([1.0]), 1.0, 1.0)


def test_guided_reverse_gamma_zero_is_plain_ode():
    prior = canonical_gmm_2d()
    op = blur_2d()
    x = np.array([3.0, -2.0])
    grid = build_schedule().inner_grid(5.0)
    expected = x
    for a, b in zip(grid[:-1], grid[1:]):
        expected = reverse_ode_step(prior, expected, a, b)
    np.testing.assert_array_equal(guided_reverse(prior, op, np.zeros(2), x, 5.0, 0.0, grid=grid), expected)


def test_guided_reverse_single_guidance_step():
    ident = make_operator("identity", (1,))
    out = guided_reverse(ZeroScore(1), ident, np.zeros(1), np.array([2.0]), 1.0, 0.25, 1)
    assert out[0] == pytest.approx(1.0)


def test_guided_reverse_ode_error_is_first_order():
    from gdps.checks import ode_errors

    errs = ode_errors(sigma_T=10.0)
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((ratios > 1.7) & (ratios < 2.3))


def test_guidance_lowers_residual_on_paired_seeds():
    prob = conjugate_problem()
    rng = np.random.default_rng(0)
    wins = 0
    for t in range(100):
        x_t = prob.prior.sample(rng) + 2.0 * rng.standard_normal(2)
        plain = guided_reverse(prob.prior, prob.op, prob.y.values, x_t, 2.0, 0.0)
        guided = guided_reverse(prob.prior, prob.op, prob.y.values, x_t, 2.0, 0.5)
        wins += np.sum((prob.op.apply(guided) - prob.y.values) ** 2) <= np.sum((prob.op.apply(plain) - prob.y.values) ** 2)
    assert wins >= 90


def test_guided_reverse_divergence_raises_with_step():
    ident = make_operator("identity", (1,))
    with pytest.raises(DivergenceError, match="reverse step"):
        guided_reverse(ZeroScore(1), ident, np.zeros(1), np.array([1.0]), 1.0, 50.0, 10)


# --- Langevin and renoise ---------------------------------------------------


def test_langevin_vanishing_step_returns_anchor():
    op = blur_2d()
    anchor = np.array([0.3, 0.6])
    out = langevin_posterior(anchor, op, np.zeros(2), 0.5, 0.05, 1e-12, 1, NoiseStream(0))
    np.testing.assert_allclose(out, anchor, atol=1e-5)


def test_langevin_without_noise_reaches_ridge_solution():
    op = blur_2d()
    A = op.dense()
    anchor, y, r, b = np.array([0.2, 0.9]), np.array([0.5, 0.4]), 0.3, 0.1
    P = np.eye(2) / r**2 + A.T @ A / b**2
    ridge = np.linalg.solve(P, anchor / r**2 + A.T @ y / b**2)
    eta = 1.0 / np.linalg.eigvalsh(P).max()
    out = langevin_posterior(anchor, op, y, r, b, eta, 2000, NoiseStream(0), noise=False)
    np.testing.assert_allclose(out, ridge, atol=1e-10)


def test_langevin_matches_gaussian_posterior_1d():
    from gdps.checks import CHECKS

    assert CHECKS[6]().passed


def test_langevin_rejects_bad_parameters():
    with pytest.raises(ValueError):
        langevin_posterior(np.zeros(1), make_operator("identity", (1,)), np.zeros(1), 0.0, 1.0, 0.1, 1, NoiseStream(0))


def test_renoise_examples():
    x = np.array([0.3, -0.1])
    np.testing.assert_array_equal(renoise(x, 0.0, NoiseStream(0), (2, 1)), x)
    draws = renoise(np.tile(x, (10_000, 1)), 0.5, NoiseStream(1), (2, 1))
    assert np.all(np.abs(draws.mean(0) - x) < 3 * 0.5 / 100)
    assert np.all(np.abs(draws.var(0) / 0.25 - 1) < 0.1)
    with pytest.raises(ValueError):
        renoise(x, -1.0, NoiseStream(0))


def test_divergence_guard_modes():
    x = np.array([[1.0, 2.0], [np.inf, 0.0], [2e6, 0.0]])
    with pytest.raises(DivergenceError) as err:
        DivergenceGuard(strict=True)(x, "here")
    assert err.value.chains == [1, 2] and "here" in str(err.value)
    g = DivergenceGuard(strict=False)
    out = g(x, "step 3")
    np.testing.assert_array_equal(out[1:], 0.0)
    assert set(g.failures) == {1, 2} and "step 3" in g.failures[1]


# --- full GDPS / DAPS pipeline ----------------------------------------------


def test_degenerate_pipeline_is_one_ode_step():
    prior, op, _, y = small_problem(1)
    y = Measurement(y.values[0], op.name, 0.05)
    schedule = build_schedule(N=1, n=1)
    spec = SamplerSpec(method=Method.GDPS, gamma=0.0, langevin_eta=1e-12, eta_rule="fixed", langevin_steps=1, seed=9)
    report = run_gdps(prior, op, y, schedule, spec)
    x_T = 100.0 * NoiseStream(9).normal(2, TAG_INIT)
    np.testing.assert_allclose(report.final_sample.values, reverse_ode_step(prior, x_T, 100.0, 0.0), atol=1e-5)


def test_report_contents_and_reproducibility():
    prior, op, truths, y = small_problem(1)
    y = Measurement(y.values[0], op.name, 0.05)
    schedule = build_schedule(N=12, n=3)
    spec = SamplerSpec(method=Method.GDPS, gamma=0.5, langevin_steps=10, seed=4)
    a = run_gdps(prior, op, y, schedule, spec, reference=truths[0])
    b = run_gdps(prior, op, y, schedule, spec, reference=truths[0])
    assert a.ok and len(a.residual_trace) == 12
    assert {"residual", "psnr", "ssim", "lpips"} <= set(a.metrics) and a.metrics["lpips"] is None
    assert a.metrics["residual"] == a.residual_trace[-1]
    np.testing.assert_array_equal(a.final_sample.values, b.final_sample.values)
    np.testing.assert_array_equal(a.residual_trace, b.residual_trace)
    assert a.metrics == b.metrics and a.spec_echo == spec and a.seed == 4


def test_batch_chain_zero_matches_single_run():
    prior, op, _, y = small_problem(5)
    schedule = build_schedule(N=10, n=2)
    spec = SamplerSpec(method=Method.GDPS, gamma=0.5, langevin_steps=5, seed=2)
    batch = sample_gdps(prior, op, Measurement(np.tile(y.values[0], (5, 1)), op.name, 0.05), schedule, spec, 5)
    single = sample_gdps(prior, op, Measurement(y.values[0], op.name, 0.05), schedule, spec)
    np.testing.assert_allclose(batch.samples[0], single.samples, rtol=0, atol=1e-14)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**32), N=st.integers(1, 8), n=st.integers(1, 4))
def test_gamma_zero_bitwise_daps(seed, N, n):
    prior, op, _, y = small_problem(3)
    schedule = build_schedule(N=N, n=n)
    a = sample_gdps(prior, op, y, schedule, SamplerSpec(method=Method.GDPS, gamma=0.0, langevin_steps=4, seed=seed), 3)
    b = sample_gdps(prior, op, y, schedule, SamplerSpec(method=Method.DAPS, langevin_steps=4, seed=seed), 3)
    assert np.array_equal(a.samples, b.samples) and np.array_equal(a.trace, b.trace)


def test_final_langevin_switch():
    prior, op, _, y = small_problem(2)
    schedule = build_schedule(N=5, n=2)
    on = sample_gdps(prior, op, y, schedule, SamplerSpec(method=Method.GDPS, gamma=0.5, langevin_steps=5), 2)
    off = sample_gdps(prior, op, y, schedule, SamplerSpec(method=Method.GDPS, gamma=0.5, langevin_steps=5, final_langevin=False), 2)
    np.testing.assert_array_equal(on.trace[:-1], off.trace[:-1])
    assert not np.array_equal(on.samples, off.samples)


def test_divergent_chains_recorded_not_raised():
    prior, op, _, y = small_problem(4)
    res = sample_gdps(prior, op, y, build_schedule(N=5, n=5), SamplerSpec(method=Method.GDPS, gamma=10.0), 4)
    assert set(res.failures) == {0, 1, 2, 3}
    report = run_gdps(prior, op, Measurement(y.values[0], op.name, 0.05), build_schedule(N=5, n=5),
                      SamplerSpec(method=Method.GDPS, gamma=10.0))
    assert not report.ok and report.final_sample is None and "diverged" in report.failure


def test_run_gdps_rejects_other_methods():
    prior, op, _, y = small_problem(1)
    with pytest.raises(ValueError):
        sample_gdps(prior, op, y.values[0], build_schedule(N=2, n=1), SamplerSpec(method=Method.G_SITCOM))


# --- G-SITCOM ---------------------------------------------------------------


def test_tweedie_vp_vjp_matches_finite_differences():
    prior = canonical_gmm_2d()
    rng = np.random.default_rng(0)
    for s in [0.05, 0.4, 3.0]:
        v = np.sqrt(alpha_bar(s)) * (prior.sample(rng) + s * rng.standard_normal(2))
        u = rng.standard_normal(2)
        h = 1e-6
        J = np.column_stack([(tweedie_vp(prior, v + h * e, s) - tweedie_vp(prior, v - h * e, s)) / (2 * h) for e in np.eye(2)])
        np.testing.assert_allclose(tweedie_vp_vjp(prior, v, s, u), u @ J, rtol=1e-5, atol=1e-6)
    gauss = GaussianMixturePrior.gaussian([0.2, 0.1], [[0.3, 0.1], [0.1, 0.2]])
    J = gauss.tweedie_jacobian(0.7) / np.sqrt(alpha_bar(0.7))
    np.testing.assert_allclose(tweedie_vp_vjp(gauss, np.ones(2), 0.7, np.array([1.0, -2.0])), np.array([1.0, -2.0]) @ J)


def test_sitcom_huge_lambda_keeps_anchor():
    prior, op, _, y = small_problem(1)
    x_t = np.array([0.4, 0.2])
    out = sitcom_inner_solve(prior, op, y.values[0], x_t, 0.5, 1e12, 10, 0.1)
    np.testing.assert_allclose(out, x_t, atol=1e-10)


def test_sitcom_single_step_strictly_decreases():
    prior = GaussianMixturePrior.gaussian([0.3, 0.6], 0.2 * np.eye(2))
    op = make_operator("identity", (2,))
    y, x_t = np.array([0.9, 0.1]), np.array([0.0, 0.0])
    before = _sitcom_objective(prior, op, y, x_t, x_t, 0.5, 0.0)
    v = sitcom_inner_solve(prior, op, y, x_t, 0.5, 0.0, 1, 0.1)
    assert _sitcom_objective(prior, op, y, x_t, v, 0.5, 0.0) < before


@settings(max_examples=6, deadline=None)
@given(seed=st.integers(0, 2**31), sigma=st.floats(0.02, 5.0), lam=st.floats(0.0, 5.0))
def test_sitcom_long_descent_never_increases(seed, sigma, lam):
    prior, op = canonical_gmm_2d(), blur_2d()
    rng = np.random.default_rng(seed)
    y = rng.uniform(0, 1, 2)
    x_t = np.sqrt(alpha_bar(sigma)) * (prior.sample(rng) + sigma * rng.standard_normal(2))
    v = sitcom_inner_solve(prior, op, y, x_t, sigma, lam, 200, 0.1)
    assert _sitcom_objective(prior, op, y, x_t, v, sigma, lam) <= _sitcom_objective(prior, op, y, x_t, x_t, sigma, lam)


def test_sitcom_guidance_step_reduces_residual():
    ident = make_operator("identity", (2,))
    from gdps.operators import data_consistency_grad

    x, y = np.array([0.8, 0.1]), np.array([0.2, 0.5])
    step = x - 0.2 * data_consistency_grad(ident, x, y)
    assert np.sum((y - step) ** 2) < np.sum((y - x) ** 2)


def test_g_sitcom_runs_and_lowers_residual():
    prior, op, truths, y = small_problem(20)
    spec = SamplerSpec(method=Method.G_SITCOM, gamma=1.0)
    res = sample_g_sitcom(prior, op, y, build_schedule(N=30, n=5), spec, 20)
    assert not res.failures and res.trace.shape == (30, 20)
    assert np.mean(res.trace[-1] <= res.trace[0]) >= 0.95
    report = run_g_sitcom(prior, op, Measurement(y.values[0], op.name, 0.05), build_schedule(N=10, n=5), spec, truths[0])
    assert report.ok and len(report.residual_trace) == 10
    with pytest.raises(ValueError):
        run_g_sitcom(prior, op, y.values[0], build_schedule(N=2, n=1), SamplerSpec(method=Method.GDPS))


# --- G-LatentDAPS -----------------------------------------------------------


def test_autoencoder_invariants():
    ae = LinearAutoencoder.random(8, 3, seed=2)
    z = np.random.default_rng(0).standard_normal((4, 3))
    x = np.random.default_rng(1).standard_normal((4, 8))
    np.testing.assert_allclose(ae.encode(ae.decode(z)), z, atol=1e-10)
    np.testing.assert_allclose(ae.project(ae.project(x)), ae.project(x), atol=1e-10)
    with pytest.raises(ValueError):
        LinearAutoencoder(np.ones((3, 2)))


def test_identity_autoencoder_collapses_to_pixel_gdps():
    prior, op, _, y = small_problem(6)
    schedule = build_schedule(N=15, n=3)
    lat = sample_g_latentdaps(
        prior, LinearAutoencoder.identity(2), op, y, schedule,
        SamplerSpec(method=Method.G_LATENTDAPS, gamma=0.5, langevin_steps=15, stage2_init="anchor", seed=3), 6,
    )
    pix = sample_gdps(prior, op, y, schedule, SamplerSpec(method=Method.GDPS, gamma=0.5, langevin_steps=15, seed=3), 6)
    np.testing.assert_allclose(lat.samples, pix.samples, rtol=0, atol=1e-10)
    np.testing.assert_allclose(lat.trace, pix.trace, rtol=0, atol=1e-10)


def test_latent_outputs_lie_in_decoder_span():
    ae, latent_prior, op, y = latent_problem()
    for init in ("stage1", "anchor"):
        spec = SamplerSpec(method=Method.G_LATENTDAPS, gamma=0.01, langevin_steps=10, stage2_init=init)
        res = sample_g_latentdaps(latent_prior, ae, op, y, build_schedule(N=10, n=3), spec, 4)
        assert not res.failures
        assert np.max(np.abs(res.samples - ae.project(res.samples))) <= 1e-10


def test_latent_dimension_checks():
    ae, latent_prior, op, y = latent_problem()
    spec = SamplerSpec(method=Method.G_LATENTDAPS, gamma=0.1)
    with pytest.raises(ValueError):
        run_g_latentdaps(latent_prior, LinearAutoencoder.random(6, 2), op, y, build_schedule(N=2, n=1), spec)
    with pytest.raises(ValueError):
        run_g_latentdaps(GaussianMixturePrior.gaussian(np.zeros(3), np.eye(3)), ae, op, y, build_schedule(N=2, n=1), spec)


def test_run_batch_dispatch():
    prior, op, _, y = small_problem(2)
    schedule = build_schedule(N=3, n=2)
    for method in Method:
        spec = SamplerSpec(method=method, gamma=0.1, langevin_steps=3)
        res = run_batch(spec, prior, op, y, schedule, 2, autoencoder=LinearAutoencoder.random(2, 1, 0))
        assert res.samples.shape == (2, 2) and res.trace.shape == (3, 2)
    with pytest.raises(ValueError):
        run_batch(SamplerSpec(method=Method.G_LATENTDAPS), prior, op, y, schedule, 2)
