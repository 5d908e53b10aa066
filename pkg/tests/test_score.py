import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gdps.benchmarks import canonical_gmm_2d
from gdps.core import alpha_bar, build_schedule
from gdps.score import (
    GaussianMixturePrior,
    ZeroScore,
    gmm_log_density,
    gmm_score,
    tweedie_denoise,
    tweedie_vp,
    vp_score,
)

std2 = GaussianMixturePrior.gaussian([0.0, 0.0], np.eye(2))


def test_standard_normal_score():
    np.testing.assert_allclose(gmm_score(std2, np.array([1.0, 2.0]), 0.0), [-1.0, -2.0])
    np.testing.assert_allclose(gmm_score(std2, np.array([2.0, 0.0]), 1.0), [-1.0, 0.0])


def test_symmetric_mixture_midpoint_has_zero_score():
    p = GaussianMixturePrior.isotropic([0.5, 0.5], [[1.0, -0.5], [-1.0, 0.5]], 0.3)
    np.testing.assert_allclose(p.score(np.zeros(2), 0.7), 0.0, atol=1e-15)


def test_log_density_examples():
    one = GaussianMixturePrior.gaussian([0.0], [[1.0]])
    assert gmm_log_density(one, np.array([0.0])) == pytest.approx(-0.5 * np.log(2 * np.pi), abs=1e-14)
    assert gmm_log_density(std2, np.zeros(2)) == pytest.approx(-np.log(2 * np.pi), abs=1e-14)


@pytest.mark.parametrize("sigma", [0.0, 0.05, 0.3])
def test_density_integrates_to_one(sigma):
    p = canonical_gmm_2d()
    t = np.linspace(-1.0, 2.0, 500)
    X = np.stack(np.meshgrid(t, t, indexing="ij"), -1)
    dens = np.exp(p.log_density(X, sigma))
    total = np.trapezoid(np.trapezoid(dens, t, axis=1), t)
    assert total == pytest.approx(1.0, abs=1e-3)


def _random_prior(draw_seed, d, C):
    rng = np.random.default_rng(draw_seed)
    covs = []
    for _ in range(C):
        M = rng.standard_normal((d, d)) * 0.3
        covs.append(M @ M.T + 0.05 * np.eye(d))
    w = rng.uniform(0.2, 1.0, C)
    return GaussianMixturePrior(w / w.sum(), rng.uniform(-1, 1, (C, d)), covs), rng


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), d=st.integers(1, 4), C=st.integers(1, 3), sigma=st.floats(0.0, 3.0))
def test_score_matches_finite_difference_of_log_density(seed, d, C, sigma):
    p, rng = _random_prior(seed, d, C)
    x = rng.uniform(-1.5, 1.5, d)
    h = 1e-5
    fd = np.array([(p.log_density(x + h * e, sigma) - p.log_density(x - h * e, sigma)) / (2 * h) for e in np.eye(d)])
    s = p.score(x, sigma)
    assert np.all(np.abs(s - fd) <= 1e-4 * (1 + np.abs(s)))


def test_score_far_from_modes_is_stable():
    p = canonical_gmm_2d()
    s = p.score(np.array([40.0, -30.0]), 0.01)
    assert np.all(np.isfinite(s))


def test_batched_score_matches_rowwise():
    p = canonical_gmm_2d()
    X = np.random.default_rng(0).uniform(0, 1, (3, 4, 2))
    S = p.score(X, 0.2)
    assert S.shape == X.shape
    np.testing.assert_allclose(S[1, 2], p.score(X[1, 2], 0.2), rtol=1e-13)


def test_tweedie_examples():
    x = np.array([0.3, -1.2])
    np.testing.assert_array_equal(tweedie_denoise(std2, x, 0.0), x)
    np.testing.assert_allclose(tweedie_denoise(std2, np.array([2.0, 0.0]), 1.0), [1.0, 0.0])


def test_tweedie_matches_conjugate_mean_over_schedule():
    mu0, tau2 = np.array([0.4, -0.2]), 0.3
    p = GaussianMixturePrior.gaussian(mu0, tau2 * np.eye(2))
    x = np.array([1.1, 0.7])
    for s in build_schedule().sigmas:
        expected = (tau2 * x + s**2 * mu0) / (tau2 + s**2)
        np.testing.assert_allclose(tweedie_denoise(p, x, s), expected, atol=1e-10)


def test_large_sigma_score_pulls_toward_mean():
    p = canonical_gmm_2d()
    x = np.array([0.9, -0.4])
    sigma = 1e3
    mean = p.weights @ p.means
    np.testing.assert_allclose(sigma**2 * p.score(x, sigma), mean - x, rtol=1e-3)


def test_ve_vp_tweedie_agree():
    p = canonical_gmm_2d()
    rng = np.random.default_rng(1)
    for s in [0.01, 0.3, 2.0, 50.0]:
        x = p.sample(rng, 16) + s * rng.standard_normal((16, 2))
        np.testing.assert_allclose(tweedie_vp(p, np.sqrt(alpha_bar(s)) * x, s), tweedie_denoise(p, x, s), atol=1e-10)
        np.testing.assert_allclose(vp_score(p, np.sqrt(alpha_bar(s)) * x, s) * np.sqrt(alpha_bar(s)), p.score(x, s))


def test_validation():
    with pytest.raises(ValueError):
        GaussianMixturePrior([0.5, 0.6], [[0.0], [1.0]], [[[1.0]], [[1.0]]])
    with pytest.raises(ValueError):
        GaussianMixturePrior([1.0], [[0.0, 0.0]], [[[1.0, 0.5], [0.4, 1.0]]])
    with pytest.raises(ValueError):
        GaussianMixturePrior([1.0], [[0.0, 0.0]], [[[1.0, 2.0], [2.0, 1.0]]])
    with pytest.raises(ValueError):
        std2.score(np.zeros(3), 0.1)
    with pytest.raises(ValueError):
        tweedie_denoise(std2, np.zeros(2), -1.0)


def test_pushforward_and_sampling():
    p = canonical_gmm_2d()
    M = np.array([[1.0, 1.0]])
    q = p.pushforward(M)
    assert q.dim == 1
    xs = p.sample(np.random.default_rng(0), 20_000)
    assert np.mean(xs @ M.T) == pytest.approx(float(q.weights @ q.means[:, 0]), abs=0.01)
    assert np.all(ZeroScore(3).score(np.ones(3), 1.0) == 0)
