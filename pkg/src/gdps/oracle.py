"""Exact and brute-force posterior references used to verify the samplers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import logsumexp

from .score import GaussianMixturePrior


@dataclass(frozen=True)
class GaussianPosterior:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        cov = np.asarray(self.covariance, dtype=float)
        if not np.allclose(cov, cov.T, atol=1e-12):
            raise ValueError("covariance must be symmetric")
        np.linalg.cholesky(cov)


def conjugate_posterior(prior_mean, prior_cov, A, y, sigma_y: float) -> GaussianPosterior:
    """Posterior of x ~ N(mu0, S0) given y = A x + N(0, sigma_y^2 I)."""
    if not sigma_y > 0:
        raise ValueError("sigma_y must be positive")
    mu0 = np.atleast_1d(np.asarray(prior_mean, dtype=float))
    S0 = np.atleast_2d(np.asarray(prior_cov, dtype=float))
    A = np.atleast_2d(np.asarray(A, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    prior_prec = np.linalg.inv(S0)
    precision = prior_prec + A.T @ A / sigma_y**2
    factor = cho_factor(precision, lower=True)
    cov = cho_solve(factor, np.eye(mu0.size))
    cov = 0.5 * (cov + cov.T)
    mean = cho_solve(factor, prior_prec @ mu0 + A.T @ y / sigma_y**2)
    return GaussianPosterior(mean, cov)


def _trapezoid_weights(n: int) -> np.ndarray:
    w = np.ones(n)
    w[0] = w[-1] = 0.5
    return w


def grid_posterior_moments(prior: GaussianMixturePrior, op, y, sigma_y: float, bounds, resolution: int = 400):
    """Mean and covariance of p(x | y) by trapezoidal quadrature on a box (d <= 2)."""
    d = prior.dim
    if d > 2:
        raise ValueError("brute-force quadrature supports d <= 2")
    bounds = np.asarray(bounds, dtype=float).reshape(d, 2)
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    axes = [np.linspace(lo, hi, resolution) for lo, hi in bounds]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    pts = mesh.reshape(-1, d)
    y = np.asarray(y, dtype=float)
    r = op.apply(pts) - y
    m = r.shape[-1]
    log_lik = -0.5 * np.sum(r**2, axis=-1) / sigma_y**2 - m * np.log(sigma_y) - 0.5 * m * np.log(2 * np.pi)
    log_w = sum(
        np.log(_trapezoid_weights(resolution) * (hi - lo) / (resolution - 1)).reshape(
            [-1 if a == ax else 1 for a in range(d)]
        )
        for ax, (lo, hi) in enumerate(bounds)
    ).reshape(-1)
    log_post = prior.log_density(pts) + log_lik + log_w
    log_z = logsumexp(log_post)
    if log_z < np.log(1e-300):
        raise ValueError("posterior normalizer vanished; y is incompatible with the bounds or prior")
    p = np.exp(log_post - log_z)
    mean = p @ pts
    centered = pts - mean
    cov = (centered * p[:, None]).T @ centered
    return mean, cov


def sample_moments(samples):
    """Unbiased mean, covariance, and per-coordinate standard error of the mean."""
    X = np.asarray([np.asarray(s, dtype=float).reshape(-1) for s in samples])
    K = X.shape[0]
    if K < 2:
        raise ValueError("need at least two samples")
    mean = X.mean(axis=0)
    cov = np.atleast_2d(np.cov(X, rowvar=False, ddof=1))
    se = np.sqrt(np.diag(cov) / K)
    return mean, cov, se
