"""Analytic Gaussian-mixture priors and their exact noisy scores."""

from __future__ import annotations

from typing import Protocol

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.special import logsumexp

from .core import alpha_bar

_LOG_2PI = np.log(2.0 * np.pi)


class ScoreModel(Protocol):
    dim: int

    def score(self, x: np.ndarray, sigma: float) -> np.ndarray: ...


class ZeroScore:
    """Score of a flat (improper) prior; useful for isolating guidance terms."""

    def __init__(self, dim: int):
        self.dim = int(dim)

    def score(self, x, sigma):
        return np.zeros_like(np.asarray(x, dtype=float))


class GaussianMixturePrior:
    """Mixture ``sum_c w_c N(mu_c, Sigma_c)`` in R^d.

    Arrays passed to :meth:`score` and :meth:`log_density` may carry any
    leading batch shape; the last axis must have length d.
    """

    def __init__(self, weights, means, covariances):
        weights = np.atleast_1d(np.asarray(weights, dtype=float))
        means = np.asarray(means, dtype=float)
        if means.ndim == 1:
            means = means[None, :]
        covs = np.asarray(covariances, dtype=float)
        if covs.ndim == 2:
            covs = covs[None]
        C, d = means.shape
        if weights.shape != (C,) or covs.shape != (C, d, d):
            raise ValueError(
                f"inconsistent mixture shapes: weights {weights.shape}, "
                f"means {means.shape}, covariances {covs.shape}"
            )
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")
        if not np.allclose(covs, np.swapaxes(covs, 1, 2), rtol=0, atol=1e-12):
            raise ValueError("covariances must be symmetric")
        try:
            self._chol = np.stack([cholesky(c, lower=True) for c in covs])
        except np.linalg.LinAlgError as err:
            raise ValueError("covariances must be positive definite") from err
        self.weights = weights
        self.means = means
        self.covariances = covs
        self.dim = d
        with np.errstate(divide="ignore"):
            self._log_w = np.log(weights)

    @classmethod
    def isotropic(cls, weights, means, variances) -> "GaussianMixturePrior":
        means = np.atleast_2d(np.asarray(means, dtype=float))
        C, d = means.shape
        variances = np.broadcast_to(np.asarray(variances, dtype=float), (C,))
        return cls(weights, means, variances[:, None, None] * np.eye(d))

    @classmethod
    def gaussian(cls, mean, cov) -> "GaussianMixturePrior":
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        cov = np.asarray(cov, dtype=float)
        if cov.ndim == 0:
            cov = cov * np.eye(mean.size)
        return cls([1.0], mean[None], cov[None])

    @property
    def n_components(self) -> int:
        return self.weights.size

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (self.dim,):
            raise ValueError(f"expected last axis of length {self.dim}, got shape {x.shape}")
        return x

    def _inflated(self, sigma: float):
        if sigma < 0:
            raise ValueError("sigma must be >= 0")
        eye = np.eye(self.dim)
        out = []
        for c in range(self.n_components):
            L = self._chol[c] if sigma == 0 else cholesky(self.covariances[c] + sigma**2 * eye, lower=True)
            if not np.all(np.diag(L) > 0):
                raise ValueError("inflated covariance is not positive definite")
            out.append(L)
        return out

    def _component_terms(self, x, sigma):
        """Per-component log densities and scores, shapes (C, *batch) and (C, *batch, d)."""
        flat = x.reshape(-1, self.dim)
        logs, grads = [], []
        for c, L in enumerate(self._inflated(sigma)):
            diff = (flat - self.means[c]).T
            white = solve_triangular(L, diff, lower=True)
            logs.append(
                self._log_w[c]
                - 0.5 * np.sum(white**2, axis=0)
                - np.sum(np.log(np.diag(L)))
                - 0.5 * self.dim * _LOG_2PI
            )
            grads.append(-cho_solve((L, True), diff).T)
        batch = x.shape[:-1]
        return (
            np.stack(logs).reshape((-1,) + batch),
            np.stack(grads).reshape((-1,) + batch + (self.dim,)),
        )

    def log_density(self, x, sigma: float = 0.0):
        x = self._check(x)
        logs, _ = self._component_terms(x, sigma)
        return logsumexp(logs, axis=0)

    def score(self, x, sigma: float = 0.0):
        x = self._check(x)
        logs, grads = self._component_terms(x, sigma)
        resp = np.exp(logs - logsumexp(logs, axis=0))
        return np.einsum("c...,c...d->...d", resp, grads)

    def tweedie_jacobian(self, sigma: float) -> np.ndarray:
        """d/dx of the VE Tweedie map; exact for a single Gaussian only."""
        if self.n_components != 1:
            raise ValueError("closed-form Tweedie Jacobian needs a single Gaussian")
        cov = self.covariances[0]
        return cov @ np.linalg.inv(cov + sigma**2 * np.eye(self.dim))

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        n = 1 if size is None else int(size)
        comp = rng.choice(self.n_components, size=n, p=self.weights)
        z = rng.standard_normal((n, self.dim))
        out = self.means[comp] + np.einsum("nij,nj->ni", self._chol[comp], z)
        return out[0] if size is None else out

    def pushforward(self, matrix) -> "GaussianMixturePrior":
        """Law of ``matrix @ x`` for x from this prior (e.g. encoding to a latent)."""
        M = np.asarray(matrix, dtype=float)
        covs = np.einsum("ij,cjk,lk->cil", M, self.covariances, M)
        covs = 0.5 * (covs + np.swapaxes(covs, 1, 2))
        return GaussianMixturePrior(self.weights, self.means @ M.T, covs)


def gmm_score(prior: GaussianMixturePrior, x, sigma: float) -> np.ndarray:
    return prior.score(x, sigma)


def gmm_log_density(prior: GaussianMixturePrior, x, sigma: float = 0.0):
    return prior.log_density(x, sigma)


def tweedie_denoise(model: ScoreModel, x, sigma: float) -> np.ndarray:
    """Posterior mean of the clean signal under VE corruption: x + sigma^2 * score."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    x = np.asarray(x, dtype=float)
    if sigma == 0:
        return x.copy()
    return x + sigma**2 * model.score(x, sigma)


# VE <-> VP bridge: abar = 1/(1+sigma^2), x_vp = sqrt(abar) * x_ve.


def vp_score(model: ScoreModel, x_vp, sigma: float) -> np.ndarray:
    s = np.sqrt(alpha_bar(sigma))
    return model.score(np.asarray(x_vp, dtype=float) / s, sigma) / s


def vp_epsilon(model: ScoreModel, x_vp, sigma: float) -> np.ndarray:
    """Noise prediction in DDPM coordinates, -sqrt(1 - abar) * vp score."""
    return -np.sqrt(1.0 - alpha_bar(sigma)) * vp_score(model, x_vp, sigma)


def tweedie_vp(model: ScoreModel, x_vp, sigma: float) -> np.ndarray:
    """DDPM-form Tweedie estimate (x - sqrt(1-abar) eps) / sqrt(abar)."""
    abar = alpha_bar(sigma)
    x_vp = np.asarray(x_vp, dtype=float)
    return (x_vp - np.sqrt(1.0 - abar) * vp_epsilon(model, x_vp, sigma)) / np.sqrt(abar)
