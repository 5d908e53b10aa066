"""Small fixed problems shared by the self-checks, tests and experiment scripts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Measurement
from .operators import ForwardOperator, make_operator, measure
from .score import GaussianMixturePrior


def canonical_gmm_2d() -> GaussianMixturePrior:
    """Three correlated components inside the unit square."""
    return GaussianMixturePrior(
        [0.4, 0.3, 0.3],
        [[0.25, 0.25], [0.75, 0.3], [0.45, 0.8]],
        [
            [[0.01, 0.004], [0.004, 0.01]],
            [[0.008, -0.003], [-0.003, 0.012]],
            [[0.012, 0.0], [0.0, 0.006]],
        ],
    )


PRESETS = {"canonical2d": canonical_gmm_2d}


def blur_2d() -> ForwardOperator:
    """3-tap Gaussian blur (std 1) on a length-2 signal: a well-conditioned mixing matrix."""
    return make_operator("gaussian_blur", (2,), size=3, std=1.0)


@dataclass(frozen=True)
class Problem:
    prior: GaussianMixturePrior
    op: ForwardOperator
    x_true: np.ndarray
    y: Measurement


def conjugate_problem(noise_sigma: float = 0.05, seed: int = 0) -> Problem:
    """Gaussian prior N(0.5, I) in 2-d, blurred and noisy observation of (0.7, 0.3)."""
    prior = GaussianMixturePrior.gaussian([0.5, 0.5], np.eye(2))
    op = blur_2d()
    x_true = np.array([0.7, 0.3])
    y = measure(op, x_true, noise_sigma, np.random.default_rng(seed))
    return Problem(prior, op, x_true, y)


def phase_problem(noise_sigma: float = 0.05, seed: int = 0) -> Problem:
    """Two-component mixture observed through zero-padded DFT magnitudes (padded length 4)."""
    prior = GaussianMixturePrior.isotropic([0.5, 0.5], [[0.7, 0.2], [0.5, 0.1]], 0.01)
    op = make_operator("dft_magnitude", (2,), oversampling=1.0)
    x_true = np.array([0.65, 0.2])
    y = measure(op, x_true, noise_sigma, np.random.default_rng(seed))
    return Problem(prior, op, x_true, y)


def paired_trials(prior, op, trials: int, noise_sigma: float, seed: int):
    """Ground truths and measurements for trials 0..T-1.

    Trial t draws x_true and then the noise from ``default_rng(seed + t)``, so
    a trial's data do not depend on how many trials run.
    """
    xs, ys = [], []
    for t in range(trials):
        rng = np.random.default_rng(seed + t)
        x = prior.sample(rng)
        xs.append(x)
        ys.append(measure(op, x, noise_sigma, rng).values)
    return np.array(xs), np.array(ys)
