"""Guided decoupled posterior sampling for inverse problems with analytic priors."""

from .config import ConfigError, ExperimentConfig, parse_config
from .core import (
    AnnealingSchedule,
    DivergenceError,
    Measurement,
    Method,
    NoiseStream,
    RunReport,
    SamplerSpec,
    Signal,
    alpha_bar,
    build_schedule,
    seeded_rng,
)
from .harness import emit_reports, run_experiment
from .metrics import psnr, residual, ssim
from .operators import ForwardOperator, data_consistency_grad, make_operator, measure
from .oracle import conjugate_posterior, grid_posterior_moments
from .samplers import (
    LinearAutoencoder,
    run_batch,
    run_g_latentdaps,
    run_g_sitcom,
    run_gdps,
)
from .score import GaussianMixturePrior, tweedie_denoise

__all__ = [
    "AnnealingSchedule",
    "ConfigError",
    "DivergenceError",
    "ExperimentConfig",
    "ForwardOperator",
    "GaussianMixturePrior",
    "LinearAutoencoder",
    "Measurement",
    "Method",
    "NoiseStream",
    "RunReport",
    "SamplerSpec",
    "Signal",
    "alpha_bar",
    "build_schedule",
    "conjugate_posterior",
    "data_consistency_grad",
    "emit_reports",
    "grid_posterior_moments",
    "make_operator",
    "measure",
    "parse_config",
    "psnr",
    "residual",
    "run_batch",
    "run_experiment",
    "run_g_latentdaps",
    "run_g_sitcom",
    "run_gdps",
    "seeded_rng",
    "ssim",
]
