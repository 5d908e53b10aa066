"""Reconstruction quality measures."""

from __future__ import annotations

import math

import numpy as np


def _pair(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b, max_value: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical inputs."""
    if not max_value > 0:
        raise ValueError("max_value must be positive")
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(max_value**2 / mse)


def ssim(a, b, data_range: float = 1.0) -> float:
    """SSIM computed over the whole signal as a single window.

    This is not the usual 11x11 Gaussian-windowed SSIM; values are comparable
    only with other single-window scores.
    """
    a, b = _pair(a, b)
    if a.size < 2:
        raise ValueError("ssim needs at least two elements")
    a, b = a.reshape(-1), b.reshape(-1)
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    mu_a, mu_b = a.mean(), b.mean()
    var_a, var_b = a.var(), b.var()
    cov = np.mean((a - mu_a) * (b - mu_b))
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(num / den)


def residual(op, x, y):
    """||y - A(x)||^2 over the last axis (a float for a single signal)."""
    r = op.apply(x) - np.asarray(y, dtype=float)
    out = np.sum(r**2, axis=-1)
    return float(out) if np.ndim(out) == 0 else out
