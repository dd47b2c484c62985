"""Robust penalty functions for outlier-tolerant least squares."""

from __future__ import annotations

import numpy as np


def geman_mcclure(residual, sigma: float) -> float:
    """sigma^2 ||r||^2 / (sigma^2 + ||r||^2); bounded above by sigma^2."""
    if not sigma > 0.0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    r = np.atleast_1d(np.asarray(residual, dtype=float))
    if not np.all(np.isfinite(r)):
        raise ValueError("non-finite residual")
    s2 = sigma * sigma
    n2 = float(r @ r)
    return s2 * n2 / (s2 + n2)


def geman_mcclure_grad(residual, sigma: float) -> np.ndarray:
    """d/dr of geman_mcclure: 2 sigma^4 r / (sigma^2 + ||r||^2)^2."""
    r = np.atleast_1d(np.asarray(residual, dtype=float))
    s2 = sigma * sigma
    denom = s2 + float(r @ r)
    return 2.0 * s2 * s2 * r / (denom * denom)


def robustifier(residual, alpha: float, c: float):
    """General adaptive robust penalty with shape alpha and scale c.

    alpha = 2 gives 0.5 (r/c)^2, alpha = 0 gives log(0.5 (r/c)^2 + 1); in
    between the loss interpolates between quadratic and redescending
    behaviour. Non-decreasing in |r|. Applies elementwise to arrays.
    """
    if not c > 0.0:
        raise ValueError(f"scale c must be positive, got {c}")
    r = np.asarray(residual, dtype=float)
    if not np.all(np.isfinite(r)):
        raise ValueError("non-finite residual")
    x2 = (r / c) ** 2
    if abs(alpha - 2.0) < 1e-12:
        out = 0.5 * x2
    elif abs(alpha) < 1e-12:
        out = np.log(0.5 * x2 + 1.0)
    else:
        b = abs(alpha - 2.0)
        out = (b / alpha) * ((x2 / b + 1.0) ** (alpha / 2.0) - 1.0)
    return float(out) if np.isscalar(residual) else out


def robustifier_grad(residual, alpha: float, c: float):
    """d/dr of robustifier; elementwise on arrays."""
    r = np.asarray(residual, dtype=float)
    x = r / c
    x2 = x * x
    if abs(alpha - 2.0) < 1e-12:
        out = x / c
    elif abs(alpha) < 1e-12:
        out = x / (c * (0.5 * x2 + 1.0))
    else:
        b = abs(alpha - 2.0)
        out = (x / c) * (x2 / b + 1.0) ** (alpha / 2.0 - 1.0)
    return float(out) if np.isscalar(residual) else out
