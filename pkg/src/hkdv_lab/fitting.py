"""Log-log power-law fitting shared by every rate check."""

from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np


class FitError(ValueError):
    pass


class PowerFit(NamedTuple):
    slope: float
    stderr: float
    intercept: float
    n: int


def fit_decay_exponent(
    series: Sequence[tuple[float, float]], min_samples: int = 6, min_decades: float = 1.5
) -> PowerFit:
    """Ordinary least squares of log(value) against log(t)."""
    arr = np.asarray(series, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise FitError("series must be a list of (t, value) pairs")
    t, v = arr[:, 0], arr[:, 1]
    if t.size < min_samples:
        raise FitError(f"need at least {min_samples} samples, got {t.size}")
    if np.any(t <= 0) or np.any(v <= 0):
        raise FitError("times and values must be positive")
    span = np.log10(t.max() / t.min())
    if span < min_decades - 1e-12:
        raise FitError(f"time span {span:.2f} decades < {min_decades}")
    X = np.log(t)
    Y = np.log(v)
    A = np.vstack([X, np.ones_like(X)]).T
    coef, *_ = np.linalg.lstsq(A, Y, rcond=None)
    resid = Y - A @ coef
    dof = max(t.size - 2, 1)
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(A.T @ A)
    return PowerFit(float(coef[0]), float(np.sqrt(max(cov[0, 0], 0.0))), float(coef[1]), int(t.size))
