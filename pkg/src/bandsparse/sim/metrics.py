"""Estimate/truth pairing, MSE with outlier rejection, and support checks."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .signals import torus_distance


@dataclass(frozen=True)
class MetricsConfig:
    resolution: float
    outlier_factor: float = 2.0

    def __post_init__(self):
        if self.outlier_factor <= 0:
            raise ValueError("outlier_factor must be positive")
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")

    @property
    def threshold(self) -> float:
        return self.outlier_factor * self.resolution


def _as_2d(f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    return f.reshape(-1, 1) if f.ndim <= 1 else f


def pair_frequencies(true_f, est_f) -> tuple[np.ndarray, np.ndarray]:
    """Assignment minimising the total toroidal distance (summed over axes)."""
    t, e = _as_2d(true_f), _as_2d(est_f)
    if t.shape[0] == 0 or e.shape[0] == 0:
        return np.empty(0, dtype=int), np.empty(0, dtype=int)
    cost = torus_distance(t[:, None, :], e[None, :, :]).sum(axis=2)
    return linear_sum_assignment(cost)


@dataclass(frozen=True)
class MseResult:
    mse: float
    outliers: int
    errors: np.ndarray

    @property
    def defined(self) -> bool:
        return not math.isnan(self.mse)


def mse(true_f, est_f, cfg: MetricsConfig) -> MseResult:
    """Mean squared toroidal error over non-outlier pairs, averaged over axes.

    A pair is an outlier when any axis is off by more than
    ``outlier_factor * resolution``. ``mse`` is NaN when nothing survives.
    """
    t, e = _as_2d(true_f), _as_2d(est_f)
    if t.shape[0] != e.shape[0]:
        raise ValueError(f"{t.shape[0]} true vs {e.shape[0]} estimated frequencies")
    rows, cols = pair_frequencies(t, e)
    err = torus_distance(t[rows], e[cols])
    outlier = np.any(err > cfg.threshold, axis=1)
    kept = err[~outlier]
    value = float(np.mean(kept**2)) if kept.size else math.nan
    return MseResult(value, int(outlier.sum()), err)


def covered(true_f, lo, hi) -> np.ndarray:
    """For each true frequency, whether some surviving cell contains it."""
    t = _as_2d(true_f)
    lo, hi = _as_2d(lo), _as_2d(hi)
    if lo.shape[0] == 0:
        return np.zeros(t.shape[0], dtype=bool)
    center = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    d = torus_distance(t[:, None, :], center[None, :, :])
    return np.any(np.all(d <= half[None, :, :] * (1 + 1e-12), axis=2), axis=1)


def support_recovered(true_f, lo, hi, slack: int = 1) -> bool:
    """Every true frequency lies in a surviving cell and every surviving cell
    lies within ``slack`` cell widths of a true frequency."""
    t = _as_2d(true_f)
    lo, hi = _as_2d(lo), _as_2d(hi)
    if not np.all(covered(t, lo, hi)):
        return False
    if lo.shape[0] == 0:
        return t.shape[0] == 0
    center = 0.5 * (lo + hi)
    width = hi - lo
    d = torus_distance(center[:, None, :], t[None, :, :])
    near = np.all(d <= (slack + 0.5) * width[:, None, :] * (1 + 1e-12), axis=2)
    return bool(np.all(np.any(near, axis=1)))
