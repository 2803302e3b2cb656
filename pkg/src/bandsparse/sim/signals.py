"""Synthetic multi-dimensional sinusoids and calibrated complex noise."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dictionary import SamplingScheme


class SpacingError(RuntimeError):
    """Frequency draws could not satisfy the minimum spacing."""


@dataclass(frozen=True)
class SignalSpec:
    """``K`` components with frequencies of shape ``(K, dims)`` in cycles/sample."""

    frequencies: np.ndarray
    amplitudes: np.ndarray
    min_spacing: float | None = None

    def __post_init__(self):
        f = np.atleast_2d(np.asarray(self.frequencies, dtype=float))
        if f.size == 0:
            f = f.reshape(0, max(f.shape[-1], 1))
        a = np.asarray(self.amplitudes, dtype=np.complex128).reshape(-1)
        if f.shape[0] != a.size:
            raise ValueError(f"{f.shape[0]} frequencies but {a.size} amplitudes")
        if np.any((f < 0) | (f >= 1)):
            raise ValueError("frequencies must lie in [0, 1)")
        if self.min_spacing is not None and not spacing_ok(f, self.min_spacing):
            raise ValueError("frequencies violate the minimum spacing")
        object.__setattr__(self, "frequencies", f)
        object.__setattr__(self, "amplitudes", a)

    @property
    def K(self) -> int:
        return self.amplitudes.size

    @property
    def dims(self) -> int:
        return self.frequencies.shape[1]


def torus_distance(a, b) -> np.ndarray:
    d = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)) % 1.0
    return np.minimum(d, 1.0 - d)


def spacing_ok(freqs: np.ndarray, min_spacing: float) -> bool:
    """Per-dimension pairwise toroidal spacing of at least ``min_spacing``."""
    for m in range(freqs.shape[1]):
        f = freqs[:, m]
        d = torus_distance(f[:, None], f[None, :])
        np.fill_diagonal(d, np.inf)
        if d.size and d.min() < min_spacing:
            return False
    return True


def draw_frequencies(
    K: int,
    dims: int,
    rng: np.random.Generator,
    min_spacing: float | None = None,
    max_attempts: int = 10_000,
) -> np.ndarray:
    for _ in range(max_attempts):
        f = rng.random((K, dims))
        if min_spacing is None or spacing_ok(f, min_spacing):
            return f
    raise SpacingError(f"no draw of {K} frequencies met spacing {min_spacing}")


def random_signal(
    K: int,
    rng: np.random.Generator,
    dims: int = 1,
    magnitudes=1.0,
    min_spacing: float | None = None,
) -> SignalSpec:
    """Uniform frequencies on ``[0, 1)``, uniform phases, given magnitudes."""
    f = draw_frequencies(K, dims, rng, min_spacing)
    phase = rng.random(K)
    amps = np.broadcast_to(np.asarray(magnitudes, dtype=float), (K,)) * np.exp(2j * np.pi * phase)
    return SignalSpec(f, amps, min_spacing)


def generate_signal(spec: SignalSpec, scheme: SamplingScheme) -> np.ndarray:
    """Noise-free data tensor, vectorised with the first dimension fastest."""
    if spec.K and spec.dims != scheme.dims:
        raise ValueError(f"{spec.dims}-D signal on a {scheme.dims}-D scheme")
    y = np.zeros(scheme.n_samples, dtype=np.complex128)
    for f, beta in zip(spec.frequencies, spec.amplitudes):
        atom = np.ones(1, dtype=np.complex128)
        for m, t in enumerate(scheme.times):
            atom = np.kron(np.exp(2j * np.pi * f[m] * t), atom)
        y += beta * atom
    return y


def noise_variance(y: np.ndarray, snr_db: float) -> float:
    power = float(np.vdot(y, y).real) / y.size
    return power * 10.0 ** (-snr_db / 10.0)


def add_noise(y, snr_db: float, rng: np.random.Generator) -> np.ndarray:
    """Add circular white Gaussian noise at ``snr_db`` relative to the mean power of ``y``."""
    y = np.asarray(y, dtype=np.complex128)
    if y.size == 0:
        raise ValueError("cannot add noise to an empty signal")
    if np.isposinf(snr_db):
        return y.copy()
    sigma2 = noise_variance(y, snr_db)
    noise = rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape)
    return y + np.sqrt(sigma2 / 2.0) * noise


def nonuniform_scheme(N: int, rng: np.random.Generator) -> SamplingScheme:
    """``N`` instants drawn uniformly on ``[0, N)`` and sorted."""
    while True:
        t = np.sort(rng.uniform(0.0, N, N))
        if np.all(np.diff(t) > 0):
            return SamplingScheme((t,))
