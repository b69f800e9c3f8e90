"""Ground-truth noise generators for the synthetic studies.

Every generator is replay-exact given a numpy Generator. The AR(1)
process starts from its stationary distribution so the marginal standard
deviation equals sigma from the first sample, which also makes its
autocovariance exactly sigma^2 rho^|i-j| -- the Laplacian kernel with
L = -dt / log(rho) on a uniform grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np


@dataclass(frozen=True)
class IidNoise:
    sigma: float

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")


@dataclass(frozen=True)
class Ar1Noise:
    rho: float
    sigma: float

    def __post_init__(self):
        if not abs(self.rho) < 1:
            raise ValueError("|rho| must be below 1")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")


@dataclass(frozen=True)
class MultiplicativeNoise:
    """y_i = f_i + f_i^eta * v_i with v_i ~ N(0, sigma^2)."""

    eta: float
    sigma: float

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")


@dataclass(frozen=True)
class BlockedNoise:
    """Consecutive segments, each with its own independent noise process."""

    segments: tuple

    def __post_init__(self):
        segments = tuple((int(n), spec) for n, spec in self.segments)
        if not segments or any(n < 1 for n, _ in segments):
            raise ValueError("segments must be non-empty with positive lengths")
        object.__setattr__(self, "segments", segments)

    @property
    def total_length(self):
        return sum(n for n, _ in self.segments)


NoiseSpec = Union[IidNoise, Ar1Noise, MultiplicativeNoise, BlockedNoise]


def generate(trajectory, spec: NoiseSpec, rng) -> np.ndarray:
    """Add noise drawn from ``spec`` to a noise-free trajectory."""
    trajectory = np.asarray(trajectory, dtype=float)
    if not np.all(np.isfinite(trajectory)):
        raise ValueError("trajectory must be finite")
    n = trajectory.size
    if isinstance(spec, IidNoise):
        return trajectory + spec.sigma * rng.standard_normal(n)
    if isinstance(spec, Ar1Noise):
        eps = np.empty(n)
        eps[0] = spec.sigma * rng.standard_normal()
        innov_sd = spec.sigma * np.sqrt(1.0 - spec.rho**2)
        shocks = innov_sd * rng.standard_normal(n - 1)
        for i in range(1, n):
            eps[i] = spec.rho * eps[i - 1] + shocks[i - 1]
        return trajectory + eps
    if isinstance(spec, MultiplicativeNoise):
        scale = np.power(trajectory, spec.eta)
        return trajectory + scale * spec.sigma * rng.standard_normal(n)
    if isinstance(spec, BlockedNoise):
        if spec.total_length != n:
            raise ValueError(
                f"blocked lengths sum to {spec.total_length}, trajectory has {n}"
            )
        out = np.empty(n)
        start = 0
        for length, sub in spec.segments:
            out[start: start + length] = generate(
                trajectory[start: start + length], sub, rng
            )
            start += length
        return out
    raise TypeError(f"unknown noise spec {type(spec).__name__}")


def true_sd(spec: NoiseSpec, trajectory) -> np.ndarray:
    """Per-time-point marginal noise standard deviation."""
    trajectory = np.asarray(trajectory, dtype=float)
    n = trajectory.size
    if isinstance(spec, IidNoise):
        return np.full(n, spec.sigma)
    if isinstance(spec, Ar1Noise):
        return np.full(n, spec.sigma)
    if isinstance(spec, MultiplicativeNoise):
        return spec.sigma * np.power(trajectory, spec.eta)
    if isinstance(spec, BlockedNoise):
        parts = []
        start = 0
        for length, sub in spec.segments:
            parts.append(true_sd(sub, trajectory[start: start + length]))
            start += length
        return np.concatenate(parts)
    raise TypeError(f"unknown noise spec {type(spec).__name__}")


def true_lag1(spec: NoiseSpec, n) -> np.ndarray:
    """Correlation of (eps_i, eps_{i+1}); index i covers 0..n-2 plus a
    trailing 0 so the output aligns with the time grid."""
    if isinstance(spec, IidNoise) or isinstance(spec, MultiplicativeNoise):
        return np.zeros(n)
    if isinstance(spec, Ar1Noise):
        out = np.full(n, spec.rho)
        out[-1] = 0.0
        return out
    if isinstance(spec, BlockedNoise):
        out = np.zeros(n)
        start = 0
        for length, sub in spec.segments:
            inner = true_lag1(sub, length)
            out[start: start + length] = inner
            out[start + length - 1] = 0.0  # independence across the boundary
            start += length
        return out
    raise TypeError(f"unknown noise spec {type(spec).__name__}")
