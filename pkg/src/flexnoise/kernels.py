"""Positive definite covariance functions for time-series noise.

Stationary kernels depend only on the lag |t_i - t_j|; the non-stationary
Laplacian lets its output scale and length scale vary over time, with the
per-time values held on a coarse grid and linearly interpolated in log
space (which preserves positivity of the interpolated parameters).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, kv

from ._validation import as_vector, check_increasing, check_positive
from .exceptions import NumericalError

VALID_KINDS = ("rbf", "laplacian", "matern")


@dataclass(frozen=True)
class StationaryKernel:
    """A stationary covariance function C(t_i, t_j) = C(|t_i - t_j|).

    kind
        'rbf':        sigma^2 exp(-d^2 / (2 L^2))
        'laplacian':  sigma^2 exp(-d / L)
        'matern':     sigma^2 2^(1-nu)/Gamma(nu) x^nu K_nu(x),
                      x = sqrt(2 nu) d / L; nu=1/2 equals the Laplacian.
    """

    kind: str
    sigma: float
    length_scale: float
    nu: float | None = None

    def __post_init__(self):
        if self.kind not in VALID_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        check_positive(self.sigma, "sigma")
        check_positive(self.length_scale, "length_scale")
        if self.kind == "matern":
            if self.nu is None:
                raise ValueError("matern kernel requires nu")
            check_positive(self.nu, "nu")

    def __call__(self, t_i, t_j):
        """Evaluate the kernel elementwise on broadcastable time arrays."""
        d = np.abs(np.asarray(t_i, dtype=float) - np.asarray(t_j, dtype=float))
        return self.correlation(d) * self.sigma**2

    def correlation(self, d):
        d = np.asarray(d, dtype=float)
        L = self.length_scale
        if self.kind == "rbf":
            return np.exp(-(d**2) / (2.0 * L**2))
        if self.kind == "laplacian":
            return np.exp(-d / L)
        nu = self.nu
        if nu == 0.5:
            return np.exp(-d / L)
        if nu == 1.5:
            x = np.sqrt(3.0) * d / L
            return (1.0 + x) * np.exp(-x)
        x = np.sqrt(2.0 * nu) * d / L
        with np.errstate(invalid="ignore"):
            val = np.exp(
                (1.0 - nu) * np.log(2.0) - gammaln(nu) + nu * np.log(np.where(x > 0, x, 1.0))
            ) * kv(nu, np.where(x > 0, x, 1.0))
        return np.where(x > 0, val, 1.0)

    def max_lag(self, threshold):
        """Largest lag at which |C| can still reach ``threshold``."""
        s2 = self.sigma**2
        if s2 < threshold:
            return 0.0
        ratio = threshold / s2
        L = self.length_scale
        if self.kind == "rbf":
            return L * np.sqrt(-2.0 * np.log(ratio))
        if self.kind == "laplacian" or self.nu == 0.5:
            return -L * np.log(ratio)
        # Matern correlations decrease monotonically in the lag: bracket
        # and bisect on the correlation itself.
        hi = L
        for _ in range(200):
            if self.correlation(hi) < ratio:
                break
            hi *= 2.0
        else:
            raise NumericalError("matern correlation does not decay below threshold")
        lo = 0.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if self.correlation(mid) >= ratio:
                lo = mid
            else:
                hi = mid
        return hi


@dataclass(frozen=True)
class NonStationaryLaplacian:
    """Laplacian kernel with time-varying log length scale and log scale.

    C(t_i, t_j) = sigma(t_i) sigma(t_j)
                  * sqrt(2 L_i L_j / (L_i^2 + L_j^2))
                  * exp(-|t_i - t_j| / sqrt(L_i^2 + L_j^2))

    Values of log L and log sigma are held at ``grid_times`` and linearly
    interpolated to any time inside the grid's coverage.
    """

    grid_times: np.ndarray
    log_length: np.ndarray
    log_sigma: np.ndarray

    def __post_init__(self):
        grid = check_increasing(self.grid_times, "grid_times")
        log_l = as_vector(self.log_length, "log_length")
        log_s = as_vector(self.log_sigma, "log_sigma")
        if not (grid.size == log_l.size == log_s.size):
            raise ValueError("grid_times, log_length, log_sigma must share length")
        for arr in (grid, log_l, log_s):
            arr.flags.writeable = False
        object.__setattr__(self, "grid_times", grid)
        object.__setattr__(self, "log_length", log_l)
        object.__setattr__(self, "log_sigma", log_s)

    def params_at(self, times):
        """Interpolated (log_length, log_sigma) at the requested times.

        Interpolation is piecewise linear in the log parameters and exact
        at grid nodes; extrapolation outside the grid is rejected.
        """
        times = np.asarray(times, dtype=float)
        grid = self.grid_times
        if np.any(times < grid[0]) or np.any(times > grid[-1]):
            raise ValueError("requested times extend beyond the parameter grid")
        return (
            np.interp(times, grid, self.log_length),
            np.interp(times, grid, self.log_sigma),
        )

    def __call__(self, t_i, t_j):
        t_i = np.asarray(t_i, dtype=float)
        t_j = np.asarray(t_j, dtype=float)
        log_li, log_si = self.params_at(t_i)
        log_lj, log_sj = self.params_at(t_j)
        if not (
            np.all(np.isfinite(log_li)) and np.all(np.isfinite(log_lj))
            and np.all(np.isfinite(log_si)) and np.all(np.isfinite(log_sj))
        ):
            raise NumericalError("non-finite interpolated kernel parameter")
        return nonstationary_laplacian_value(
            t_i, t_j, np.exp(log_li), np.exp(log_lj), np.exp(log_si), np.exp(log_sj)
        )

    def max_lag(self, threshold):
        """Conservative lag bound: the prefactor never exceeds 1, so
        |C| <= max(sigma)^2 exp(-d / (sqrt(2) max(L)))."""
        s2 = np.exp(2.0 * np.max(self.log_sigma))
        if s2 < threshold:
            return 0.0
        l_max = np.exp(np.max(self.log_length))
        return -np.sqrt(2.0) * l_max * np.log(threshold / s2)


def nonstationary_laplacian_value(t_i, t_j, l_i, l_j, s_i, s_j):
    denom = np.sqrt(l_i**2 + l_j**2)
    prefactor = np.sqrt(2.0 * l_i * l_j) / denom
    return s_i * s_j * prefactor * np.exp(-np.abs(t_i - t_j) / denom)
