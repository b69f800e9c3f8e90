"""Posterior estimators for the fixed-form noise processes.

These cover the comparator models used throughout the synthetic studies:
IID Gaussian noise, a stationary kernel covariance, the exact AR(1)
process, trajectory-scaled (multiplicative) noise, and a block covariance
with known block locations. All share the MAP-then-adaptive-MCMC pipeline
from :class:`flexnoise.base.MvnNoiseEstimator`; the flexible processes
live in :mod:`flexnoise.gpnoise` and :mod:`flexnoise.blocknoise`.
"""

from __future__ import annotations

import numpy as np

from .base import MvnNoiseEstimator
from .covariance import SparseCovariance, build_covariance
from .kernels import StationaryKernel
from .likelihood import UniformPrior, default_kernel_priors, normal_prior

_RHO_LIMIT = 0.999
_RHO_FLOOR = 1e-3


def _residual_lag1(residuals):
    r = np.asarray(residuals, dtype=float)
    r = r - r.mean()
    denom = float(r @ r)
    if denom == 0.0:
        return 0.0
    return float(r[:-1] @ r[1:]) / denom


class IIDNoiseModel(MvnNoiseEstimator):
    """Independent Gaussian noise with a single unknown scale.

    Parameters
    ----------
    model : ForwardModel
        Mean-trajectory generator whose parameters are inferred.
    priors : tuple of priors or None
        Per-coordinate priors on the unconstrained model parameters;
        None uses diffuse normals.
    chains, iterations, warmup_frac, map_restarts, seed
        Sampler settings; the first ``warmup_frac`` of each chain is
        discarded and adaptation is frozen there.

    Attributes
    ----------
    theta_map_, noise_map_ : MAP estimates in constrained space.
    chains_ : ChainStore of joint draws (model + noise coordinates).
    rhat_, converged_, summary_ : convergence diagnostics and quantiles.
    """

    noise_names = ("sigma",)
    noise_transforms = ("log",)

    def __init__(self, model, priors=None, theta0=None, chains=3,
                 iterations=20000, warmup_frac=0.5, map_restarts=3,
                 seed=None, threshold=1e-9):
        self.model = model
        self.priors = priors
        self.theta0 = theta0
        self.chains = chains
        self.iterations = iterations
        self.warmup_frac = warmup_frac
        self.map_restarts = map_restarts
        self.seed = seed
        self.threshold = threshold

    def _noise_priors(self):
        return (normal_prior(0.0, 4.0),)

    def _noise_start(self, dataset, residuals):
        return (max(float(np.std(residuals)), 1e-8),)

    def _covariance_builder(self, dataset):
        n = len(dataset)

        def builder(noise, trajectory):
            return SparseCovariance(np.full((1, n), noise[0] ** 2))

        return builder


class StationaryKernelNoiseModel(MvnNoiseEstimator):
    """Multivariate normal noise with a stationary kernel covariance.

    The kernel's output scale and length scale are inferred on the log
    scale jointly with the model parameters; the covariance matrix is
    rebuilt (and re-factorized) at every posterior evaluation.
    """

    noise_names = ("length_scale", "sigma")
    noise_transforms = ("log", "log")

    def __init__(self, model, kind="laplacian", nu=None, priors=None,
                 theta0=None, chains=3, iterations=20000, warmup_frac=0.5,
                 map_restarts=3, seed=None, threshold=1e-9):
        self.model = model
        self.kind = kind
        self.nu = nu
        self.priors = priors
        self.theta0 = theta0
        self.chains = chains
        self.iterations = iterations
        self.warmup_frac = warmup_frac
        self.map_restarts = map_restarts
        self.seed = seed
        self.threshold = threshold

    def _noise_priors(self):
        return default_kernel_priors()

    def _noise_start(self, dataset, residuals):
        rho = abs(_residual_lag1(residuals))
        rho = min(max(rho, _RHO_FLOOR), _RHO_LIMIT)
        dt = dataset.dt if dataset.dt is not None else float(
            np.median(np.diff(dataset.times))
        )
        length = -dt / np.log(rho)
        return (length, max(float(np.std(residuals)), 1e-8))

    def _covariance_builder(self, dataset):
        times = dataset.times
        threshold = self.threshold
        kind, nu = self.kind, self.nu

        def builder(noise, trajectory):
            kernel = StationaryKernel(kind, sigma=noise[1],
                                      length_scale=noise[0], nu=nu)
            return build_covariance(kernel, times, threshold)

        return builder


class Ar1NoiseModel(MvnNoiseEstimator):
    """Exact stationary AR(1) noise: covariance sigma^2 rho^|i-j|.

    The lag is measured in grid steps, so this is the discrete
    autoregressive process regardless of the time units.
    """

    noise_names = ("rho", "sigma")
    noise_transforms = ("identity", "log")

    def __init__(self, model, priors=None, theta0=None, chains=3,
                 iterations=20000, warmup_frac=0.5, map_restarts=3,
                 seed=None, threshold=1e-9):
        self.model = model
        self.priors = priors
        self.theta0 = theta0
        self.chains = chains
        self.iterations = iterations
        self.warmup_frac = warmup_frac
        self.map_restarts = map_restarts
        self.seed = seed
        self.threshold = threshold

    def _noise_priors(self):
        return (UniformPrior(-_RHO_LIMIT, _RHO_LIMIT), normal_prior(0.0, 4.0))

    def _noise_start(self, dataset, residuals):
        rho = min(max(_residual_lag1(residuals), -0.95), 0.95)
        return (rho, max(float(np.std(residuals)), 1e-8))

    def _covariance_builder(self, dataset):
        n = len(dataset)
        threshold = self.threshold

        def builder(noise, trajectory):
            rho, sigma = noise
            s2 = sigma**2
            if rho == 0.0 or s2 * abs(rho) < threshold:
                bw = 0
            else:
                bw = min(
                    n - 1,
                    int(np.floor(np.log(threshold / s2) / np.log(abs(rho)))),
                )
            vals = s2 * rho ** np.arange(bw + 1)
            bands = np.repeat(vals[:, None], n, axis=1)
            for d in range(1, bw + 1):
                bands[d, n - d:] = 0.0
            return SparseCovariance(bands, threshold)

        return builder


class MultiplicativeNoiseModel(MvnNoiseEstimator):
    """Heteroscedastic noise scaling with the trajectory: sd_i = sigma f_i^eta.

    This is the diagonal covariance C(t_i, t_j) = (sigma f_i^eta)^2
    delta_ij; it requires a strictly positive mean trajectory.
    """

    noise_names = ("eta", "sigma")
    noise_transforms = ("identity", "log")

    def __init__(self, model, priors=None, theta0=None, chains=3,
                 iterations=20000, warmup_frac=0.5, map_restarts=3,
                 seed=None, threshold=1e-9):
        self.model = model
        self.priors = priors
        self.theta0 = theta0
        self.chains = chains
        self.iterations = iterations
        self.warmup_frac = warmup_frac
        self.map_restarts = map_restarts
        self.seed = seed
        self.threshold = threshold

    def _noise_priors(self):
        return (normal_prior(0.0, 10.0), normal_prior(0.0, 4.0))

    def _noise_start(self, dataset, residuals):
        scale = np.abs(dataset.values) + 1e-8
        return (1.0, max(float(np.std(residuals / scale)), 1e-10))

    def _covariance_builder(self, dataset):
        n = len(dataset)

        def builder(noise, trajectory):
            eta, sigma = noise
            if np.any(trajectory <= 0):
                raise ValueError("multiplicative noise needs a positive trajectory")
            sd = sigma * np.power(trajectory, eta)
            return SparseCovariance(sd[None, :] ** 2)

        return builder


class FixedBlockNoiseModel(MvnNoiseEstimator):
    """Block covariance with known block boundaries.

    Each block has its own stationary kernel parameters (log length, log
    sigma), inferred jointly with the model parameters; cross-block
    covariance is exactly zero.
    """

    def __init__(self, model, block_sizes, kind="laplacian", priors=None,
                 theta0=None, chains=3, iterations=20000, warmup_frac=0.5,
                 map_restarts=3, seed=None, threshold=1e-9):
        self.model = model
        self.block_sizes = block_sizes
        self.kind = kind
        self.priors = priors
        self.theta0 = theta0
        self.chains = chains
        self.iterations = iterations
        self.warmup_frac = warmup_frac
        self.map_restarts = map_restarts
        self.seed = seed
        self.threshold = threshold

    @property
    def noise_names(self):
        return tuple(
            name
            for j in range(len(self.block_sizes))
            for name in (f"length_scale_{j + 1}", f"sigma_{j + 1}")
        )

    @property
    def noise_transforms(self):
        return ("log",) * (2 * len(self.block_sizes))

    def _noise_priors(self):
        return default_kernel_priors() * len(self.block_sizes)

    def _noise_start(self, dataset, residuals):
        start = []
        offset = 0
        dt = dataset.dt if dataset.dt is not None else float(
            np.median(np.diff(dataset.times))
        )
        for size in self.block_sizes:
            chunk = residuals[offset: offset + size]
            rho = min(max(abs(_residual_lag1(chunk)), _RHO_FLOOR), _RHO_LIMIT)
            start.append(-dt / np.log(rho))
            start.append(max(float(np.std(chunk)), 1e-8))
            offset += size
        return tuple(start)

    def _covariance_builder(self, dataset):
        from .blocknoise import Partition, block_covariance

        sizes = tuple(int(s) for s in self.block_sizes)
        if sum(sizes) != len(dataset):
            raise ValueError("block sizes must sum to the dataset length")
        times = dataset.times
        kind, threshold = self.kind, self.threshold

        def builder(noise, trajectory):
            psi = np.log(np.asarray(noise, dtype=float)).reshape(-1, 2)
            partition = Partition.from_sizes(sizes, psi)
            return block_covariance(partition, times, kind, threshold)

        return builder
