"""Multivariate normal log-likelihood, prior densities, and the posterior.

The observation model is y ~ N(f(theta), Sigma). The sparse path uses the
covariance's cached banded Cholesky factor (log-determinant from the
factor diagonal, quadratic form by triangular solves); a dense path backs
small matrices such as Gaussian-process hyperprior Grams.

Priors are declared per coordinate in the *unconstrained* space the
samplers operate in. A normal prior on a log-transformed parameter is
therefore evaluated directly at phi = log(theta); a density specified on
the constrained parameter itself can be adapted with
:class:`TransformedPrior`, which adds the change-of-variables log-Jacobian
(phi for a log coordinate, since theta = exp(phi)).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import betaln, gammaln

from .covariance import SparseCovariance, chol_dense_with_jitter
from .data import Dataset
from .exceptions import NumericalError

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2.0 * math.pi)


def mvn_logpdf(y, mean, cov) -> float:
    """log N(y | mean, cov).

    ``cov`` may be a :class:`SparseCovariance` (banded Cholesky path) or a
    dense square ndarray (dense Cholesky path with the same jitter policy).
    """
    y = np.asarray(y, dtype=float)
    mean = np.asarray(mean, dtype=float)
    if y.shape != mean.shape or y.ndim != 1:
        raise ValueError("y and mean must be 1-D arrays of equal length")
    residual = y - mean
    if isinstance(cov, SparseCovariance):
        if cov.n != y.size:
            raise ValueError(
                f"covariance dimension {cov.n} does not match data length {y.size}"
            )
        quad = cov.mahalanobis_sq(residual)
        log_det = cov.log_det
    else:
        cov = np.asarray(cov, dtype=float)
        if cov.shape != (y.size, y.size):
            raise ValueError("dense covariance has wrong shape")
        factor, _ = chol_dense_with_jitter(cov)
        w = solve_triangular(factor, residual, lower=True, check_finite=False)
        quad = float(w @ w)
        log_det = 2.0 * float(np.sum(np.log(np.diagonal(factor))))
    return -0.5 * (y.size * LOG_2PI + log_det + quad)


def iid_logpdf(y, mean, sigma) -> float:
    """Sum of univariate normal log-densities with common scale sigma."""
    y = np.asarray(y, dtype=float)
    mean = np.asarray(mean, dtype=float)
    r = y - mean
    return float(-0.5 * (y.size * (LOG_2PI + 2.0 * np.log(sigma)) + (r @ r) / sigma**2))


# ---------------------------------------------------------------------------
# Gaussian process log-prior for time-varying kernel parameters
# ---------------------------------------------------------------------------


class SquaredExponentialLogPrior:
    """MVN log-density with Gram K_ij = alpha^2 exp(-(t_i-t_j)^2 / (2 beta^2)).

    The Gram matrix and its (jittered) Cholesky factor are cached at
    construction, so repeated evaluations only pay two triangular solves.
    """

    def __init__(self, grid_times, mu, alpha, beta):
        grid_times = np.asarray(grid_times, dtype=float)
        if np.any(np.diff(grid_times) <= 0):
            raise ValueError("grid_times must be strictly increasing")
        if alpha <= 0 or beta <= 0:
            raise ValueError("alpha and beta must be positive")
        self.grid_times = grid_times
        self.mu = float(mu)
        gaps = grid_times[:, None] - grid_times[None, :]
        gram = alpha**2 * np.exp(-(gaps**2) / (2.0 * beta**2))
        self._factor, self.jitter = chol_dense_with_jitter(gram)
        self._log_det = 2.0 * float(np.sum(np.log(np.diagonal(self._factor))))

    def __call__(self, values) -> float:
        values = np.asarray(values, dtype=float)
        if values.shape != self.grid_times.shape:
            raise ValueError("values must match the grid length")
        w = self.whiten(values)
        return -0.5 * (values.size * LOG_2PI + self._log_det + float(w @ w))

    def whiten(self, values):
        """Map values to the coordinates in which the prior is N(0, I)."""
        return solve_triangular(
            self._factor, np.asarray(values, dtype=float) - self.mu,
            lower=True, check_finite=False,
        )

    def unwhiten(self, coeffs):
        """Inverse of :meth:`whiten`: mu + factor @ coeffs."""
        return self.mu + self._factor @ np.asarray(coeffs, dtype=float)

    def log_density_whitened(self, coeffs) -> float:
        """Log density of unwhiten(coeffs); same value as __call__ there."""
        coeffs = np.asarray(coeffs, dtype=float)
        return -0.5 * (coeffs.size * LOG_2PI + self._log_det + float(coeffs @ coeffs))


def gp_log_prior(values, grid_times, hyper) -> float:
    """One-shot form of :class:`SquaredExponentialLogPrior`; hyper = (mu, alpha, beta)."""
    mu, alpha, beta = hyper
    return SquaredExponentialLogPrior(grid_times, mu, alpha, beta)(values)


# ---------------------------------------------------------------------------
# Prior densities
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NormalPrior:
    mu: float
    sd: float

    def __post_init__(self):
        if self.sd <= 0:
            raise ValueError("sd must be positive")

    def log_density(self, x) -> float:
        return -0.5 * (LOG_2PI + 2.0 * math.log(self.sd) + ((x - self.mu) / self.sd) ** 2)


@dataclass(frozen=True)
class BetaPrior:
    a: float
    b: float

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise ValueError("a and b must be positive")

    def log_density(self, x) -> float:
        if x < 0.0 or x > 1.0:
            return -math.inf
        total = -float(betaln(self.a, self.b))
        if self.a != 1.0:
            if x == 0.0:
                return -math.inf
            total += (self.a - 1.0) * math.log(x)
        if self.b != 1.0:
            if x == 1.0:
                return -math.inf
            total += (self.b - 1.0) * math.log1p(-x)
        return total


@dataclass(frozen=True)
class ShiftedGammaPrior:
    """x - shift ~ Gamma(a, rate b); support x > shift."""

    a: float
    b: float
    shift: float = 0.0

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise ValueError("a and b must be positive")

    def log_density(self, x) -> float:
        z = x - self.shift
        if z <= 0.0:
            return -math.inf
        return (
            self.a * math.log(self.b)
            - gammaln(self.a)
            + (self.a - 1.0) * math.log(z)
            - self.b * z
        )


@dataclass(frozen=True)
class UniformPrior:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError("need lo < hi")

    def log_density(self, x) -> float:
        if x < self.lo or x > self.hi:
            return -math.inf
        return -math.log(self.hi - self.lo)


@dataclass(frozen=True)
class FlatPrior:
    """Improper constant density; contributes nothing to the posterior."""

    def log_density(self, x) -> float:
        return 0.0


@dataclass(frozen=True)
class TransformedPrior:
    """Adapt a constrained-space density for an unconstrained coordinate.

    For a log coordinate the wrapped density is evaluated at exp(phi) and
    the log-Jacobian phi is added, so sampling in phi targets the wrapped
    density over the constrained parameter.
    """

    base: object
    transform: str = "log"

    def log_density(self, phi) -> float:
        if self.transform == "log":
            return self.base.log_density(math.exp(phi)) + phi
        return self.base.log_density(phi)


def normal_prior(mu, scale, prior_scale="sd") -> NormalPrior:
    """Build a normal prior reading ``scale`` as sd or as variance."""
    if prior_scale == "sd":
        return NormalPrior(mu, scale)
    if prior_scale == "variance":
        return NormalPrior(mu, math.sqrt(scale))
    raise ValueError("prior_scale must be 'sd' or 'variance'")


def herg_default_priors(prior_scale="sd"):
    """Literature normal priors for the nine log-scale channel parameters."""
    from .models import HERG_PRIOR_LOG_MEANS, HERG_PRIOR_LOG_SDS

    return tuple(
        normal_prior(m, s, prior_scale)
        for m, s in zip(HERG_PRIOR_LOG_MEANS, HERG_PRIOR_LOG_SDS)
    )


# Defaults used for kernel parameters throughout: diffuse normals on the
# logarithms of the length scale and the output scale.
def default_kernel_priors(prior_scale="sd"):
    return (normal_prior(-4.0, 4.0, prior_scale), normal_prior(0.0, 4.0, prior_scale))


# ---------------------------------------------------------------------------
# Posterior assembly
# ---------------------------------------------------------------------------


@dataclass
class MvnLikelihood:
    """y ~ N(f(theta), Sigma) with a fixed or per-evaluation covariance.

    ``covariance`` is either a ready :class:`SparseCovariance` or a
    callable ``(noise_params, trajectory) -> SparseCovariance`` invoked at
    every evaluation (the trajectory argument supports covariances that
    scale with the model output).
    """

    dataset: Dataset
    model: object
    covariance: SparseCovariance | Callable[..., SparseCovariance]

    def __post_init__(self):
        if isinstance(self.covariance, SparseCovariance):
            if self.covariance.n != len(self.dataset):
                raise ValueError("covariance dimension must equal dataset length")

    def log_density(self, phi, noise_params=()) -> float:
        try:
            theta = self.model.to_constrained(np.asarray(phi, dtype=float))
            trajectory = self.model.simulate(theta, self.dataset.times)
        except Exception as exc:  # noqa: BLE001 - samplers must keep running
            logger.debug("forward simulation failed at phi=%s: %s", phi, exc)
            return -math.inf
        trajectory = np.asarray(trajectory, dtype=float)
        if trajectory.shape != self.dataset.values.shape or not np.all(
            np.isfinite(trajectory)
        ):
            logger.debug("forward simulation returned invalid trajectory")
            return -math.inf
        if isinstance(self.covariance, SparseCovariance):
            cov = self.covariance
        else:
            try:
                cov = self.covariance(
                    np.asarray(noise_params, dtype=float), trajectory
                )
            except (NumericalError, ValueError, FloatingPointError) as exc:
                logger.debug("covariance rebuild failed: %s", exc)
                return -math.inf
        return mvn_logpdf(self.dataset.values, trajectory, cov)


def sum_log_priors(priors: Sequence | None, values) -> float:
    total = 0.0
    if priors is None:
        return total
    for prior, value in zip(priors, np.atleast_1d(values)):
        if prior is None:
            continue
        total += prior.log_density(float(value))
        if total == -math.inf:
            return total
    return total


def log_posterior(
    phi,
    noise_params,
    likelihood: MvnLikelihood,
    model_priors: Sequence | None = None,
    noise_priors: Sequence | None = None,
) -> float:
    """Unnormalized log posterior over unconstrained model and noise parameters.

    Priors are evaluated before the likelihood so out-of-support points
    never trigger a forward simulation; -inf propagates.
    """
    total = sum_log_priors(model_priors, phi)
    if total == -math.inf:
        return total
    total += sum_log_priors(noise_priors, noise_params)
    if total == -math.inf:
        return total
    return total + likelihood.log_density(phi, noise_params)
