"""Estimator base classes: sklearn-style parameter handling plus the
shared MAP-then-MCMC posterior pipeline used by the concrete noise models.

Estimators follow the familiar conventions: constructor arguments are
stored verbatim and introspectable through ``get_params``/``set_params``
(so instances clone and compose with the wider ecosystem), ``fit`` takes
``(times, values)``, and fitted results land in trailing-underscore
attributes.
"""

from __future__ import annotations

import inspect
import math

import numpy as np

from ._validation import check_is_fitted
from .data import Dataset
from .exceptions import OptimizationError
from .inference import ChainStore, optimize, run_adaptive_chain
from .likelihood import MvnLikelihood, log_posterior
from .models import ForwardModel

RHAT_LIMIT = 1.05


class BaseEstimator:
    """Minimal sklearn-compatible parameter introspection."""

    @classmethod
    def _get_param_names(cls):
        signature = inspect.signature(cls.__init__)
        return sorted(
            name
            for name, p in signature.parameters.items()
            if name != "self" and p.kind != p.VAR_KEYWORD
        )

    def get_params(self, deep=True):
        return {name: getattr(self, name) for name in self._get_param_names()}

    def set_params(self, **params):
        valid = set(self._get_param_names())
        for key, value in params.items():
            if key not in valid:
                raise ValueError(
                    f"invalid parameter {key!r} for {type(self).__name__}"
                )
            setattr(self, key, value)
        return self

    def __repr__(self):
        params = ", ".join(f"{k}={v!r}" for k, v in sorted(self.get_params().items()))
        return f"{type(self).__name__}({params})"


def as_dataset(times, values=None) -> Dataset:
    if isinstance(times, Dataset) and values is None:
        return times
    return Dataset(times, values)


def default_model_priors(model: ForwardModel, prior_scale="sd"):
    """Weakly informative normals on the unconstrained model coordinates."""
    from .likelihood import normal_prior

    return tuple(normal_prior(0.0, 10.0, prior_scale) for _ in model.param_names)


def constrain_columns(draws, transforms):
    """Map unconstrained draw columns to reporting space ('log' -> exp)."""
    out = np.array(draws, dtype=float)
    for k, kind in enumerate(transforms):
        if kind == "log":
            out[:, k] = np.exp(out[:, k])
    return out


def multi_restart_map(
    target, x0, rng, restarts=3, jitter=0.5, bounds=None, max_iters=500
):
    """Maximize ``target`` from x0 and (restarts-1) jittered starts.

    Returns (best OptResult, per-restart diagnostics). Raises
    OptimizationError when every restart fails to produce a finite value.
    """
    diagnostics = []
    best = None
    for attempt in range(max(1, restarts)):
        start = np.array(x0, dtype=float)
        if attempt > 0:
            start = start + jitter * rng.standard_normal(start.size)
            if bounds is not None:
                start = np.clip(
                    start, [b[0] for b in bounds], [b[1] for b in bounds]
                )
        try:
            result = optimize(target, start, bounds=bounds, max_iters=max_iters)
        except (ValueError, FloatingPointError) as exc:
            diagnostics.append({"restart": attempt, "error": str(exc)})
            continue
        diagnostics.append(
            {"restart": attempt, "value": result.value, "converged": result.converged}
        )
        if best is None or result.value > best.value:
            best = result
    if best is None or not np.isfinite(best.value):
        raise OptimizationError("all optimization restarts failed", diagnostics)
    return best, diagnostics


class FittedPosteriorMixin:
    """Posterior-surface helpers shared by the fitted estimators.

    Requires the fitted attributes ``chains_``, ``param_names_``,
    ``param_transforms_`` and ``summary_``, plus ``model``.
    """

    def posterior_median_(self):
        check_is_fitted(self, "chains_")
        pooled = constrain_columns(self.chains_.draws(), self.param_transforms_)
        return np.median(pooled, axis=0)

    def predict(self, times):
        """Trajectory at the posterior median of the model parameters."""
        theta = self.posterior_median_()[: self.model.n_params]
        return self.model.simulate(theta, np.asarray(times, dtype=float))

    def interval(self, name, level=0.95):
        """Central credible interval for a named parameter (reporting space)."""
        check_is_fitted(self, "summary_")
        if level == 0.95:
            row = self.summary_[name]
            return row["q2.5"], row["q97.5"]
        k = self.param_names_.index(name)
        pooled = constrain_columns(self.chains_.draws(), self.param_transforms_)
        lo, hi = np.quantile(pooled[:, k], [(1 - level) / 2, (1 + level) / 2])
        return float(lo), float(hi)


class MvnNoiseEstimator(FittedPosteriorMixin, BaseEstimator):
    """Joint posterior over model parameters and a small noise vector.

    Subclasses declare the noise block (names, transforms, a covariance
    builder over constrained noise values, priors, and a data-driven
    start); this base runs the shared pipeline: multi-restart MAP, then
    several adaptive Metropolis chains, then convergence checks and
    posterior summaries.
    """

    # subclass interface -----------------------------------------------
    noise_names: tuple = ()
    noise_transforms: tuple = ()

    def _noise_priors(self):
        raise NotImplementedError

    def _noise_start(self, dataset, residuals):
        """Starting values for the noise block, constrained space."""
        raise NotImplementedError

    def _covariance_builder(self, dataset):
        """Return callable: (constrained noise values, trajectory) -> SparseCovariance."""
        raise NotImplementedError

    # shared pipeline ----------------------------------------------------

    def fit(self, times, values=None):
        dataset = as_dataset(times, values)
        model = self.model
        rng = np.random.default_rng(self.seed)

        model_priors = (
            self.priors
            if self.priors is not None
            else default_model_priors(model)
        )
        noise_priors = self._noise_priors()
        builder = self._covariance_builder(dataset)
        n_model = model.n_params

        def cov_from_unconstrained(noise_u, trajectory):
            noise = constrain_columns(noise_u[None, :], self.noise_transforms)[0]
            return builder(noise, trajectory)

        likelihood = MvnLikelihood(dataset, model, cov_from_unconstrained)

        def target(x):
            return log_posterior(
                x[:n_model], x[n_model:], likelihood, model_priors, noise_priors
            )

        theta0 = np.asarray(self.theta0 if self.theta0 is not None else
                            model.suggest_start(dataset), dtype=float)
        phi0 = model.to_unconstrained(theta0)
        residuals0 = dataset.values - model.simulate(theta0, dataset.times)
        noise0 = np.asarray(self._noise_start(dataset, residuals0), dtype=float)
        noise0_u = _to_unconstrained(noise0, self.noise_transforms)
        x0 = np.concatenate([phi0, noise0_u])

        best, self.map_diagnostics_ = multi_restart_map(
            target, x0, rng, restarts=self.map_restarts
        )
        x_map = best.x

        chains = []
        seeds = []
        acceptance = []
        child_seeds = np.random.SeedSequence(self.seed).spawn(self.chains)
        for c in range(self.chains):
            chain_rng = np.random.default_rng(child_seeds[c])
            start = self._chain_start(x_map, target, chain_rng)
            draws, acc = run_adaptive_chain(
                target, start, self.iterations, chain_rng,
                warmup_frac=self.warmup_frac,
            )
            chains.append(draws)
            seeds.append(c)
            acceptance.append(acc)

        names = tuple(model.param_names) + tuple(self.noise_names)
        transforms = tuple(model.transforms) + tuple(self.noise_transforms)
        store = ChainStore(
            chains=chains,
            param_names=names,
            warmup_frac=self.warmup_frac,
            seeds=tuple(seeds),
            acceptance=tuple(acceptance),
        )

        self.dataset_ = dataset
        self.param_names_ = names
        self.param_transforms_ = transforms
        self.chains_ = store
        self.map_unconstrained_ = x_map
        self.theta_map_ = model.to_constrained(x_map[:n_model])
        self.noise_map_ = constrain_columns(
            x_map[None, n_model:], self.noise_transforms
        )[0]
        self.rhat_ = store.rhat_all()
        self.converged_ = all(
            r < RHAT_LIMIT for r in self.rhat_.values()
        )
        self.summary_ = self._summarize(store, names, transforms)
        return self

    @staticmethod
    def _chain_start(x_map, target, rng, scale=0.02, attempts=20):
        for _ in range(attempts):
            start = x_map + scale * (1.0 + np.abs(x_map)) * rng.standard_normal(
                x_map.size
            )
            if np.isfinite(target(start)):
                return start
        return np.array(x_map, dtype=float)

    def _summarize(self, store: ChainStore, names, transforms):
        return summarize_chains(store, names, transforms, self.rhat_)


def _to_unconstrained(values, transforms):
    out = np.array(values, dtype=float)
    for k, kind in enumerate(transforms):
        if kind == "log":
            if out[k] <= 0:
                raise ValueError("log-transformed start values must be positive")
            out[k] = math.log(out[k])
    return out


def summarize_chains(store: ChainStore, names, transforms, rhat):
    """Posterior quantile table in reporting (constrained) space."""
    pooled = constrain_columns(store.draws(), transforms)
    qs = np.quantile(pooled, [0.025, 0.25, 0.5, 0.75, 0.975], axis=0)
    summary = {}
    for k, name in enumerate(names):
        summary[name] = {
            "q2.5": float(qs[0, k]),
            "q25": float(qs[1, k]),
            "q50": float(qs[2, k]),
            "q75": float(qs[3, k]),
            "q97.5": float(qs[4, k]),
            "mean": float(pooled[:, k].mean()),
            "sd": float(pooled[:, k].std(ddof=1)),
            "rhat": float(rhat[name]),
        }
    return summary


def iid_map_fit(dataset: Dataset, model: ForwardModel, model_priors=None,
                restarts=3, rng=None, max_iters=500):
    """MAP of (model parameters, common noise scale) under IID Gaussian noise.

    Returns (theta_map, sigma_map, residuals). Used as the first step of
    the data-driven kernel initializations.
    """
    from .covariance import SparseCovariance
    from .likelihood import normal_prior

    rng = rng if rng is not None else np.random.default_rng(0)
    if model_priors is None:
        model_priors = default_model_priors(model)
    noise_priors = (normal_prior(0.0, 4.0),)
    n = len(dataset)
    n_model = model.n_params

    def builder(noise, trajectory):
        sigma = math.exp(noise[0])  # noise vector is unconstrained (log sigma)
        return SparseCovariance(np.full((1, n), sigma**2))

    likelihood = MvnLikelihood(dataset, model, builder)

    def target(x):
        return log_posterior(
            x[:n_model], x[n_model:], likelihood, model_priors, noise_priors
        )

    theta0 = model.suggest_start(dataset)
    resid0 = dataset.values - model.simulate(theta0, dataset.times)
    sigma0 = max(float(np.std(resid0)), 1e-8)
    x0 = np.concatenate([model.to_unconstrained(theta0), [math.log(sigma0)]])
    best, _ = multi_restart_map(target, x0, rng, restarts=restarts,
                                max_iters=max_iters)
    theta_map = model.to_constrained(best.x[:n_model])
    sigma_map = math.exp(best.x[n_model])
    residuals = dataset.values - model.simulate(theta_map, dataset.times)
    return theta_map, sigma_map, residuals
