"""Samplers, optimizer, and convergence diagnostics.

The adaptive sampler is a global adaptive-covariance Metropolis: the
proposal is N(x, eta * (S + eps I)) where S is a running sample
covariance, eps = 1e-6 * trace(S)/d regularizes it, and log(eta) drifts
toward a 0.234 acceptance rate with the binary accept indicator. All
adaptation uses the decaying weight gamma_t = t^(-0.6) and is frozen at
the end of warm-up so the sampling phase is a fixed-kernel chain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.optimize

TARGET_ACCEPT = 0.234
_ADAPT_DECAY = 0.6


# ---------------------------------------------------------------------------
# Adaptive covariance Metropolis
# ---------------------------------------------------------------------------


@dataclass
class AdaptiveState:
    """Running adaptation state for the adaptive-covariance sampler."""

    mean: np.ndarray
    cov: np.ndarray
    log_step: float = 0.0
    count: int = 0
    frozen: bool = False

    @classmethod
    def initial(cls, x0, sigma0=None):
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        if sigma0 is None:
            sigma0 = 0.1 * (1.0 + np.abs(x0))
        sigma0 = np.broadcast_to(np.asarray(sigma0, dtype=float), x0.shape)
        return cls(mean=x0.copy(), cov=np.diag(sigma0**2))

    def proposal_cov(self):
        d = self.mean.size
        eps = 1e-6 * np.trace(self.cov) / d
        return math.exp(self.log_step) * (self.cov + eps * np.eye(d))


def adaptive_mh_step(state, log_target, adapt: AdaptiveState, rng):
    """One adaptive Metropolis step.

    ``state`` is the pair (x, logp); returns ((x', logp'), accepted, adapt').
    Proposals landing at -inf are always rejected; a -inf current point
    accepts any finite proposal.
    """
    x, logp = state
    x = np.atleast_1d(np.asarray(x, dtype=float))
    try:
        chol = np.linalg.cholesky(adapt.proposal_cov())
    except np.linalg.LinAlgError:
        chol = np.sqrt(np.diag(np.diag(adapt.proposal_cov())))
    proposal = x + chol @ rng.standard_normal(x.size)
    logp_new = log_target(proposal)

    if logp_new == -math.inf:
        accepted = False
    elif logp == -math.inf:
        accepted = True
    else:
        accepted = math.log(rng.uniform()) < logp_new - logp
    x_next, logp_next = (proposal, logp_new) if accepted else (x, logp)

    if adapt.frozen:
        return (x_next, logp_next), accepted, adapt
    count = adapt.count + 1
    # offset keeps the first weight below 1, so one update can never wipe
    # the running covariance to an exactly singular state
    gamma = (count + 1.0) ** -_ADAPT_DECAY
    mean = (1.0 - gamma) * adapt.mean + gamma * x_next
    dev = x_next - mean
    cov = (1.0 - gamma) * adapt.cov + gamma * np.outer(dev, dev)
    log_step = adapt.log_step + gamma * (float(accepted) - TARGET_ACCEPT)
    new_adapt = AdaptiveState(mean=mean, cov=cov, log_step=log_step, count=count)
    return (x_next, logp_next), accepted, new_adapt


def run_adaptive_chain(
    log_target, x0, iterations, rng, warmup_frac=0.5, sigma0=None
):
    """Run one adaptive chain; adaptation freezes at the warm-up cut.

    Returns (draws, acceptance_rate) with draws including warm-up.
    """
    x = np.atleast_1d(np.asarray(x0, dtype=float))
    logp = log_target(x)
    if not np.isfinite(logp):
        raise ValueError("log target must be finite at the starting point")
    adapt = AdaptiveState.initial(x, sigma0)
    freeze_at = int(iterations * warmup_frac)
    draws = np.empty((iterations, x.size))
    accepted_count = 0
    state = (x, logp)
    for i in range(iterations):
        if i == freeze_at:
            adapt = replace(adapt, frozen=True)
        state, accepted, adapt = adaptive_mh_step(state, log_target, adapt, rng)
        accepted_count += accepted
        draws[i] = state[0]
    return draws, accepted_count / iterations


def mh_step(x, logp, log_target, scale, rng, bounds=None):
    """Plain Metropolis step with a fixed Gaussian proposal.

    ``bounds`` = (lo, hi) reflects proposals back into the support, which
    keeps the proposal symmetric. Returns (x', logp', accepted).
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    proposal = x + np.asarray(scale) * rng.standard_normal(x.size)
    if bounds is not None:
        proposal = reflect_into(proposal, bounds[0], bounds[1])
    logp_new = log_target(proposal)
    if logp_new == -math.inf:
        accepted = False
    elif logp == -math.inf:
        accepted = True
    else:
        accepted = math.log(rng.uniform()) < logp_new - logp
    if accepted:
        return proposal, logp_new, True
    return x, logp, False


def reflect_into(x, lo, hi):
    """Fold values into [lo, hi] by repeated reflection at the bounds."""
    x = np.asarray(x, dtype=float).copy()
    lo = np.broadcast_to(np.asarray(lo, dtype=float), x.shape)
    hi = np.broadcast_to(np.asarray(hi, dtype=float), x.shape)
    width = hi - lo
    # map into a period of length 2*width, then fold the upper half back
    y = np.mod(x - lo, 2.0 * width)
    y = np.where(y > width, 2.0 * width - y, y)
    return lo + y


# ---------------------------------------------------------------------------
# Chain storage and diagnostics
# ---------------------------------------------------------------------------


@dataclass
class ChainStore:
    """Per-chain draw matrices with a shared warm-up convention.

    The read API returns post-warm-up draws by default so downstream
    statistics cannot accidentally include warm-up.
    """

    chains: list
    param_names: tuple
    warmup_frac: float = 0.5
    seeds: tuple = ()
    acceptance: tuple = ()

    def __post_init__(self):
        dims = {c.shape[1] for c in self.chains}
        if len(dims) > 1:
            raise ValueError("all chains must share the parameter dimension")
        if not 0.0 <= self.warmup_frac < 1.0:
            raise ValueError("warmup_frac must be in [0, 1)")

    @property
    def n_chains(self):
        return len(self.chains)

    def draws(self, chain=None, include_warmup=False):
        """Post-warm-up draws of one chain, or of all chains stacked."""
        if chain is None:
            return np.vstack([self.draws(c, include_warmup) for c in range(self.n_chains)])
        arr = self.chains[chain]
        if include_warmup:
            return arr
        return arr[int(arr.shape[0] * self.warmup_frac):]

    def quantiles(self, qs, param_index=None):
        pooled = self.draws()
        if param_index is not None:
            pooled = pooled[:, [param_index]]
        return np.quantile(pooled, qs, axis=0)

    def rhat(self, param_index):
        return split_rhat([self.draws(c)[:, param_index] for c in range(self.n_chains)])

    def rhat_all(self):
        return {
            name: self.rhat(i) for i, name in enumerate(self.param_names)
        }


def split_rhat(sequences) -> float:
    """Split Gelman-Rubin statistic over post-warm-up 1-D sequences.

    Each sequence is halved; the statistic compares between- and
    within-half variances. Zero within variance gives +inf by contract.
    """
    halves = []
    for seq in sequences:
        seq = np.asarray(seq, dtype=float)
        m = seq.size // 2
        if m < 2:
            raise ValueError("need at least 4 post-warm-up draws per chain")
        halves.append(seq[:m])
        halves.append(seq[m: 2 * m])
    n = min(h.size for h in halves)
    halves = np.array([h[:n] for h in halves])
    within = halves.var(axis=1, ddof=1).mean()
    if within == 0.0:
        return math.inf
    means = halves.mean(axis=1)
    between = n * means.var(ddof=1)
    pooled = (n - 1) / n * within + between / n
    return float(np.sqrt(pooled / within))


def gelman_rhat(store: ChainStore, param_index) -> float:
    """Split R-hat for one parameter of a ChainStore."""
    return store.rhat(param_index)


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------


@dataclass
class OptResult:
    x: np.ndarray
    value: float
    converged: bool
    message: str = ""
    n_iter: int = 0


def finite_diff_grad(fun, x, rel_step=1e-6, bounds=None):
    """Central finite-difference gradient with per-coordinate relative steps.

    Sample points are clipped into the bounds (one-sided at an active
    bound) and the quotient uses the actual spread.
    """
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for k in range(x.size):
        h = rel_step * max(1.0, abs(x[k]))
        lo = x[k] - h
        hi = x[k] + h
        if bounds is not None:
            lo = max(lo, bounds[k][0])
            hi = min(hi, bounds[k][1])
        xp = x.copy()
        xm = x.copy()
        xp[k] = hi
        xm[k] = lo
        grad[k] = (fun(xp) - fun(xm)) / (hi - lo)
    return grad


def optimize(log_target, x0, bounds=None, max_iters=500, rel_step=1e-6) -> OptResult:
    """Maximize ``log_target`` with bounded quasi-Newton (L-BFGS-B).

    Gradients come from :func:`finite_diff_grad`. The returned value is
    the best (largest) target seen at any evaluated point, so restarts can
    be compared directly.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    f0 = log_target(x0)
    if not np.isfinite(f0):
        raise ValueError("log target must be finite at the starting point")
    if bounds is not None:
        for k, (lo, hi) in enumerate(bounds):
            if not lo <= x0[k] <= hi:
                raise ValueError(f"x0[{k}] outside bounds [{lo}, {hi}]")

    best = {"x": x0.copy(), "value": f0}

    def objective(x):
        val = log_target(x)
        if np.isfinite(val) and val > best["value"]:
            best["x"] = np.array(x, dtype=float)
            best["value"] = float(val)
        if not np.isfinite(val):
            return 1e100
        return -val

    def gradient(x):
        return -finite_diff_grad(
            lambda z: _safe(log_target, z), x, rel_step=rel_step, bounds=bounds
        )

    result = scipy.optimize.minimize(
        objective,
        x0,
        jac=gradient,
        method="L-BFGS-B",
        bounds=bounds,
        options={"maxiter": max_iters, "gtol": 1e-6, "ftol": 1e-12},
    )
    converged = bool(result.success)
    return OptResult(
        x=best["x"],
        value=best["value"],
        converged=converged,
        message=str(result.message),
        n_iter=int(result.nit),
    )


def _safe(fun, x):
    val = fun(x)
    return val if np.isfinite(val) else -1e100
