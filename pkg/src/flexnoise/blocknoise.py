"""Change-point noise: partition prior, block covariance, and the
split-merge-shuffle sampler.

The time series is divided into consecutive blocks, each with its own
stationary kernel parameters psi = (log length, log sigma); the covariance
matrix is block diagonal, so the likelihood decomposes as a sum of
per-block MVN terms and proposals only pay for the blocks they touch.

The prior over partitions is the restricted product partition model with
discount s in [0, 1) and strength phi > -s:

    p(rho | s, phi) = N!/k! * prod_{i<k}(phi + i s) / (phi+1)_{N-1}
                      * prod_j (1-s)_{n_j - 1} / n_j!

(rising factorials throughout, evaluated in log space). Because the block
parameters are not conjugate, split proposals draw the new block's psi
from a Gaussian random walk and the proposal density enters the
Metropolis-Hastings ratio: on the forward side for a split, on the
reverse side for a merge. A merge keeps the first block's psi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ._validation import check_increasing
from .base import (
    BaseEstimator,
    FittedPosteriorMixin,
    default_model_priors,
    iid_map_fit,
    summarize_chains,
)
from .covariance import DEFAULT_THRESHOLD, SparseCovariance, build_covariance
from .data import Dataset
from .exceptions import NumericalError
from .inference import AdaptiveState, ChainStore, adaptive_mh_step, reflect_into
from .kernels import StationaryKernel
from .likelihood import (
    LOG_2PI,
    BetaPrior,
    ShiftedGammaPrior,
    default_kernel_priors,
    sum_log_priors,
)

RHAT_LIMIT = 1.05
_SPLIT_PROB = 0.25


@dataclass(frozen=True)
class PpmHyper:
    """Discount s in [0, 1) and strength phi with phi + s > 0."""

    s: float
    phi: float

    def __post_init__(self):
        if not 0.0 <= self.s < 1.0:
            raise ValueError("discount s must lie in [0, 1)")
        if not self.phi + self.s > 0.0:
            raise ValueError("strength phi must exceed -s")


class Partition:
    """Assignment of N consecutive time points to K consecutive blocks.

    ``z`` holds 1-based block labels (non-decreasing, steps of 0 or 1);
    ``psi`` holds one (log length, log sigma) row per block.
    """

    __slots__ = ("z", "psi", "sizes")

    def __init__(self, z, psi):
        self.z = np.asarray(z, dtype=int)
        self.psi = np.asarray(psi, dtype=float).reshape(-1, 2)
        self.validate()
        k = int(self.z[-1])
        self.sizes = np.bincount(self.z, minlength=k + 1)[1:]

    def validate(self):
        z = self.z
        if z.size == 0:
            raise ValueError("partition cannot be empty")
        steps = np.diff(z)
        if z[0] != 1 or np.any((steps != 0) & (steps != 1)):
            raise ValueError("z must start at 1 and increase in steps of 0 or 1")
        if self.psi.shape[0] != int(z[-1]):
            raise ValueError("psi must have exactly one row per block")
        if not np.all(np.isfinite(self.psi)):
            raise ValueError("psi must be finite")

    @classmethod
    def from_sizes(cls, sizes, psi):
        sizes = np.asarray(sizes, dtype=int)
        psi = np.asarray(psi, dtype=float).reshape(-1, 2)
        if sizes.size == 0 or np.any(sizes < 1):
            raise ValueError("block sizes must be positive")
        if psi.shape[0] != sizes.size:
            raise ValueError("psi must have exactly one row per block")
        if not np.all(np.isfinite(psi)):
            raise ValueError("psi must be finite")
        obj = cls.__new__(cls)
        obj.z = np.repeat(np.arange(1, sizes.size + 1), sizes)
        obj.psi = psi
        obj.sizes = sizes
        return obj

    @classmethod
    def single_block(cls, n, psi0):
        return cls.from_sizes([n], np.asarray(psi0, dtype=float).reshape(1, 2))

    @property
    def k(self) -> int:
        return self.sizes.size

    @property
    def n(self) -> int:
        return self.z.size

    def block_slices(self):
        ends = np.cumsum(self.sizes)
        starts = ends - self.sizes
        return [slice(int(a), int(b)) for a, b in zip(starts, ends)]

    def boundaries(self):
        """Indices i such that a block ends between points i and i+1."""
        return np.cumsum(self.sizes)[:-1] - 1

    def __eq__(self, other):
        return (
            isinstance(other, Partition)
            and np.array_equal(self.z, other.z)
            and np.array_equal(self.psi, other.psi)
        )


def ppm_log_prior(partition, hyper: PpmHyper) -> float:
    """Log restricted-PPM prior of a partition (or of its block sizes)."""
    if isinstance(partition, Partition):
        sizes = partition.sizes
    else:
        sizes = [int(x) for x in partition]
        if any(x < 1 for x in sizes):
            raise ValueError("block sizes must be positive")
    s, phi = hyper.s, hyper.phi
    lgamma = math.lgamma
    n = 0
    k = 0
    tail = 0.0
    lg_one_minus_s = lgamma(1.0 - s)
    for size in sizes:
        size = int(size)
        n += size
        k += 1
        tail += lgamma(size - s) - lg_one_minus_s - lgamma(size + 1)
    total = lgamma(n + 1) - lgamma(k + 1)
    for i in range(1, k):
        total += math.log(phi + i * s)
    total -= lgamma(phi + n) - lgamma(phi + 1)
    return total + tail


def block_covariance(
    partition: Partition, times, kernel_kind="laplacian", threshold=DEFAULT_THRESHOLD
) -> SparseCovariance:
    """Block-diagonal covariance: block m filled by its stationary kernel.

    Positive definiteness is inherited from the blocks; entries across
    blocks are exactly zero.
    """
    times = check_increasing(times)
    if times.size != partition.n:
        raise ValueError("partition length must equal the number of times")
    pieces = []
    for j, sl in enumerate(partition.block_slices()):
        kernel = StationaryKernel(
            kernel_kind,
            sigma=math.exp(partition.psi[j, 1]),
            length_scale=math.exp(partition.psi[j, 0]),
        )
        pieces.append(build_covariance(kernel, times[sl], threshold))
    bw = max(p.bands.shape[0] for p in pieces) - 1
    bands = np.zeros((bw + 1, times.size))
    offset = 0
    for p in pieces:
        rows = p.bands.shape[0]
        for d in range(rows):
            bands[d, offset: offset + p.n - d] = p.bands[d, : p.n - d]
        offset += p.n
    return SparseCovariance(bands, threshold)


# ---------------------------------------------------------------------------
# Proposals
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MoveProposal:
    partition: Partition
    log_forward: float
    log_reverse: float
    kind: str
    j: int
    l: int = 0


def _psi_walk_logpdf(delta, scale):
    delta = np.asarray(delta, dtype=float)
    return float(-0.5 * np.sum(LOG_2PI + 2.0 * math.log(scale) + (delta / scale) ** 2))


def propose_split(partition: Partition, rng, psi_scale=0.25) -> MoveProposal:
    """Split a random block at a random interior point.

    The first sub-block keeps the parent's psi; the second draws its psi
    from a Gaussian walk centred on the parent's. The walk density is part
    of the forward proposal probability.
    """
    sizes = partition.sizes
    splittable = np.nonzero(sizes > 1)[0]
    if splittable.size == 0:
        raise ValueError("no block with more than one point to split")
    j = int(splittable[rng.integers(splittable.size)])
    n_j = int(sizes[j])
    l = 1 + int(rng.integers(n_j - 1))
    psi_split = partition.psi[j] + psi_scale * rng.standard_normal(2)

    new_sizes = np.concatenate([sizes[:j], [l, n_j - l], sizes[j + 1:]])
    new_psi = np.vstack(
        [partition.psi[: j + 1], psi_split[None, :], partition.psi[j + 1:]]
    )
    proposal = Partition.from_sizes(new_sizes, new_psi)
    log_forward = (
        -math.log(splittable.size)
        - math.log(n_j - 1)
        + _psi_walk_logpdf(psi_split - partition.psi[j], psi_scale)
    )
    # reverse: merge selects the pair (j, j+1) among K new adjacent pairs
    log_reverse = -math.log(partition.k)
    return MoveProposal(proposal, log_forward, log_reverse, "split", j, l)


def propose_merge(partition: Partition, rng, psi_scale=0.25) -> MoveProposal:
    """Merge a random adjacent pair; the merged block keeps the first
    block's psi, and the discarded psi enters the reverse density."""
    k = partition.k
    if k < 2:
        raise ValueError("merge requires at least two blocks")
    sizes = partition.sizes
    j = int(rng.integers(k - 1))
    merged = int(sizes[j] + sizes[j + 1])
    new_sizes = np.concatenate([sizes[:j], [merged], sizes[j + 2:]])
    new_psi = np.vstack([partition.psi[: j + 1], partition.psi[j + 2:]])
    proposal = Partition.from_sizes(new_sizes, new_psi)
    log_forward = -math.log(k - 1)
    splittable_after = int(np.count_nonzero(new_sizes > 1))
    log_reverse = (
        -math.log(splittable_after)
        - math.log(merged - 1)
        + _psi_walk_logpdf(partition.psi[j + 1] - partition.psi[j], psi_scale)
    )
    return MoveProposal(proposal, log_forward, log_reverse, "merge", j)


def propose_shuffle(partition: Partition, rng) -> MoveProposal:
    """Move the boundary between a random adjacent pair; K and psi are
    unchanged and the proposal is symmetric."""
    k = partition.k
    if k < 2:
        raise ValueError("shuffle requires at least two blocks")
    sizes = partition.sizes
    j = int(rng.integers(k - 1))
    total = int(sizes[j] + sizes[j + 1])
    l = 1 + int(rng.integers(total - 1))
    new_sizes = sizes.copy()
    new_sizes[j] = l
    new_sizes[j + 1] = total - l
    proposal = Partition.from_sizes(new_sizes, partition.psi.copy())
    log_density = -math.log(k - 1) - math.log(total - 1)
    return MoveProposal(proposal, log_density, log_density, "shuffle", j, l)


def split_move_log_prob(k, n) -> float:
    """Log probability that the structural move executed is a split."""
    if k == 1:
        return 0.0
    if k >= n:
        return -math.inf
    return math.log(_SPLIT_PROB)


def merge_move_log_prob(k, n) -> float:
    if k == 1:
        return -math.inf
    if k >= n:
        return 0.0
    return math.log(1.0 - _SPLIT_PROB)


# ---------------------------------------------------------------------------
# Sampler
# ---------------------------------------------------------------------------


@dataclass
class BlockSamplerConfig:
    iterations: int = 20000
    chains: int = 3
    warmup_frac: float = 0.5
    kernel: str = "laplacian"
    psi_scale: float = 0.25
    s_scale: float = 0.05
    phi_scale: float = 0.5
    s_prior_a: float = 1.0
    s_prior_b: float = 1.0
    phi_prior_a: float = 0.01
    phi_prior_b: float = 100.0
    psi_priors: tuple | None = None
    model_priors: tuple | None = None
    threshold: float = DEFAULT_THRESHOLD
    seed: int | None = None
    s_init: float = 0.5
    strength_plus_s_init: float = 0.01
    fixed_hyper: tuple | None = None
    sample_theta: bool = True
    constant_likelihood: bool = False
    map_restarts: int = 3


@dataclass
class BlockChainDraws:
    """Raw per-iteration records of one chain."""

    theta: np.ndarray            # (iterations, n_model) unconstrained
    k: np.ndarray
    s: np.ndarray
    phi: np.ndarray
    total_log_sigma: np.ndarray
    partitions: list             # (sizes tuple, psi array) per iteration
    acceptance: dict


class _BlockChain:
    """State machine for one split-merge-shuffle chain."""

    def __init__(self, dataset, model, config, rng, phi_model0, psi0):
        self.dataset = dataset
        self.model = model
        self.cfg = config
        self.rng = rng
        self.times = dataset.times
        self.values = dataset.values
        self.n = len(dataset)
        self.psi_priors = (
            config.psi_priors if config.psi_priors is not None
            else default_kernel_priors()
        )
        self.model_priors = (
            config.model_priors if config.model_priors is not None
            else default_model_priors(model)
        )
        self.s_prior = BetaPrior(config.s_prior_a, config.s_prior_b)

        self.phi_model = np.asarray(phi_model0, dtype=float)
        self.partition = Partition.single_block(self.n, psi0)
        if config.fixed_hyper is not None:
            self.s, self.phi = config.fixed_hyper
        else:
            self.s = config.s_init
            self.phi = config.strength_plus_s_init - config.s_init
        PpmHyper(self.s, self.phi)

        self._refresh_trajectory()
        self.terms = [
            self._block_term(sl, self.partition.psi[j])
            for j, sl in enumerate(self.partition.block_slices())
        ]
        if not all(np.isfinite(t) for t in self.terms):
            raise NumericalError("initial block likelihood is not finite")
        # the model-parameter proposal starts small: until the noise field
        # has adapted, wide theta moves can drift into co-adapted
        # high-noise local modes that are then hard to leave
        self.adapt = (
            AdaptiveState.initial(
                self.phi_model, sigma0=0.01 * (1.0 + np.abs(self.phi_model))
            )
            if config.sample_theta else None
        )
        self._ppm_cache = None
        self.accepts = {"theta": 0, "s": 0, "phi": 0, "psi": 0, "psi_total": 0,
                        "split": 0, "merge": 0, "shuffle": 0,
                        "split_total": 0, "merge_total": 0, "shuffle_total": 0}

    # likelihood pieces ---------------------------------------------------

    def _refresh_trajectory(self):
        if self.cfg.constant_likelihood:
            self.residuals = np.zeros(self.n)
            return
        theta = self.model.to_constrained(self.phi_model)
        traj = self.model.simulate(theta, self.times)
        self.residuals = self.values - np.asarray(traj, dtype=float)

    def _block_term(self, sl, psi_row, residuals=None) -> float:
        if self.cfg.constant_likelihood:
            return 0.0
        residuals = self.residuals if residuals is None else residuals
        try:
            kernel = StationaryKernel(
                self.cfg.kernel,
                sigma=math.exp(psi_row[1]),
                length_scale=math.exp(psi_row[0]),
            )
            cov = build_covariance(kernel, self.times[sl], self.cfg.threshold)
        except (NumericalError, ValueError, OverflowError):
            return -math.inf
        r = residuals[sl]
        return -0.5 * (r.size * LOG_2PI + cov.log_det + cov.mahalanobis_sq(r))

    def _phi_hyper_prior(self, s, phi) -> float:
        if not (0.0 <= s < 1.0) or phi + s <= 0.0:
            return -math.inf
        return (
            self.s_prior.log_density(s)
            + ShiftedGammaPrior(
                self.cfg.phi_prior_a, self.cfg.phi_prior_b, shift=-s
            ).log_density(phi)
        )

    # updates -------------------------------------------------------------

    def _update_theta(self, freeze):
        cache = {}

        def target(phi_model):
            prior = sum_log_priors(self.model_priors, phi_model)
            if prior == -math.inf:
                return -math.inf
            try:
                theta = self.model.to_constrained(phi_model)
                traj = np.asarray(
                    self.model.simulate(theta, self.times), dtype=float
                )
            except Exception:  # noqa: BLE001 - rejected, chain continues
                return -math.inf
            if not np.all(np.isfinite(traj)):
                return -math.inf
            residuals = self.values - traj
            terms = [
                self._block_term(sl, self.partition.psi[j], residuals)
                for j, sl in enumerate(self.partition.block_slices())
            ]
            total = sum(terms)
            cache[phi_model.tobytes()] = (residuals, terms)
            return prior + total

        if freeze and not self.adapt.frozen:
            self.adapt = replace(self.adapt, frozen=True)
        current_logp = sum_log_priors(self.model_priors, self.phi_model) + sum(self.terms)
        state, accepted, self.adapt = adaptive_mh_step(
            (self.phi_model, current_logp), target, self.adapt, self.rng
        )
        if accepted:
            self.phi_model = np.asarray(state[0], dtype=float)
            self.residuals, self.terms = cache[self.phi_model.tobytes()]
            self.accepts["theta"] += 1

    def _update_hyper(self):
        # discount s: reflected Gaussian walk on [0, 1]
        s_new = float(
            reflect_into(self.s + self.cfg.s_scale * self.rng.standard_normal(), 0.0, 1.0)
        )
        ppm_new = self._ppm_at(s_new, self.phi)
        log_num = self._phi_hyper_prior(s_new, self.phi) + ppm_new
        log_den = self._phi_hyper_prior(self.s, self.phi) + self._ppm_current()
        if _accept(log_num, log_den, self.rng):
            self.s = s_new
            self._ppm_cache = ppm_new
            self.accepts["s"] += 1

        # strength phi: Gaussian walk on log(phi + s); the Jacobian of the
        # log reparameterization enters as +w on each side
        x = self.phi + self.s
        w_new = math.log(x) + self.cfg.phi_scale * self.rng.standard_normal()
        x_new = math.exp(w_new)
        phi_new = x_new - self.s
        ppm_new = self._ppm_at(self.s, phi_new)
        log_num = self._phi_hyper_prior(self.s, phi_new) + ppm_new + w_new
        log_den = (
            self._phi_hyper_prior(self.s, self.phi)
            + self._ppm_current()
            + math.log(x)
        )
        if _accept(log_num, log_den, self.rng):
            self.phi = phi_new
            self._ppm_cache = ppm_new
            self.accepts["phi"] += 1

    def _ppm_at(self, s, phi):
        if not (0.0 <= s < 1.0) or phi + s <= 0.0:
            return -math.inf
        return ppm_log_prior(self.partition, PpmHyper(s, phi))

    def _ppm_current(self):
        if self._ppm_cache is None:
            self._ppm_cache = self._ppm_at(self.s, self.phi)
        return self._ppm_cache

    def _update_psi(self):
        slices = self.partition.block_slices()
        psi = self.partition.psi
        for j, sl in enumerate(slices):
            self.accepts["psi_total"] += 1
            proposal = psi[j] + self.cfg.psi_scale * self.rng.standard_normal(2)
            new_term = self._block_term(sl, proposal)
            log_num = new_term + sum_log_priors(self.psi_priors, proposal)
            log_den = self.terms[j] + sum_log_priors(self.psi_priors, psi[j])
            if _accept(log_num, log_den, self.rng):
                psi[j] = proposal
                self.terms[j] = new_term
                self.accepts["psi"] += 1

    def _structural_move(self):
        k = self.partition.k
        u = self.rng.uniform()
        want_split = k == 1 or u < _SPLIT_PROB
        splittable = bool(np.any(self.partition.sizes > 1))
        if want_split and splittable:
            self._try_split()
        elif k >= 2:
            self._try_merge()

    def _try_split(self):
        k, n = self.partition.k, self.n
        prop = propose_split(self.partition, self.rng, self.cfg.psi_scale)
        slices = prop.partition.block_slices()
        term_a = self._block_term(slices[prop.j], prop.partition.psi[prop.j])
        term_b = self._block_term(slices[prop.j + 1], prop.partition.psi[prop.j + 1])
        self.accepts["split_total"] += 1
        if term_a == -math.inf or term_b == -math.inf:
            return
        hyper = PpmHyper(self.s, self.phi)
        ppm_new = ppm_log_prior(prop.partition, hyper)
        log_num = (
            term_a + term_b
            + ppm_new
            + sum_log_priors(self.psi_priors, prop.partition.psi[prop.j + 1])
            + merge_move_log_prob(k + 1, n)
            + prop.log_reverse
        )
        log_den = (
            self.terms[prop.j]
            + self._ppm_current()
            + split_move_log_prob(k, n)
            + prop.log_forward
        )
        if _accept(log_num, log_den, self.rng):
            self.partition = prop.partition
            self._ppm_cache = ppm_new
            self.terms[prop.j: prop.j + 1] = [term_a, term_b]
            self.accepts["split"] += 1

    def _try_merge(self):
        k, n = self.partition.k, self.n
        prop = propose_merge(self.partition, self.rng, self.cfg.psi_scale)
        slices = prop.partition.block_slices()
        term_m = self._block_term(slices[prop.j], prop.partition.psi[prop.j])
        self.accepts["merge_total"] += 1
        if term_m == -math.inf:
            return
        hyper = PpmHyper(self.s, self.phi)
        ppm_new = ppm_log_prior(prop.partition, hyper)
        log_num = (
            term_m
            + ppm_new
            + split_move_log_prob(k - 1, n)
            + prop.log_reverse
        )
        log_den = (
            self.terms[prop.j] + self.terms[prop.j + 1]
            + self._ppm_current()
            + sum_log_priors(self.psi_priors, self.partition.psi[prop.j + 1])
            + merge_move_log_prob(k, n)
            + prop.log_forward
        )
        if _accept(log_num, log_den, self.rng):
            self.partition = prop.partition
            self._ppm_cache = ppm_new
            self.terms[prop.j: prop.j + 2] = [term_m]
            self.accepts["merge"] += 1

    def _shuffle_move(self):
        if self.partition.k < 2:
            return
        prop = propose_shuffle(self.partition, self.rng)
        slices = prop.partition.block_slices()
        term_a = self._block_term(slices[prop.j], prop.partition.psi[prop.j])
        term_b = self._block_term(slices[prop.j + 1], prop.partition.psi[prop.j + 1])
        self.accepts["shuffle_total"] += 1
        if term_a == -math.inf or term_b == -math.inf:
            return
        hyper = PpmHyper(self.s, self.phi)
        ppm_new = ppm_log_prior(prop.partition, hyper)
        log_num = term_a + term_b + ppm_new
        log_den = (
            self.terms[prop.j] + self.terms[prop.j + 1] + self._ppm_current()
        )
        if _accept(log_num, log_den, self.rng):
            self.partition = prop.partition
            self._ppm_cache = ppm_new
            self.terms[prop.j: prop.j + 2] = [term_a, term_b]
            self.accepts["shuffle"] += 1

    # main loop -----------------------------------------------------------

    def run(self, iterations) -> BlockChainDraws:
        cfg = self.cfg
        n_model = self.phi_model.size if cfg.sample_theta else 0
        theta_draws = np.empty((iterations, n_model))
        k_draws = np.empty(iterations, dtype=int)
        s_draws = np.empty(iterations)
        phi_draws = np.empty(iterations)
        tls_draws = np.empty(iterations)
        partitions = []
        freeze_at = int(iterations * cfg.warmup_frac)

        for i in range(iterations):
            if cfg.sample_theta:
                self._update_theta(freeze=i >= freeze_at)
            if cfg.fixed_hyper is None:
                self._update_hyper()
            self._update_psi()
            self._structural_move()
            self._shuffle_move()
            if __debug__:
                self.partition.validate()

            part = self.partition
            if cfg.sample_theta:
                theta_draws[i] = self.phi_model
            k_draws[i] = part.k
            s_draws[i] = self.s
            phi_draws[i] = self.phi
            tls_draws[i] = float(part.sizes @ part.psi[:, 1])
            partitions.append((tuple(int(x) for x in part.sizes), part.psi.copy()))

        return BlockChainDraws(
            theta=theta_draws,
            k=k_draws,
            s=s_draws,
            phi=phi_draws,
            total_log_sigma=tls_draws,
            partitions=partitions,
            acceptance=dict(self.accepts),
        )


def _accept(log_num, log_den, rng) -> bool:
    if log_num == -math.inf:
        return False
    if log_den == -math.inf:
        return True
    return math.log(rng.uniform()) < log_num - log_den


@dataclass
class BlockFitResult:
    """Chains and diagnostics from the block-covariance sampler."""

    chains: list                     # list[BlockChainDraws]
    param_names: tuple
    warmup_frac: float
    theta_store: ChainStore | None = None
    rhat: dict = field(default_factory=dict)
    converged: bool = False

    def post_warmup_partitions(self):
        for draws in self.chains:
            cut = int(len(draws.partitions) * self.warmup_frac)
            yield from draws.partitions[cut:]

    def scalar_draws(self, name):
        out = []
        for draws in self.chains:
            arr = getattr(draws, name)
            out.append(arr[int(arr.size * self.warmup_frac):])
        return out

    def boundary_probabilities(self, n) -> np.ndarray:
        """Posterior probability of a block boundary between i and i+1."""
        counts = np.zeros(n - 1)
        total = 0
        for sizes, _psi in self.post_warmup_partitions():
            edges = np.cumsum(sizes)[:-1] - 1
            counts[edges] += 1
            total += 1
        return counts / max(total, 1)

    def median_partition(self, n, min_separation=None):
        """Boundary-count point estimate: the median K minus one highest
        marginal-probability boundary positions, greedily chosen with a
        minimum index separation so that one diffuse boundary peak cannot
        claim several of the slots."""
        ks = np.concatenate(self.scalar_draws("k"))
        k_med = int(round(float(np.median(ks))))
        if k_med <= 1:
            return np.array([], dtype=int)
        if min_separation is None:
            min_separation = max(2, n // 100)
        probs = self.boundary_probabilities(n)
        chosen = []
        for idx in np.argsort(probs)[::-1]:
            if probs[idx] <= 0.0:
                break
            if all(abs(idx - c) >= min_separation for c in chosen):
                chosen.append(int(idx))
            if len(chosen) == k_med - 1:
                break
        return np.sort(np.array(chosen, dtype=int))

    def noise_curves(self, times, quantiles=(0.05, 0.5, 0.95), thin_to=2000):
        """Per-time posterior quantiles of the noise sd and lag-1
        autocorrelation implied by the sampled partitions (lag-1 values
        assume the Laplacian block kernel: exp(-dt / L) within a block,
        exactly zero across a boundary)."""
        times = np.asarray(times, dtype=float)
        n = times.size
        parts = list(self.post_warmup_partitions())
        stride = max(1, len(parts) // thin_to)
        parts = parts[::stride]
        sds = np.empty((len(parts), n))
        lag1 = np.zeros((len(parts), n))
        gaps = np.diff(times)
        for row, (sizes, psi) in enumerate(parts):
            sizes_arr = np.asarray(sizes)
            sds[row] = np.repeat(np.exp(psi[:, 1]), sizes_arr)
            lengths = np.repeat(np.exp(psi[:, 0]), sizes_arr)
            corr = np.exp(-gaps / lengths[:-1])
            edges = np.cumsum(sizes_arr)[:-1] - 1
            corr[edges] = 0.0
            lag1[row, :-1] = corr
        return (
            np.quantile(sds, quantiles, axis=0),
            np.quantile(lag1, quantiles, axis=0),
        )


def run_block_sampler(dataset: Dataset, model, config: BlockSamplerConfig) -> BlockFitResult:
    """Run the full change-point sampler (one adaptive model-parameter step,
    hyperparameter and per-block MH steps, then split-or-merge and shuffle,
    every iteration) over several independent chains."""
    root = np.random.SeedSequence(config.seed)
    chain_seeds = root.spawn(config.chains + 1)
    init_rng = np.random.default_rng(chain_seeds[-1])

    if config.sample_theta and not config.constant_likelihood:
        theta_map, sigma_map, residuals = iid_map_fit(
            dataset, model, config.model_priors, restarts=config.map_restarts,
            rng=init_rng,
        )
        phi_model0 = model.to_unconstrained(theta_map)
        rho = _lag1(residuals)
        dt = dataset.dt if dataset.dt is not None else float(
            np.median(np.diff(dataset.times))
        )
        rho = min(max(abs(rho), 1e-3), 0.999)
        psi0 = np.array([math.log(-dt / math.log(rho)), math.log(max(sigma_map, 1e-8))])
    else:
        phi_model0 = (
            model.to_unconstrained(model.suggest_start(dataset))
            if config.sample_theta
            else np.zeros(0)
        )
        psi0 = np.array([-4.0, 0.0])

    runs = []
    for c in range(config.chains):
        rng = np.random.default_rng(chain_seeds[c])
        start = phi_model0 + (
            0.02 * (1.0 + np.abs(phi_model0)) * rng.standard_normal(phi_model0.size)
            if config.sample_theta else 0.0
        )
        chain = _BlockChain(dataset, model, config, rng, start, psi0)
        runs.append(chain.run(config.iterations))

    names = tuple(model.param_names) if config.sample_theta else ()
    result = BlockFitResult(
        chains=runs, param_names=names, warmup_frac=config.warmup_frac
    )
    rhat = {}
    if config.sample_theta:
        store = ChainStore(
            chains=[d.theta for d in runs],
            param_names=names,
            warmup_frac=config.warmup_frac,
            acceptance=tuple(
                d.acceptance["theta"] / config.iterations for d in runs
            ),
        )
        result.theta_store = store
        rhat.update(store.rhat_all())
    from .inference import split_rhat

    rhat["K"] = split_rhat(result.scalar_draws("k"))
    rhat["total_log_sigma"] = split_rhat(result.scalar_draws("total_log_sigma"))
    result.rhat = rhat
    result.converged = all(rhat[name] < RHAT_LIMIT for name in names)
    return result


def _lag1(residuals):
    r = np.asarray(residuals, dtype=float)
    r = r - r.mean()
    denom = float(r @ r)
    return float(r[:-1] @ r[1:]) / denom if denom else 0.0


class BlockNoiseModel(FittedPosteriorMixin, BaseEstimator):
    """Nonparametric change-point noise estimator.

    Jointly samples the model parameters, the partition of the time grid
    into blocks, each block's kernel parameters, and the partition prior
    hyperparameters (s, phi).

    Attributes after ``fit``
    ------------------------
    result_ : BlockFitResult with raw chains.
    chains_ : ChainStore over the model parameters.
    k_mode_, boundary_prob_, median_boundaries_ : partition summaries.
    rhat_, converged_, summary_ : convergence diagnostics and quantiles.
    """

    def __init__(self, model, priors=None, chains=3, iterations=20000,
                 warmup_frac=0.5, kernel="laplacian", psi_scale=0.25,
                 s_scale=0.05, phi_scale=0.5, phi_prior_a=0.01,
                 phi_prior_b=100.0, psi_priors=None, threshold=1e-9,
                 map_restarts=3, seed=None):
        self.model = model
        self.priors = priors
        self.chains = chains
        self.iterations = iterations
        self.warmup_frac = warmup_frac
        self.kernel = kernel
        self.psi_scale = psi_scale
        self.s_scale = s_scale
        self.phi_scale = phi_scale
        self.phi_prior_a = phi_prior_a
        self.phi_prior_b = phi_prior_b
        self.psi_priors = psi_priors
        self.threshold = threshold
        self.map_restarts = map_restarts
        self.seed = seed

    def _config(self):
        return BlockSamplerConfig(
            iterations=self.iterations,
            chains=self.chains,
            warmup_frac=self.warmup_frac,
            kernel=self.kernel,
            psi_scale=self.psi_scale,
            s_scale=self.s_scale,
            phi_scale=self.phi_scale,
            phi_prior_a=self.phi_prior_a,
            phi_prior_b=self.phi_prior_b,
            psi_priors=self.psi_priors,
            model_priors=self.priors,
            threshold=self.threshold,
            map_restarts=self.map_restarts,
            seed=self.seed,
        )

    def fit(self, times, values=None):
        from .base import as_dataset

        dataset = as_dataset(times, values)
        result = run_block_sampler(dataset, self.model, self._config())

        self.dataset_ = dataset
        self.result_ = result
        self.chains_ = result.theta_store
        self.param_names_ = result.param_names
        self.param_transforms_ = tuple(self.model.transforms)
        self.rhat_ = result.rhat
        self.converged_ = result.converged
        theta_rhat = {name: result.rhat[name] for name in result.param_names}
        self.summary_ = summarize_chains(
            result.theta_store, result.param_names,
            tuple(self.model.transforms), theta_rhat,
        )
        ks = np.concatenate(result.scalar_draws("k"))
        self.k_mode_ = int(np.bincount(ks).argmax())
        self.boundary_prob_ = result.boundary_probabilities(len(dataset))
        self.median_boundaries_ = result.median_partition(len(dataset))
        return self
