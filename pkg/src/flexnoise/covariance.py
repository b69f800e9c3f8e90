"""Truncated covariance matrices with cached banded Cholesky factors.

Kernel-generated covariances decay away from the diagonal, so entries
below a small absolute threshold (default 1e-9) are dropped. On a sorted
time grid the surviving entries sit inside a band, which makes a banded
Cholesky factorization (LAPACK pbtrf) the natural sparse path: cost
O(n b^2) instead of O(n^3).

Truncation can introduce tiny negative eigenvalues, so factorization uses
an escalating jitter: add 1e-10 * max(diag) to the diagonal and retry,
doubling up to 1e-6 * max(diag); past that the matrix is reported as not
positive definite. Truncation happens first, jitter second.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg
import scipy.sparse

from ._validation import check_increasing
from .exceptions import NumericalError
from .kernels import NonStationaryLaplacian, StationaryKernel

DEFAULT_THRESHOLD = 1e-9
_JITTER_START = 1e-10
_JITTER_MAX = 1e-6


class SparseCovariance:
    """Symmetric positive definite matrix with sub-threshold entries dropped.

    Storage is lower banded: ``bands[d, i] = Sigma[i + d, i]``. The banded
    Cholesky factor is computed once at construction and cached; instances
    are immutable afterwards and safe to share across threads.
    """

    def __init__(self, bands, threshold=DEFAULT_THRESHOLD):
        bands = np.array(bands, dtype=float, ndmin=2)
        if np.any(bands[0] <= 0):
            raise ValueError("covariance diagonal entries must be strictly positive")
        self.threshold = float(threshold)
        self._truncate(bands)
        self._factor = None
        self.jitter = 0.0
        self._factorize()

    def _truncate(self, bands):
        n = bands.shape[1]
        if bands.shape[0] > 1:
            off = bands[1:]
            off[np.abs(off) < self.threshold] = 0.0
        # drop trailing all-zero diagonals so the band is tight
        bw = bands.shape[0] - 1
        while bw > 0 and not np.any(bands[bw, : n - bw]):
            bw -= 1
        bands = bands[: bw + 1]
        for d in range(1, bands.shape[0]):
            bands[d, n - d:] = 0.0
        bands.flags.writeable = False
        self.bands = bands
        self.n = n

    @classmethod
    def from_dense(cls, matrix, threshold=DEFAULT_THRESHOLD):
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError("matrix must be square")
        if not np.allclose(matrix, matrix.T, rtol=0, atol=1e-12 * max(1.0, np.abs(matrix).max())):
            raise ValueError("matrix must be symmetric")
        n = matrix.shape[0]
        bands = np.zeros((n, n))
        for d in range(n):
            bands[d, : n - d] = np.diagonal(matrix, -d)
        return cls(bands, threshold)

    @property
    def bandwidth(self) -> int:
        """Maximum |i - j| over stored nonzero entries."""
        bw = 0
        for d in range(self.bands.shape[0] - 1, 0, -1):
            if np.any(self.bands[d, : self.n - d]):
                bw = d
                break
        return bw

    def dense(self):
        n = self.n
        out = np.zeros((n, n))
        for d in range(self.bands.shape[0]):
            idx = np.arange(n - d)
            out[idx + d, idx] = self.bands[d, : n - d]
            out[idx, idx + d] = self.bands[d, : n - d]
        return out

    def to_sparse(self):
        """View as a scipy CSC matrix (symmetric, explicit zeros dropped)."""
        n = self.n
        offsets, diags = [0], [self.bands[0]]
        for d in range(1, self.bands.shape[0]):
            vals = self.bands[d, : n - d]
            offsets.extend([-d, d])
            diags.extend([vals, vals])
        mat = scipy.sparse.diags(diags, offsets, shape=(n, n), format="csc")
        mat.eliminate_zeros()
        return mat

    def _factorize(self):
        base = self.bands.copy()
        max_diag = base[0].max()
        jitter = 0.0
        while True:
            ab = base.copy()
            ab[0] += jitter
            try:
                self._factor = scipy.linalg.cholesky_banded(
                    ab, lower=True, check_finite=False
                )
                self.jitter = jitter
                return
            except scipy.linalg.LinAlgError:
                if jitter == 0.0:
                    jitter = _JITTER_START * max_diag
                else:
                    jitter *= 2.0
                if jitter > _JITTER_MAX * max_diag:
                    smallest = scipy.linalg.eig_banded(
                        base, lower=True, eigvals_only=True,
                        select="i", select_range=(0, 0),
                    )[0]
                    raise NumericalError(
                        "covariance is not positive definite even with maximum "
                        f"jitter {_JITTER_MAX * max_diag:.3g}; smallest pivot "
                        f"(eigenvalue) ~ {smallest:.6g}"
                    ) from None

    @property
    def log_det(self) -> float:
        return 2.0 * float(np.sum(np.log(self._factor[0])))

    def solve_half(self, rhs):
        """Return L^{-1} rhs for the cached factor Sigma = L L^T."""
        bw = self._factor.shape[0] - 1
        return scipy.linalg.solve_banded(
            (bw, 0), self._factor, rhs, check_finite=False
        )

    def mahalanobis_sq(self, residual):
        w = self.solve_half(residual)
        with np.errstate(over="ignore"):
            return float(w @ w)  # inf for extreme residuals -> -inf density


def _band_limit(times, max_lag) -> int:
    """Largest offset whose closest pair is still within the lag bound.

    The smallest gap at offset d grows with d, so the scan can stop at the
    first offset out of reach; uniform grids resolve in closed form.
    """
    n = times.size
    if n < 2 or max_lag <= 0:
        return 0
    if not np.isfinite(max_lag) or max_lag >= times[-1] - times[0]:
        return n - 1
    steps = np.diff(times)
    lo, hi = steps.min(), steps.max()
    if hi - lo <= 1e-12 * hi:
        return min(n - 1, int(np.floor(max_lag / lo + 1e-12)))
    bw = 0
    for d in range(1, min(n, int(np.floor(max_lag / lo)) + 1)):
        if np.min(times[d:] - times[:-d]) <= max_lag:
            bw = d
        else:
            break
    return bw


def _band_indices(n, bw):
    cols = np.arange(n)
    rows = cols[None, :] + np.arange(bw + 1)[:, None]
    valid = rows < n
    return np.minimum(rows, n - 1), cols, valid


def nonstationary_banded(
    times, log_length, log_sigma, threshold=DEFAULT_THRESHOLD
) -> SparseCovariance:
    """Banded covariance from per-time non-stationary Laplacian parameters.

    ``log_length`` and ``log_sigma`` are already interpolated to ``times``;
    this is the hot path behind :func:`build_covariance` for the
    non-stationary kernel.
    """
    times = np.asarray(times, dtype=float)
    n = times.size
    if not (np.all(np.isfinite(log_length)) and np.all(np.isfinite(log_sigma))):
        raise NumericalError("non-finite interpolated kernel parameter")
    with np.errstate(over="raise"):
        try:
            L = np.exp(log_length)
            S = np.exp(log_sigma)
            s_max2 = float(np.max(S)) ** 2
            max_lag = (
                0.0 if s_max2 < threshold
                else -math.sqrt(2.0) * float(np.max(L)) * math.log(threshold / s_max2)
            )
            bw = _band_limit(times, max_lag)
            rows, cols, valid = _band_indices(n, bw)
            li, lj = L[rows], L[cols][None, :]
            denom2 = li**2 + lj**2
            bands = (
                S[rows] * S[cols][None, :]
                * np.sqrt(2.0 * li * lj / denom2)
                * np.exp(-(times[rows] - times[cols][None, :]) / np.sqrt(denom2))
            )
        except FloatingPointError as exc:
            raise NumericalError(f"kernel parameter overflow: {exc}") from None
    bands[~valid] = 0.0
    return SparseCovariance(bands, threshold)


def build_covariance(kernel, times, threshold=DEFAULT_THRESHOLD) -> SparseCovariance:
    """Assemble Sigma_ij = C(t_i, t_j) band by band and truncate.

    Only off-diagonal bands that can reach the threshold (per the kernel's
    lag bound) are evaluated, so assembly is O(n * bandwidth).
    """
    times = check_increasing(times)
    n = times.size
    if isinstance(kernel, NonStationaryLaplacian):
        log_l, log_s = kernel.params_at(times)
        return nonstationary_banded(times, log_l, log_s, threshold)

    max_lag = kernel.max_lag(threshold)
    bw = _band_limit(times, max_lag)
    if isinstance(kernel, StationaryKernel):
        steps = np.diff(times)
        if steps.size and steps.max() - steps.min() <= 1e-12 * steps.max():
            lags = np.arange(bw + 1) * steps[0]
            vals = kernel(lags, np.zeros(bw + 1))
            bands = np.repeat(vals[:, None], n, axis=1)
            for d in range(1, bw + 1):
                bands[d, n - d:] = 0.0
            return SparseCovariance(bands, threshold)
    rows, cols, valid = _band_indices(n, bw)
    bands = np.where(valid, kernel(times[rows], times[cols][None, :]), 0.0)
    return SparseCovariance(bands, threshold)


def chol_dense_with_jitter(matrix):
    """Dense Cholesky under the same escalating-jitter policy.

    Returns (lower_factor, jitter_used).
    """
    matrix = np.asarray(matrix, dtype=float)
    max_diag = np.diagonal(matrix).max()
    jitter = 0.0
    while True:
        try:
            factor = scipy.linalg.cholesky(
                matrix + jitter * np.eye(matrix.shape[0]), lower=True,
                check_finite=False,
            )
            return factor, jitter
        except scipy.linalg.LinAlgError:
            if jitter == 0.0:
                jitter = _JITTER_START * max_diag
            else:
                jitter *= 2.0
            if jitter > _JITTER_MAX * max_diag:
                smallest = scipy.linalg.eigvalsh(matrix)[0]
                raise NumericalError(
                    "matrix is not positive definite even with maximum jitter; "
                    f"smallest pivot (eigenvalue) ~ {smallest:.6g}"
                ) from None
