"""Comparison methods: rejection ABC and KDE with importance weighting."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from .embeddings import JointSample, WeightedSample
from .errors import DegenerateWeightsError, InputError
from .kernels import as_points

__all__ = [
    "AbcConfig",
    "AbcResult",
    "abc_rejection",
    "KdeConfig",
    "kde_iw_posterior",
    "kde_iw_weight_matrix",
    "kde_loo_bandwidth",
]


def euclidean(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise distance between ``a`` (``m x r``) and a single point ``b``."""
    return np.sqrt(np.sum((a - b) ** 2, axis=1))


@dataclass(frozen=True)
class AbcConfig:
    tolerance: float
    max_draws: int
    rng_seed: int = 0
    distance: Callable[[np.ndarray, np.ndarray], np.ndarray] = euclidean
    batch_size: int = 4096
    target_accepted: int | None = None

    def __post_init__(self):
        if not self.tolerance > 0:
            raise InputError(f"tolerance must be positive, got {self.tolerance}")
        if self.max_draws < 1:
            raise InputError("max_draws must be at least 1")
        if self.batch_size < 1:
            raise InputError("batch_size must be at least 1")
        if self.target_accepted is not None and self.target_accepted < 1:
            raise InputError("target_accepted must be at least 1")


@dataclass
class AbcResult:
    accepted: np.ndarray
    accepted_index: np.ndarray
    draws: int
    wallclock: float

    @property
    def acceptance_rate(self) -> float:
        return self.accepted.shape[0] / self.draws

    @property
    def empty(self) -> bool:
        return self.accepted.shape[0] == 0

    def mean(self) -> np.ndarray:
        """Mean of accepted points; NaN when nothing was accepted."""
        if self.empty:
            return np.full(self.accepted.shape[1], np.nan)
        return self.accepted.mean(axis=0)


def abc_rejection(prior_sampler, likelihood_sampler, y_obs, cfg: AbcConfig) -> AbcResult:
    """Rejection ABC with a fixed budget of ``cfg.max_draws`` proposals.

    ``prior_sampler(rng, m)`` returns ``m`` prior draws as an ``(m, d)``
    array and ``likelihood_sampler(xs, rng)`` one observation per row of
    ``xs``. A proposal is kept when ``distance(Y, y_obs) < tolerance``.
    Proposals are drawn in batches from one generator seeded with
    ``cfg.rng_seed``, so runs with equal seed and batch size see the same
    proposal stream regardless of tolerance. Zero acceptances give an empty
    result, not an error.

    With ``cfg.target_accepted`` the sampler stops at that many acceptances
    (or at ``max_draws``, whichever comes first); ``draws`` then counts the
    proposals up to and including the last accepted one, as a sequential
    sampler would.
    """
    y_obs = np.asarray(y_obs, dtype=float).ravel()
    rng = np.random.default_rng(cfg.rng_seed)
    start = time.perf_counter()
    kept, kept_idx = [], []
    done = n_kept = 0
    dim = None
    target = cfg.target_accepted
    while done < cfg.max_draws and (target is None or n_kept < target):
        m = min(cfg.batch_size, cfg.max_draws - done)
        xs = np.asarray(prior_sampler(rng, m), dtype=float).reshape(m, -1)
        ys = np.asarray(likelihood_sampler(xs, rng), dtype=float).reshape(m, -1)
        dim = xs.shape[1]
        hit = cfg.distance(ys, y_obs) < cfg.tolerance
        kept.append(xs[hit])
        kept_idx.append(done + np.flatnonzero(hit))
        n_kept += int(hit.sum())
        done += m
    accepted = np.concatenate(kept) if kept else np.empty((0, dim or 0))
    index = np.concatenate(kept_idx) if kept_idx else np.empty(0, dtype=int)
    if target is not None and index.size >= target:
        accepted, index = accepted[:target], index[:target]
        done = int(index[-1]) + 1
    return AbcResult(accepted, index, done, time.perf_counter() - start)


@dataclass(frozen=True)
class KdeConfig:
    """Gaussian-density bandwidths for the state and observation spaces."""

    h_x: float
    h_y: float

    def __post_init__(self):
        if not (self.h_x > 0 and self.h_y > 0):
            raise InputError("KDE bandwidths must be positive")


def _log_gauss(D2, h, dim):
    return -D2 / (2.0 * h * h) - dim * math.log(h) - 0.5 * dim * math.log(2.0 * math.pi)


def kde_iw_weight_matrix(joint: JointSample, prior_points, cfg: KdeConfig, Ys) -> np.ndarray:
    """Importance weights for several conditioning points; one row per ``y``.

    ``p(y | U_i)`` is the ratio of the joint KDE to the X-marginal KDE at
    ``U_i``. Prior points where the marginal density underflows get weight
    zero. Raises :class:`DegenerateWeightsError` if no prior point has
    positive estimated density.
    """
    U = as_points(prior_points, joint.x.shape[1])
    Ys = as_points(Ys, joint.y.shape[1])
    d, r = joint.x.shape[1], joint.y.shape[1]
    log_kx = _log_gauss(cdist(U, joint.x, "sqeuclidean"), cfg.h_x, d)  # (l, n)
    log_ky = _log_gauss(cdist(Ys, joint.y, "sqeuclidean"), cfg.h_y, r)  # (m, n)
    kx = np.exp(log_kx)
    denom = kx.sum(axis=1)
    valid = denom > 0
    if not np.any(valid):
        raise DegenerateWeightsError("prior sample lies outside the data support")
    # log p(y|U_i) = logsumexp_j(log kx_ij + log ky_j) - log denom_i, computed
    # in log space so that far conditioning points do not underflow to 0/0.
    log_denom = np.log(denom[valid])
    Z = np.zeros((Ys.shape[0], U.shape[0]))
    for s in range(0, Ys.shape[0], 32):
        blk = log_ky[s : s + 32]
        log_p = logsumexp(log_kx[None, valid, :] + blk[:, None, :], axis=2) - log_denom
        Z[s : s + 32, valid] = np.exp(log_p - logsumexp(log_p, axis=1, keepdims=True))
    return Z


def kde_iw_posterior(joint: JointSample, prior_points, cfg: KdeConfig, y) -> WeightedSample:
    """Posterior at ``y`` as the prior sample with normalized importance weights."""
    y = np.asarray(y, dtype=float).reshape(1, -1)
    Z = kde_iw_weight_matrix(joint, prior_points, cfg, y)
    return WeightedSample(as_points(prior_points), Z[0], "X")


def kde_loo_bandwidth(joint: JointSample, grid) -> float:
    """Common bandwidth ``h = h_x = h_y`` maximizing leave-one-out joint log-likelihood.

    A likelihood-based stand-in for least-squares cross-validation.
    """
    grid = [float(h) for h in grid]
    if not grid:
        raise InputError("empty bandwidth grid")
    Z = np.hstack([joint.x, joint.y])
    n, dim = Z.shape
    if n < 2:
        raise InputError("need at least two samples")
    D2 = cdist(Z, Z, "sqeuclidean")
    best_h, best = grid[0], -np.inf
    for h in grid:
        L = _log_gauss(D2, h, dim)
        np.fill_diagonal(L, -np.inf)
        score = float(np.sum(logsumexp(L, axis=1) - math.log(n - 1)))
        if score > best:
            best_h, best = h, score
    return best_h
