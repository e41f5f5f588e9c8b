"""Bandwidth heuristics and cross-validation for KBR hyperparameters."""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .errors import DegenerateWeightsError, InputError, NumericError
from .kbr import posterior_operator_from_weights
from .kernels import GaussianRBF, as_points, gram_matrix
from .linalg import RegularizationSchedule, solve_regularized

__all__ = [
    "median_bandwidth",
    "CvPlan",
    "make_cv_plan",
    "default_grid",
    "CvResult",
    "kbr_cross_validate",
    "write_score_table",
]


def median_bandwidth(points) -> float:
    """Median of all pairwise Euclidean distances (lower median for even counts)."""
    P = as_points(points)
    if P.shape[0] < 2:
        raise InputError("median bandwidth needs at least two points")
    d = np.sort(pdist(P))
    med = float(d[(d.size - 1) // 2])
    if med <= 0.0:
        raise DegenerateWeightsError("median pairwise distance is zero")
    return med


def default_grid(n: int, betas=(0.25, 0.5, 1.0, 2.0, 4.0), eps_scales=(1e-4, 1e-3, 1e-2, 1e-1)):
    """``(beta, eps, delta)`` triples with ``eps = scale / n`` and ``delta = 2 eps``."""
    return [(b, s / n, 2.0 * s / n) for b, s in itertools.product(betas, eps_scales)]


@dataclass(frozen=True)
class CvPlan:
    """Fold partition and hyperparameter grid.

    Grid entries are ``(beta, eps, delta)``: ``beta`` multiplies the base
    bandwidths, and ``delta`` is on the covariance-operator scale (see
    :meth:`RegularizationSchedule.operator_scale`).
    """

    K: int
    folds: tuple[np.ndarray, ...]
    grid: tuple[tuple[float, float, float], ...]
    rng_seed: int

    def __post_init__(self):
        if self.K < 2 or len(self.folds) != self.K:
            raise InputError("a plan needs K >= 2 folds")


def make_cv_plan(n: int, K: int = 10, grid=None, rng_seed: int = 0) -> CvPlan:
    """Random balanced partition of ``range(n)`` into ``K`` folds."""
    if K < 2:
        raise InputError("K must be at least 2")
    if n < 2 * K:
        raise InputError(f"need n >= 2K, got n={n}, K={K}")
    perm = np.random.default_rng(rng_seed).permutation(n)
    folds = tuple(np.sort(f) for f in np.array_split(perm, K))
    if grid is None:
        grid = default_grid(n)
    return CvPlan(K, folds, tuple(tuple(map(float, g)) for g in grid), rng_seed)


@dataclass
class CvResult:
    best: tuple[float, float, float]
    scores: np.ndarray  # (grid, fold)
    table: list[dict]


def _fold_score(joint, train, test, kx, ky, eps, delta):
    Xo, Yo = joint.x[train], joint.y[train]
    Xi, Yi = joint.x[test], joint.y[test]
    m = Xo.shape[0]
    G_X = gram_matrix(kx, Xo)
    # Prior is the out-of-fold empirical marginal of X, so m_Pi = G_X 1/m.
    sched = RegularizationSchedule.operator_scale(eps, delta, m)
    mu = m * solve_regularized(G_X, m * eps, G_X.mean(axis=1))
    op = posterior_operator_from_weights(mu, Xo, Yo, ky, sched.delta)
    w = op.apply(gram_matrix(ky, Yo, Yi)).mean(axis=1)
    u = np.full(Xi.shape[0], 1.0 / Xi.shape[0])
    sq = w @ G_X @ w - 2.0 * w @ gram_matrix(kx, Xo, Xi) @ u + u @ gram_matrix(kx, Xi) @ u
    return max(float(sq), 0.0)


def kbr_cross_validate(joint, plan: CvPlan, kx: GaussianRBF, ky: GaussianRBF) -> CvResult:
    """K-fold selection of ``(beta, eps, delta)``.

    For each fold, the posterior is built on the out-of-fold data with the
    out-of-fold marginal of X as prior. The score is the squared RKHS
    distance between the average posterior embedding at the in-fold ``Y_j``
    and the in-fold empirical mean of X, summed over folds. Ties go to the
    larger ``eps``, then to the earlier grid entry. Failed solves score
    ``inf``.
    """
    if not plan.grid:
        raise InputError("empty hyperparameter grid")
    n = joint.n
    if n < 2 * plan.K:
        raise InputError(f"need n >= 2K, got n={n}, K={plan.K}")
    all_idx = np.arange(n)
    scores = np.empty((len(plan.grid), plan.K))
    table = []
    for g, (beta, eps, delta) in enumerate(plan.grid):
        kxb, kyb = kx.scaled(beta), ky.scaled(beta)
        for a, test in enumerate(plan.folds):
            train = np.setdiff1d(all_idx, test)
            try:
                s = _fold_score(joint, train, test, kxb, kyb, eps, delta)
            except NumericError:
                s = float("inf")
            scores[g, a] = s
            table.append({"fold": a, "beta": beta, "eps": eps, "delta": delta, "score": s})
    total = scores.sum(axis=1)
    order = sorted(range(len(plan.grid)), key=lambda g: (total[g], -plan.grid[g][1], g))
    return CvResult(plan.grid[order[0]], scores, table)


def write_score_table(path, table) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["fold", "beta", "eps", "delta", "score"])
        w.writeheader()
        for row in table:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
