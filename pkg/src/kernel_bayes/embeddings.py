"""Empirical kernel mean embeddings as weighted samples.

A distribution is represented by points and real weights, standing for the
RKHS element ``sum_i w_i k(., x_i)``. Weights are not constrained to be
nonnegative or to sum to one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .kernels import Kernel, as_points, gram_matrix, kernel_vector
from .linalg import LowRankFactor, solve_regularized, solve_woodbury

__all__ = [
    "WeightedSample",
    "JointSample",
    "empirical_mean_embedding",
    "kbr_prior_weights",
    "conditional_mean_weights",
    "rkhs_sq_distance",
    "DENSE_MAX_N",
]

# Above this size the low-rank path is preferred when a factor is available.
DENSE_MAX_N = 500


@dataclass(frozen=True)
class WeightedSample:
    points: np.ndarray
    weights: np.ndarray
    space: str = "X"

    def __post_init__(self):
        P = as_points(self.points)
        w = np.asarray(self.weights, dtype=float).ravel()
        if w.shape[0] != P.shape[0]:
            raise InputError(f"{P.shape[0]} points but {w.shape[0]} weights")
        if not np.all(np.isfinite(w)):
            raise InputError("weights must be finite")
        object.__setattr__(self, "points", P)
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return self.weights.shape[0]

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    def mean(self, normalize: bool = False) -> np.ndarray:
        """``sum_i w_i x_i``, optionally divided by ``sum_i w_i``."""
        m = self.weights @ self.points
        if normalize:
            m = m / self.mass
        return m


@dataclass(frozen=True)
class JointSample:
    """Paired sample ``(X_i, Y_i)``, ``i = 1..n``."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X, Y = as_points(self.x), as_points(self.y)
        if X.shape[0] != Y.shape[0]:
            raise InputError(f"|X| = {X.shape[0]} but |Y| = {Y.shape[0]}")
        object.__setattr__(self, "x", X)
        object.__setattr__(self, "y", Y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    def subset(self, idx) -> JointSample:
        return JointSample(self.x[idx], self.y[idx])


def empirical_mean_embedding(points, space: str = "X") -> WeightedSample:
    P = as_points(points)
    n = P.shape[0]
    return WeightedSample(P, np.full(n, 1.0 / n), space)


def _check_eps(eps):
    if not (math.isfinite(eps) and eps > 0):
        raise InputError(f"eps must be positive, got {eps}")


def _regularized_solve(G, factor, c, B):
    if factor is None:
        return solve_regularized(G, c, B)
    return solve_woodbury(c, factor.gamma, factor.gamma.T, B)


def kbr_prior_weights(
    joint: JointSample,
    prior: WeightedSample,
    kx: Kernel,
    eps: float,
    *,
    G_X=None,
    lowrank: LowRankFactor | None = None,
) -> np.ndarray:
    """Weights ``mu = n (G_X + n eps I)^{-1} m`` of the kernel sum rule.

    ``m_i = sum_j gamma_j k_X(X_i, U_j)`` is the prior embedding evaluated at
    the sample. ``({(X_i, Y_i)}, mu)`` then represents the joint under the
    prior and ``({Y_i}, mu)`` the predicted marginal of ``Y``.

    ``G_X`` may be passed to avoid recomputation; with ``lowrank`` the solve
    goes through the Woodbury identity instead.
    """
    _check_eps(eps)
    if prior.space != "X":
        raise InputError(f"prior must live in X, got space {prior.space!r}")
    n = joint.n
    m = gram_matrix(kx, joint.x, prior.points) @ prior.weights
    if lowrank is None and G_X is None:
        G_X = gram_matrix(kx, joint.x)
    return n * _regularized_solve(G_X, lowrank, n * eps, m)


def conditional_mean_weights(
    joint: JointSample,
    ky: Kernel,
    eps: float,
    y,
    *,
    scale: float = 1.0,
    G_Y=None,
    lowrank: LowRankFactor | None = None,
) -> WeightedSample:
    """Conditional embedding of ``X`` given ``Y = y``.

    ``nu = scale * (G_Y + n eps I)^{-1} k_Y(y)`` attached to the X points.
    ``scale=n`` gives the filter-initialization convention.
    """
    _check_eps(eps)
    n = joint.n
    if lowrank is None and G_Y is None:
        G_Y = gram_matrix(ky, joint.y)
    nu = scale * _regularized_solve(G_Y, lowrank, n * eps, kernel_vector(ky, joint.y, y))
    return WeightedSample(joint.x, nu, "X")


def rkhs_sq_distance(a: WeightedSample, b: WeightedSample, k: Kernel) -> float:
    """``||sum a_i k(., p_i) - sum b_j k(., q_j)||^2`` by Gram expansion.

    Clipped at zero; the expansion can go slightly negative on round-off.
    """
    aa = a.weights @ gram_matrix(k, a.points) @ a.weights
    bb = b.weights @ gram_matrix(k, b.points) @ b.weights
    ab = a.weights @ gram_matrix(k, a.points, b.points) @ b.weights
    return max(float(aa + bb - 2.0 * ab), 0.0)
