"""Kernel Bayes' rule: posterior weights from a prior embedding and a joint sample.

Given a joint sample ``(X_i, Y_i)`` and prior weights ``mu`` (from
:func:`~kernel_bayes.embeddings.kbr_prior_weights`), the posterior given
``Y = y`` is the weighted sample ``(X_i, rho_i)`` with

    rho = Lambda G_Y ((Lambda G_Y)^2 + delta I)^{-1} Lambda k_Y(y),
    Lambda = diag(mu).

The matrix in front of ``k_Y(y)`` does not depend on ``y``, so it is built
once and reused for every conditioning value.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .embeddings import DENSE_MAX_N, JointSample, WeightedSample, kbr_prior_weights
from .errors import DegenerateWeightsError, InputError, NumericError
from .kernels import GaussianRBF, Kernel, as_points, gram_matrix, kernel_vector
from .linalg import LowRankFactor, RegularizationSchedule, solve_woodbury

__all__ = [
    "PosteriorOperator",
    "PreimageResult",
    "build_posterior_operator",
    "posterior_operator_from_weights",
    "posterior_weights",
    "posterior_weight_matrix",
    "posterior_expectation",
    "preimage",
]


@dataclass(frozen=True)
class PosteriorOperator:
    """Posterior map ``y -> R k_Y(y)``.

    ``R`` is the dense ``n x n`` matrix when materialized; otherwise only the
    action through the low-rank factor of ``G_Y`` is available.
    """

    x_points: np.ndarray
    y_points: np.ndarray
    ky: Kernel
    delta: float
    mu: np.ndarray
    R: np.ndarray | None = None
    gy_factor: LowRankFactor | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.x_points.shape[0]

    def apply(self, kvec: np.ndarray) -> np.ndarray:
        """Posterior weights for a kernel vector (or ``n x m`` block of them)."""
        kvec = np.asarray(kvec, dtype=float)
        if kvec.shape[0] != self.n:
            raise InputError(f"kernel vector has length {kvec.shape[0]}, expected {self.n}")
        if self.R is not None:
            return self.R @ kvec
        return _lowrank_action(self.mu, self.gy_factor.gamma, self.delta, kvec)


def _lowrank_action(mu, gamma, delta, B):
    # (Lambda G)^2 = (Lambda Gam)(Gam^T Lambda Gam) Gam^T, so the middle factor
    # is folded into U and never inverted.
    lam_gam = mu[:, None] * gamma
    U = lam_gam @ (gamma.T @ lam_gam)
    lam_B = mu[:, None] * B if B.ndim == 2 else mu * B
    W = solve_woodbury(delta, U, gamma.T, lam_B)
    return lam_gam @ (gamma.T @ W)


def _dense_solve(mu, G_Y, delta, rhs):
    """``Lambda G ((Lambda G)^2 + delta I)^{-1} rhs``."""
    n = mu.shape[0]
    LG = mu[:, None] * G_Y
    # overflow shows up as non-finite output and is reported below
    with warnings.catch_warnings(), np.errstate(over="ignore", invalid="ignore"):
        M = LG @ LG + delta * np.eye(n)
        warnings.simplefilter("error", sla.LinAlgWarning)
        try:
            lu = sla.lu_factor(M, check_finite=False)
            Z = sla.lu_solve(lu, rhs, check_finite=False)
        except (sla.LinAlgError, sla.LinAlgWarning) as exc:
            raise NumericError(
                f"singular system (Lambda G_Y)^2 + delta I with delta={delta:g}",
                condition=float(np.linalg.cond(M)),
                delta=delta,
            ) from exc
        out = LG @ Z
    if not np.all(np.isfinite(out)):
        raise NumericError("non-finite posterior weights", delta=delta)
    return out


def _dense_R(mu, G_Y, delta):
    return _dense_solve(mu, G_Y, delta, np.diag(mu))


def _dense_action(mu, G_Y, delta, B):
    return _dense_solve(mu, G_Y, delta, mu[:, None] * B if B.ndim == 2 else mu * B)


def posterior_operator_from_weights(
    mu,
    x_points,
    y_points,
    ky: Kernel,
    delta: float,
    *,
    G_Y=None,
    gy_factor: LowRankFactor | None = None,
    materialize: bool | None = None,
) -> PosteriorOperator:
    """Posterior operator for explicit prior weights ``mu`` on the sample.

    With ``gy_factor`` the computation uses ``G_Y ~= Gamma Gamma^T`` and the
    Woodbury identity. ``materialize`` defaults to ``n <= 500``; it only
    matters on the low-rank path, since the dense path always forms ``R``.
    """
    X = as_points(x_points)
    Y = as_points(y_points)
    mu = np.asarray(mu, dtype=float).ravel()
    n = X.shape[0]
    if Y.shape[0] != n or mu.shape[0] != n:
        raise InputError("x_points, y_points and mu must have the same length")
    if not np.all(np.isfinite(mu)):
        raise NumericError("prior weights are not finite")
    if not (math.isfinite(delta) and delta > 0):
        raise InputError(f"delta must be positive, got {delta}")
    if materialize is None:
        materialize = n <= DENSE_MAX_N
    if gy_factor is None:
        if G_Y is None:
            G_Y = gram_matrix(ky, Y)
        R = _dense_R(mu, G_Y, delta)
        return PosteriorOperator(X, Y, ky, delta, mu, R, None)
    if gy_factor.n != n:
        raise InputError("low-rank factor size does not match the sample")
    R = _lowrank_action(mu, gy_factor.gamma, delta, np.eye(n)) if materialize else None
    return PosteriorOperator(X, Y, ky, delta, mu, R, gy_factor)


def build_posterior_operator(
    joint: JointSample,
    prior: WeightedSample,
    kx: Kernel,
    ky: Kernel,
    schedule: RegularizationSchedule,
    lowrank: tuple[LowRankFactor, LowRankFactor] | None = None,
) -> PosteriorOperator:
    """Run the kernel Bayes' rule on ``joint`` with prior embedding ``prior``.

    ``lowrank`` is an optional pair of factors ``(for G_X, for G_Y)``.
    """
    fx, fy = lowrank if lowrank is not None else (None, None)
    mu = kbr_prior_weights(joint, prior, kx, schedule.eps, lowrank=fx)
    return posterior_operator_from_weights(mu, joint.x, joint.y, ky, schedule.delta, gy_factor=fy)


def posterior_weights(op: PosteriorOperator, y, normalize: bool = False) -> WeightedSample:
    """Posterior weighted sample ``(X_i, rho_i)``; ``rho`` is not normalized unless asked."""
    rho = op.apply(kernel_vector(op.ky, op.y_points, y))
    if normalize:
        rho = rho / rho.sum()
    return WeightedSample(op.x_points, rho, "X")


def posterior_weight_matrix(op: PosteriorOperator, Ys) -> np.ndarray:
    """Rows are the posterior weights for each conditioning point in ``Ys``."""
    K = gram_matrix(op.ky, op.y_points, as_points(Ys, op.y_points.shape[1]))
    return op.apply(K).T


def posterior_expectation(op: PosteriorOperator, f_values, y) -> float:
    """Estimate of ``E[f(X) | Y = y]`` as ``f_X^T R k_Y(y)``."""
    f = np.asarray(f_values, dtype=float).ravel()
    if f.shape[0] != op.n:
        raise InputError(f"f_values has length {f.shape[0]}, expected {op.n}")
    kvec = kernel_vector(op.ky, op.y_points, y)
    if op.R is not None:
        return float((f @ op.R) @ kvec)
    return float(f @ op.apply(kvec))


@dataclass(frozen=True)
class PreimageResult:
    point: np.ndarray
    converged: bool
    iterations: int


def preimage(
    ws: WeightedSample,
    kx: GaussianRBF,
    x0=None,
    tol: float | None = None,
    max_iter: int = 200,
) -> PreimageResult:
    """Fixed-point search for the point whose feature best matches ``ws``.

    Iterates the kernel-weighted mean ``x <- sum_i rho_i k(X_i, x) X_i /
    sum_i rho_i k(X_i, x)``. Starts from the point with the largest weight
    (lowest index on ties) and stops when a step is shorter than ``tol``
    (default ``1e-8`` bandwidths).

    Raises
    ------
    DegenerateWeightsError
        If ``|sum_i rho_i k(X_i, x)| < 1e-12`` at some iterate.
    """
    if not isinstance(kx, GaussianRBF):
        raise InputError("preimage iteration requires a Gaussian RBF kernel")
    X, rho = ws.points, ws.weights
    if x0 is None:
        x = X[int(np.argmax(rho))].copy()
    else:
        x = np.asarray(x0, dtype=float).ravel().copy()
        if x.shape[0] != X.shape[1] or not np.all(np.isfinite(x)):
            raise InputError("x0 must be a finite point of the sample's dimension")
    if tol is None:
        tol = 1e-8 * kx.bandwidth
    two_s2 = 2.0 * kx.bandwidth**2
    for it in range(1, max_iter + 1):
        c = rho * np.exp(-np.sum((X - x) ** 2, axis=1) / two_s2)
        denom = c.sum()
        if abs(denom) < 1e-12:
            raise DegenerateWeightsError(
                f"posterior mass near the iterate is numerically zero ({denom:.3g})"
            )
        x_new = (c @ X) / denom
        step = float(np.linalg.norm(x_new - x))
        x = x_new
        if step <= tol:
            return PreimageResult(x, True, it)
    return PreimageResult(x, False, max_iter)
