"""Regularized solves, pivoted incomplete Cholesky and Woodbury inversion."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as sla

from .errors import InputError, NumericError

__all__ = [
    "JITTER",
    "RegularizationSchedule",
    "LowRankFactor",
    "solve_regularized",
    "incomplete_cholesky",
    "incomplete_cholesky_matrix",
    "solve_woodbury",
]

JITTER = 1e-12


@dataclass(frozen=True)
class RegularizationSchedule:
    """Tikhonov constants ``eps`` (operator inversion) and ``delta`` (squared form).

    Both are used literally: ``eps`` enters as ``G_X + n*eps*I`` and ``delta``
    as ``(Lambda G_Y)^2 + delta*I`` with ``Lambda`` built from prior weights
    on the ``n (G_X + n eps I)^{-1} m`` scale.
    """

    eps: float
    delta: float

    def __post_init__(self):
        for name in ("eps", "delta"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise InputError(f"{name} must be positive and finite, got {v}")

    @classmethod
    def operator_scale(cls, eps: float, delta: float, n: int) -> RegularizationSchedule:
        """Schedule for a ``delta`` quoted on the covariance-operator scale.

        Prior weights ``mu`` computed as ``n (G + n eps I)^{-1} m`` are ``n``
        times the coefficients of the empirical operator, whose entries sum
        to roughly one. Since the posterior matrix is unchanged under
        ``(mu, delta) -> (c mu, c^2 delta)``, a ``delta`` chosen for the
        operator maps to ``n^2 delta`` here.
        """
        return cls(eps, delta * n * n)


@dataclass(frozen=True)
class LowRankFactor:
    """``G ~= gamma @ gamma.T`` from greedy pivoted Cholesky.

    ``pivots`` lists the selected indices in selection order and
    ``residual_bound`` is the trace of the unexplained diagonal.
    """

    gamma: np.ndarray
    pivots: tuple[int, ...]
    residual_bound: float

    @property
    def rank(self) -> int:
        return self.gamma.shape[1]

    @property
    def n(self) -> int:
        return self.gamma.shape[0]

    def dense(self) -> np.ndarray:
        return self.gamma @ self.gamma.T


def _check_finite(name, A):
    if not np.all(np.isfinite(A)):
        raise InputError(f"{name} has non-finite entries")


def solve_regularized(G, c: float, B) -> np.ndarray:
    """Return ``(G + c I)^{-1} B`` for symmetric PSD ``G`` and ``c > 0``.

    Uses a Cholesky factorization. If the factorization breaks down on
    round-off, a jitter of ``1e-12`` times the diagonal scale is added once.
    """
    G = np.asarray(G, dtype=float)
    B = np.asarray(B, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise InputError(f"G must be square, got shape {G.shape}")
    if B.shape[0] != G.shape[0]:
        raise InputError(f"B has {B.shape[0]} rows, G is {G.shape[0]}x{G.shape[0]}")
    if not (math.isfinite(c) and c > 0):
        raise InputError(f"regularization must be positive, got {c}")
    _check_finite("G", G)
    _check_finite("B", B)
    A = G + c * np.eye(G.shape[0])
    try:
        factor = sla.cho_factor(A, lower=True, check_finite=False)
    except sla.LinAlgError:
        scale = max(1.0, float(np.max(np.abs(np.diag(A)))))
        try:
            factor = sla.cho_factor(A + JITTER * scale * np.eye(A.shape[0]), lower=True, check_finite=False)
        except sla.LinAlgError as exc:
            raise NumericError(
                "Cholesky failed on G + cI; G is not PSD", condition=np.linalg.cond(A)
            ) from exc
    return sla.cho_solve(factor, B, check_finite=False)


def incomplete_cholesky(
    G_oracle: Callable[[np.ndarray, np.ndarray], np.ndarray],
    n: int,
    tol: float | None = None,
    max_rank: int | None = None,
) -> LowRankFactor:
    """Greedy pivoted incomplete Cholesky of an implicit PSD matrix.

    Parameters
    ----------
    G_oracle : callable
        ``G_oracle(rows, cols)`` returns the entries ``G[rows[k], cols[k]]``
        for equal-length integer arrays. Only the diagonal and one column
        per pivot are requested.
    n : int
        Matrix size.
    tol : float, optional
        Stop once the residual trace is at most ``tol``. Defaults to
        ``1e-6 * trace(G)``.
    max_rank : int, optional
        Defaults to ``min(n, 100)``.

    Pivots are chosen by largest residual diagonal, lowest index on ties.
    """
    if n < 1:
        raise InputError("n must be positive")
    idx = np.arange(n)
    diag = np.asarray(G_oracle(idx, idx), dtype=float).copy()
    _check_finite("diagonal", diag)
    if np.any(diag < -1e-10):
        raise NumericError("negative diagonal entry; matrix is not PSD")
    if tol is None:
        tol = 1e-6 * float(np.sum(diag))
    if tol < 0:
        raise InputError("tol must be nonnegative")
    if max_rank is None:
        max_rank = min(n, 100)
    max_rank = min(int(max_rank), n)

    gamma = np.zeros((n, max_rank))
    pivots: list[int] = []
    residual = np.maximum(diag, 0.0)
    for k in range(max_rank):
        if residual.sum() <= tol:
            break
        p = int(np.argmax(residual))
        pivot = residual[p]
        if pivot <= 0.0:
            break
        col = np.asarray(G_oracle(np.full(n, p), idx), dtype=float)
        col = col - gamma[:, :k] @ gamma[p, :k]
        gamma[:, k] = col / math.sqrt(pivot)
        gamma[pivots, k] = 0.0
        gamma[p, k] = math.sqrt(pivot)
        pivots.append(p)
        residual = diag - np.sum(gamma[:, : k + 1] ** 2, axis=1)
        if np.any(residual < -1e-10 * max(1.0, float(diag.max()))):
            raise NumericError("negative residual diagonal; matrix is not PSD")
        residual[pivots] = 0.0
        residual = np.maximum(residual, 0.0)
    r = len(pivots)
    return LowRankFactor(gamma[:, :r].copy(), tuple(pivots), float(residual.sum()))


def incomplete_cholesky_matrix(G, tol=None, max_rank=None) -> LowRankFactor:
    """:func:`incomplete_cholesky` on an explicit symmetric matrix."""
    G = np.asarray(G, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise InputError(f"G must be square, got shape {G.shape}")
    return incomplete_cholesky(lambda i, j: G[i, j], G.shape[0], tol, max_rank)


def solve_woodbury(D_scale: float, U, V, B, C=None) -> np.ndarray:
    """Return ``(D_scale I + U C V)^{-1} B`` through an ``r x r`` system.

    ``C`` (``r x r``, default identity) is folded into ``U`` so it is never
    inverted; the inner system is ``D_scale I_r + V U C``, which may be
    nonsymmetric and is LU-factorized.
    """
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    B = np.asarray(B, dtype=float)
    if not (math.isfinite(D_scale) and D_scale > 0):
        raise InputError(f"D_scale must be positive, got {D_scale}")
    if C is not None:
        U = U @ np.asarray(C, dtype=float)
    n, r = U.shape
    if V.shape != (r, n):
        raise InputError(f"V must be {r}x{n}, got {V.shape}")
    if B.shape[0] != n:
        raise InputError(f"B must have {n} rows, got {B.shape[0]}")
    for name, A in (("U", U), ("V", V), ("B", B)):
        _check_finite(name, A)
    if r == 0:
        return B / D_scale
    inner = D_scale * np.eye(r) + V @ U
    with warnings.catch_warnings():
        warnings.simplefilter("error", sla.LinAlgWarning)
        try:
            lu = sla.lu_factor(inner, check_finite=False)
            correction = sla.lu_solve(lu, V @ B, check_finite=False)
        except (sla.LinAlgError, sla.LinAlgWarning, ValueError) as exc:
            raise NumericError(
                "singular inner Woodbury system", condition=float(np.linalg.cond(inner))
            ) from exc
    out = (B - U @ correction) / D_scale
    if not np.all(np.isfinite(out)):
        raise NumericError("non-finite Woodbury solution", condition=float(np.linalg.cond(inner)))
    return out
