"""Filtering in nonparametric state-space models, plus an EKF baseline.

The KBR filter learns observation and transition structure from a training
trajectory ``(X_1, Y_1), ..., (X_{T+1}, Y_{T+1})`` with observed hidden
states. At test time only observations are seen; the filtered state is the
weighted sample ``(X_i, alpha_i)``, ``i = 1..T``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla

from .embeddings import WeightedSample
from .errors import DegenerateWeightsError, InputError, NumericError
from .kbr import _dense_action, _lowrank_action, preimage
from .kernels import GaussianRBF, Kernel, as_points, gram_matrix, kernel_vector
from .linalg import LowRankFactor, RegularizationSchedule, incomplete_cholesky_matrix, solve_regularized
from .modelsel import median_bandwidth

__all__ = [
    "FilterModel",
    "FilterState",
    "FilterRun",
    "FilterSelection",
    "filter_train",
    "filter_init",
    "filter_predict",
    "filter_update",
    "filter_step",
    "filter_point_estimate",
    "run_kbr_filter",
    "select_filter_params",
    "DifferentiableModel",
    "ekf_predict",
    "ekf_update",
    "ekf_step",
    "ekf_filter",
]


@dataclass(frozen=True)
class FilterModel:
    """Trained KBR filter.

    ``G_X`` and ``G_Y`` are Gram matrices of the first ``T`` states and
    observations; ``G_XXp[i, j] = k_X(X_i, X_{j+1})`` is the transfer matrix.
    """

    x_train: np.ndarray
    y_train: np.ndarray
    G_X: np.ndarray
    G_Y: np.ndarray
    G_XXp: np.ndarray
    kx: Kernel
    ky: Kernel
    schedule: RegularizationSchedule
    init_scale: str = "T"
    gy_factor: LowRankFactor | None = field(default=None, repr=False)

    @property
    def T(self) -> int:
        return self.G_X.shape[0]

    @property
    def states(self) -> np.ndarray:
        """The states ``X_1..X_T`` that carry the filter weights."""
        return self.x_train[: self.T]


@dataclass(frozen=True)
class FilterState:
    alpha: np.ndarray
    t: int
    last_mu: np.ndarray | None = None


def filter_train(
    x_traj,
    y_traj,
    kx: Kernel,
    ky: Kernel,
    schedule: RegularizationSchedule,
    *,
    rank: int | None = None,
    init_scale: str = "T",
) -> FilterModel:
    """Build the Gram and transfer matrices from a training trajectory.

    ``x_traj`` holds ``T + 1`` states; ``y_traj`` holds ``T`` or ``T + 1``
    observations (only the first ``T`` are used). With ``rank`` the update
    step works with a rank-``rank`` incomplete Cholesky factor of ``G_Y``.
    ``init_scale`` is ``"T"`` or ``"1"``, the factor in front of the
    initial conditional-mean weights.
    """
    X = as_points(x_traj)
    Y = as_points(y_traj)
    T = X.shape[0] - 1
    if T < 2:
        raise InputError(f"need at least 3 states (T >= 2), got {X.shape[0]}")
    if Y.shape[0] not in (T, T + 1):
        raise InputError(f"expected {T} or {T + 1} observations, got {Y.shape[0]}")
    if init_scale not in ("T", "1"):
        raise InputError(f"init_scale must be 'T' or '1', got {init_scale!r}")
    Y = Y[:T]
    G_X = gram_matrix(kx, X[:T])
    G_Y = gram_matrix(ky, Y)
    G_XXp = gram_matrix(kx, X[:T], X[1:])
    factor = None
    if rank is not None:
        factor = incomplete_cholesky_matrix(G_Y, tol=0.0, max_rank=rank)
    return FilterModel(X, Y, G_X, G_Y, G_XXp, kx, ky, schedule, init_scale, factor)


def filter_init(model: FilterModel, y1) -> FilterState:
    """``alpha = s (G_Y + T eps I)^{-1} k_Y(y1)`` with ``s`` = T or 1."""
    T = model.T
    kvec = kernel_vector(model.ky, model.y_train, y1)
    alpha = solve_regularized(model.G_Y, T * model.schedule.eps, kvec)
    if model.init_scale == "T":
        alpha = T * alpha
    return FilterState(alpha, 1, None)


def filter_predict(model: FilterModel, state: FilterState) -> np.ndarray:
    """Prior weights for the next step:
    ``(G_X + T eps I)^{-1} G_XXp (G_X + T eps I)^{-1} G_X alpha``."""
    c = model.T * model.schedule.eps
    inner = solve_regularized(model.G_X, c, model.G_X @ state.alpha)
    return solve_regularized(model.G_X, c, model.G_XXp @ inner)


def filter_update(model: FilterModel, mu, y_new, t: int = 0) -> FilterState:
    """Condition the predicted weights ``mu`` on the new observation."""
    mu = np.asarray(mu, dtype=float).ravel()
    if mu.shape[0] != model.T:
        raise InputError(f"mu has length {mu.shape[0]}, expected {model.T}")
    kvec = kernel_vector(model.ky, model.y_train, y_new)
    delta = model.schedule.delta
    if model.gy_factor is None:
        alpha = _dense_action(mu, model.G_Y, delta, kvec)
    else:
        alpha = _lowrank_action(mu, model.gy_factor.gamma, delta, kvec)
    if not np.all(np.isfinite(alpha)):
        raise NumericError("filter weights became non-finite", delta=delta)
    return FilterState(alpha, t + 1, mu)


def filter_step(model: FilterModel, state: FilterState, y_new) -> FilterState:
    return filter_update(model, filter_predict(model, state), y_new, state.t)


def filter_point_estimate(model: FilterModel, state: FilterState, method: str = "preimage") -> np.ndarray:
    """Point estimate of the current state.

    ``"preimage"`` runs the Gaussian fixed-point search; ``"mean"`` returns
    ``sum_i alpha_i X_i / sum_i alpha_i``.
    """
    ws = WeightedSample(model.states, state.alpha)
    if method == "mean":
        mass = ws.mass
        if abs(mass) < 1e-12:
            raise DegenerateWeightsError("filter weights sum to zero")
        return ws.mean(normalize=True)
    if method == "preimage":
        return preimage(ws, model.kx).point
    raise InputError(f"unknown point-estimate method {method!r}")


class _Transition:
    """Cached factorization for repeated prediction steps."""

    def __init__(self, model: FilterModel):
        c = model.T * model.schedule.eps
        A = model.G_X + c * np.eye(model.T)
        factor = sla.cho_factor(A, lower=True)
        inner = sla.cho_solve(factor, model.G_X)
        self.matrix = sla.cho_solve(factor, model.G_XXp @ inner)

    def __call__(self, alpha):
        return self.matrix @ alpha


@dataclass
class FilterRun:
    estimates: np.ndarray
    alphas: np.ndarray | None
    fallbacks: int = 0


def run_kbr_filter(
    model: FilterModel,
    observations,
    *,
    point: str = "preimage",
    keep_weights: bool = False,
) -> FilterRun:
    """Filter a whole observation sequence and return point estimates.

    Prediction reuses one precomputed ``T x T`` transition matrix. If a
    point estimate hits degenerate weights, the largest-weight training
    state is used and counted in ``fallbacks``.
    """
    Ys = as_points(observations, model.y_train.shape[1])
    transition = _Transition(model)
    state = filter_init(model, Ys[0])
    estimates = np.empty((Ys.shape[0], model.x_train.shape[1]))
    alphas = np.empty((Ys.shape[0], model.T)) if keep_weights else None
    fallbacks = 0
    for t in range(Ys.shape[0]):
        if t > 0:
            state = filter_update(model, transition(state.alpha), Ys[t], state.t)
        try:
            estimates[t] = filter_point_estimate(model, state, point)
        except DegenerateWeightsError:
            estimates[t] = model.states[int(np.argmax(state.alpha))]
            fallbacks += 1
        if keep_weights:
            alphas[t] = state.alpha
    return FilterRun(estimates, alphas, fallbacks)


@dataclass(frozen=True)
class FilterSelection:
    beta: float
    eps: float
    delta: float
    scores: list = field(default_factory=list)


def select_filter_params(
    x_traj,
    y_traj,
    *,
    betas=(0.25, 0.5, 1.0, 2.0, 4.0),
    epsilons=(1e-4, 1e-3, 1e-2, 1e-1),
    delta_factor: float = 2.0,
    point: str = "preimage",
    rank: int | None = None,
) -> FilterSelection:
    """Choose bandwidth multiplier and ``eps`` by split-half validation.

    The first half of the trajectory trains the filter with Gaussian
    kernels of bandwidth ``beta`` times the median pairwise distance; the
    second half is filtered from its observations and scored by the mean
    squared state error. ``delta = delta_factor * eps``. Failed candidates
    score ``inf``; the first best candidate in grid order wins.
    """
    X = as_points(x_traj)
    Y = as_points(y_traj)
    h = (X.shape[0] - 1) // 2
    if h < 2:
        raise InputError("trajectory too short for split-half validation")
    Xa, Ya = X[: h + 1], Y[: h + 1]
    Xb, Yb = X[h:], Y[h : X.shape[0]]
    sx, sy = median_bandwidth(Xa[:h]), median_bandwidth(Ya[:h])
    scores = []
    best = None
    for beta, eps in itertools.product(betas, epsilons):
        sched = RegularizationSchedule(eps, delta_factor * eps)
        try:
            model = filter_train(
                Xa, Ya, GaussianRBF(beta * sx), GaussianRBF(beta * sy), sched, rank=rank
            )
            est = run_kbr_filter(model, Yb, point=point).estimates
            score = float(np.mean(np.sum((est - Xb) ** 2, axis=1)))
        except (NumericError, sla.LinAlgError):
            score = float("inf")
        if not np.isfinite(score):
            score = float("inf")
        scores.append((beta, eps, delta_factor * eps, score))
        if best is None or score < best[3]:
            best = scores[-1]
    return FilterSelection(best[0], best[1], best[2], scores)


# ---------------------------------------------------------------------------
# Extended Kalman filter
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DifferentiableModel:
    """``x' = f(x) + w``, ``y = h(x) + v`` with Jacobians ``F``, ``H``."""

    f: Callable[[np.ndarray], np.ndarray]
    F: Callable[[np.ndarray], np.ndarray]
    h: Callable[[np.ndarray], np.ndarray]
    H: Callable[[np.ndarray], np.ndarray]
    Q: np.ndarray
    R: np.ndarray


def _clean_cov(P):
    P = 0.5 * (P + P.T)
    w, V = np.linalg.eigh(P)
    floor = -1e-9 * max(1.0, float(np.abs(w).max()))
    if w.min() < floor:
        raise NumericError(f"covariance is indefinite (min eigenvalue {w.min():.3g})")
    if w.min() < 0:
        P = (V * np.maximum(w, 0.0)) @ V.T
        P = 0.5 * (P + P.T)
    return P


def ekf_predict(dyn: DifferentiableModel, mean, cov):
    F = dyn.F(mean)
    return dyn.f(mean), F @ cov @ F.T + dyn.Q


def ekf_update(dyn: DifferentiableModel, mean, cov, y):
    H = dyn.H(mean)
    S = H @ cov @ H.T + dyn.R
    K = np.linalg.solve(S, H @ cov).T
    mean = mean + K @ (np.asarray(y, dtype=float) - dyn.h(mean))
    IKH = np.eye(cov.shape[0]) - K @ H
    cov = IKH @ cov @ IKH.T + K @ dyn.R @ K.T
    return mean, _clean_cov(cov)


def ekf_step(dyn: DifferentiableModel, state_mean, state_cov, y):
    """One predict-then-update recursion; returns ``(mean, cov)``."""
    m, P = ekf_predict(dyn, np.asarray(state_mean, dtype=float), np.asarray(state_cov, dtype=float))
    return ekf_update(dyn, m, P, y)


def ekf_filter(dyn: DifferentiableModel, observations, mean0, cov0):
    """Filter a sequence; ``(mean0, cov0)`` is the prior on the first state."""
    Ys = as_points(observations)
    m, P = ekf_update(dyn, np.asarray(mean0, dtype=float), np.asarray(cov0, dtype=float), Ys[0])
    means = [m]
    covs = [P]
    for y in Ys[1:]:
        m, P = ekf_step(dyn, m, P, y)
        means.append(m)
        covs.append(P)
    return np.array(means), np.array(covs)
