"""Closed-form references and data generators for experiments and tests.

Randomness comes from numpy's PCG64 generator (``numpy.random.default_rng``).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import InputError, NumericError
from .statespace import DifferentiableModel

__all__ = [
    "RNG_NAME",
    "GaussianJointConfig",
    "gaussian_conjugate_posterior_mean",
    "RotationDynamicsConfig",
    "RotationTrajectory",
    "simulate_rotation",
    "rotation_ekf_model",
    "kalman_filter_oracle",
    "simulate_linear_gaussian",
    "write_trajectory_csv",
    "write_samples_csv",
]

RNG_NAME = "numpy.PCG64"


@dataclass(frozen=True)
class GaussianJointConfig:
    """Joint Gaussian ``(X, Y) ~ N((0, 1_d), V)`` with prior ``N(0, V_XX / 2)``.

    ``V`` is ``2d x 2d``. :meth:`draw` builds ``V = A^T A + 2 I`` with a
    standard normal ``2d x 2d`` matrix ``A``.
    """

    d: int
    V: np.ndarray
    rng_seed: int | None = None

    def __post_init__(self):
        V = np.asarray(self.V, dtype=float)
        if V.shape != (2 * self.d, 2 * self.d):
            raise InputError(f"V must be {2 * self.d}x{2 * self.d}, got {V.shape}")
        if not np.allclose(V, V.T, rtol=0, atol=1e-12 * max(1.0, np.abs(V).max())):
            raise InputError("V must be symmetric")
        object.__setattr__(self, "V", V)

    @classmethod
    def draw(cls, d: int, rng_seed=None) -> GaussianJointConfig:
        rng = np.random.default_rng(rng_seed)
        A = rng.standard_normal((2 * d, 2 * d))
        return cls(d, A.T @ A + 2.0 * np.eye(2 * d), rng_seed)

    @property
    def mean(self) -> np.ndarray:
        return np.concatenate([np.zeros(self.d), np.ones(self.d)])

    @property
    def V_XX(self):
        return self.V[: self.d, : self.d]

    @property
    def V_XY(self):
        return self.V[: self.d, self.d :]

    @property
    def V_YY(self):
        return self.V[self.d :, self.d :]

    @property
    def prior_cov(self) -> np.ndarray:
        return self.V_XX / 2.0

    def likelihood(self):
        """``(offset, gain, cov)`` with ``Y | X=x ~ N(offset + gain x, cov)``."""
        gain = np.linalg.solve(self.V_XX, self.V_XY).T
        cov = self.V_YY - gain @ self.V_XY
        return np.ones(self.d), gain, 0.5 * (cov + cov.T)

    def sample_joint(self, n, rng):
        Z = rng.multivariate_normal(self.mean, self.V, size=n)
        return Z[:, : self.d], Z[:, self.d :]

    def sample_prior(self, n, rng):
        return rng.multivariate_normal(np.zeros(self.d), self.prior_cov, size=n)

    def sample_likelihood(self, xs, rng):
        offset, gain, cov = self.likelihood()
        xs = np.asarray(xs, dtype=float).reshape(-1, self.d)
        noise = rng.multivariate_normal(np.zeros(self.d), cov, size=xs.shape[0])
        return offset + xs @ gain.T + noise

    def sample_test_points(self, m, rng):
        return rng.multivariate_normal(np.zeros(self.d), self.V_YY, size=m)


def gaussian_conjugate_posterior_mean(cfg: GaussianJointConfig, y) -> np.ndarray:
    """Exact ``E[X | Y=y]`` under the prior ``N(0, V_XX/2)`` and the joint's ``Y | X``.

    ``y`` may be one point or an ``(m, d)`` batch.
    """
    offset, gain, cov = cfg.likelihood()
    P0 = cfg.prior_cov
    S = gain @ P0 @ gain.T + cov
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    Yb = y.reshape(-1, cfg.d)
    try:
        sol = np.linalg.solve(S, (Yb - offset).T)
    except np.linalg.LinAlgError as exc:
        raise NumericError("singular predictive covariance", condition=float(np.linalg.cond(S))) from exc
    out = (P0 @ gain.T @ sol).T
    return out[0] if single else out


# ---------------------------------------------------------------------------
# Rotation dynamics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RotationDynamicsConfig:
    """Noisy rotation on a modulated circle.

    ``theta' = theta + eta (mod 2 pi)``,
    ``X = (1 + b sin(M theta')) (cos theta', sin theta') + N(0, sigma_h^2 I)``,
    ``Y = X + N(0, sigma_o^2 I)``.
    """

    eta: float
    b: float
    M: int
    sigma_h: float
    sigma_o: float

    @classmethod
    def preset(cls, name: str) -> RotationDynamicsConfig:
        if name == "a":
            return cls(eta=0.3, b=0.0, M=1, sigma_h=0.2, sigma_o=0.2)
        if name == "b":
            return cls(eta=0.4, b=0.4, M=8, sigma_h=0.2, sigma_o=0.2)
        raise InputError(f"unknown rotation preset {name!r}")

    def radius(self, theta):
        return 1.0 + self.b * np.sin(self.M * theta)


@dataclass(frozen=True)
class RotationTrajectory:
    theta: np.ndarray
    x: np.ndarray
    y: np.ndarray


def simulate_rotation(cfg: RotationDynamicsConfig, T: int, seed) -> RotationTrajectory:
    """Simulate ``T`` steps; the initial angle is uniform on ``[0, 2 pi)``."""
    if T < 2:
        raise InputError("T must be at least 2")
    rng = np.random.default_rng(seed)
    theta0 = rng.uniform(0.0, 2.0 * np.pi)
    zeta = cfg.sigma_h * rng.standard_normal((T, 2))
    xi = cfg.sigma_o * rng.standard_normal((T, 2))
    theta = np.empty(T)
    th = theta0
    for t in range(T):
        th = (th + cfg.eta) % (2.0 * np.pi)
        theta[t] = th
    r = cfg.radius(theta)
    x = r[:, None] * np.column_stack([np.cos(theta), np.sin(theta)]) + zeta
    return RotationTrajectory(theta, x, x + xi)


def rotation_ekf_model(cfg: RotationDynamicsConfig) -> DifferentiableModel:
    """The rotation dynamics as a function of the state ``(u, v)``.

    The angle is read off the state with ``atan2``; observations are the
    state itself.
    """

    def f(x):
        phi = np.arctan2(x[1], x[0]) + cfg.eta
        return cfg.radius(phi) * np.array([np.cos(phi), np.sin(phi)])

    def F(x):
        u, v = x
        q = max(u * u + v * v, 1e-12)
        phi = np.arctan2(v, u) + cfg.eta
        r = cfg.radius(phi)
        dr = cfg.b * cfg.M * np.cos(cfg.M * phi)
        dphi = np.array([dr * np.cos(phi) - r * np.sin(phi), dr * np.sin(phi) + r * np.cos(phi)])
        return np.outer(dphi, [-v / q, u / q])

    eye = np.eye(2)
    return DifferentiableModel(
        f=f,
        F=F,
        h=lambda x: np.asarray(x, dtype=float),
        H=lambda x: eye,
        Q=cfg.sigma_h**2 * eye,
        R=cfg.sigma_o**2 * eye,
    )


# ---------------------------------------------------------------------------
# Linear-Gaussian reference
# ---------------------------------------------------------------------------


def kalman_filter_oracle(A, C, Q, R, m0, P0, observations):
    """Textbook Kalman filter for ``x' = A x + w``, ``y = C x + v``.

    ``(m0, P0)`` is the prior on the first state, which is updated with the
    first observation before any prediction. Returns per-step filtered means,
    covariances and gains.
    """
    A, C, Q, R = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (A, C, Q, R))
    m = np.atleast_1d(np.asarray(m0, dtype=float))
    P = np.atleast_2d(np.asarray(P0, dtype=float))
    ys = np.asarray(observations, dtype=float).reshape(len(observations), -1)
    means, covs, gains = [], [], []
    for t, y in enumerate(ys):
        if t > 0:
            m = A @ m
            P = A @ P @ A.T + Q
        K = P @ C.T @ np.linalg.inv(C @ P @ C.T + R)
        m = m + K @ (y - C @ m)
        P = (np.eye(P.shape[0]) - K @ C) @ P
        P = 0.5 * (P + P.T)
        if np.linalg.eigvalsh(P).min() < -1e-9 * max(1.0, np.abs(P).max()):
            raise NumericError("Kalman covariance lost positive semidefiniteness")
        means.append(m)
        covs.append(P)
        gains.append(K)
    return np.array(means), np.array(covs), np.array(gains)


def simulate_linear_gaussian(A, C, Q, R, x0, T, rng):
    """Sample ``T`` states and observations of a linear-Gaussian system."""
    A, C, Q, R = (np.atleast_2d(np.asarray(M, dtype=float)) for M in (A, C, Q, R))
    x = np.atleast_1d(np.asarray(x0, dtype=float))
    xs, ys = [], []
    for t in range(T):
        if t > 0:
            x = A @ x + rng.multivariate_normal(np.zeros(x.size), Q)
        xs.append(x)
        ys.append(C @ x + rng.multivariate_normal(np.zeros(C.shape[0]), R))
    return np.array(xs), np.array(ys)


def _columns(prefix, A):
    A = np.asarray(A, dtype=float)
    A = A.reshape(A.shape[0], -1)
    return [f"{prefix}{j}" for j in range(A.shape[1])], A


def write_trajectory_csv(path, traj: RotationTrajectory, estimates: dict | None = None) -> None:
    """Write ``t, theta, x0, x1, y0, y1`` plus one column pair per named estimate.

    Floats are written with ``repr`` so a reread reproduces them exactly.
    """
    names = ["t", "theta"]
    blocks = []
    for prefix, A in (("x", traj.x), ("y", traj.y), *((f"{k}_", v) for k, v in (estimates or {}).items())):
        cols, A = _columns(prefix, A)
        if A.shape[0] != traj.x.shape[0]:
            raise InputError(f"{prefix} has {A.shape[0]} rows, trajectory has {traj.x.shape[0]}")
        names += cols
        blocks.append(A)
    data = np.hstack(blocks)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for t, (th, row) in enumerate(zip(traj.theta, data)):
            w.writerow([t, repr(float(th)), *map(repr, map(float, row))])


def write_samples_csv(path, points, weights=None) -> None:
    """Write sample points (columns ``p0, p1, ...``) with an optional ``weight`` column."""
    names, P = _columns("p", points)
    if weights is not None:
        weights = np.asarray(weights, dtype=float).ravel()
        if weights.shape[0] != P.shape[0]:
            raise InputError("weights and points differ in length")
        names.append("weight")
        P = np.column_stack([P, weights])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in P:
            w.writerow([repr(float(v)) for v in row])
