"""Positive definite kernels and Gram matrices.

Points are dense real vectors. A set of points is an ``(n, dim)`` array; a
1-D array passed where a point set is expected is read as ``n`` scalar
points. Matrix-valued points (for :class:`Trace`) are stored row-major as
flat vectors, and the kernel records the matrix shape.

Whether a kernel is characteristic is a population property and is not
checked at runtime.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import InputError

__all__ = [
    "Kernel",
    "GaussianRBF",
    "Trace",
    "Product",
    "as_points",
    "evaluate",
    "gram_matrix",
    "gram_entries",
    "kernel_vector",
    "kernel_from_spec",
]


def as_points(X, dim=None) -> np.ndarray:
    """Coerce ``X`` to a finite ``(n, dim)`` float array."""
    A = np.asarray(X, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    if A.ndim != 2:
        raise InputError(f"point set must be 1-D or 2-D, got shape {A.shape}")
    if A.shape[0] == 0:
        raise InputError("empty point set")
    if dim is not None and A.shape[1] != dim:
        raise InputError(f"points have dimension {A.shape[1]}, kernel expects {dim}")
    if not np.all(np.isfinite(A)):
        raise InputError("point set contains non-finite entries")
    return A


def _as_point(x) -> np.ndarray:
    a = np.asarray(x, dtype=float).ravel()
    if a.size == 0:
        raise InputError("empty point")
    return a


class Kernel:
    """Base class. Subclasses implement ``_cross`` on validated 2-D arrays."""

    input_dim: int | None = None

    def _cross(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _pairs(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        """Row-wise values ``k(A_i, B_i)``."""
        return np.array([self._cross(a[None, :], b[None, :])[0, 0] for a, b in zip(A, B)])

    def __call__(self, x, y) -> float:
        return evaluate(self, x, y)


@dataclass(frozen=True)
class GaussianRBF(Kernel):
    """``k(x, y) = exp(-||x - y||^2 / (2 bandwidth^2))``."""

    bandwidth: float

    def __post_init__(self):
        if not (math.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise InputError(f"bandwidth must be positive and finite, got {self.bandwidth}")

    def _cross(self, A, B):
        return np.exp(-cdist(A, B, "sqeuclidean") / (2.0 * self.bandwidth**2))

    def _pairs(self, A, B):
        return np.exp(-np.sum((A - B) ** 2, axis=1) / (2.0 * self.bandwidth**2))

    def scaled(self, factor: float) -> GaussianRBF:
        return GaussianRBF(self.bandwidth * factor)


@dataclass(frozen=True)
class Trace(Kernel):
    """``k(A, B) = Tr[A B^T]`` for matrices stored as flat row-major vectors."""

    shape: tuple[int, int]

    def __post_init__(self):
        p, q = self.shape
        if p < 1 or q < 1:
            raise InputError(f"invalid matrix shape {self.shape}")
        object.__setattr__(self, "shape", (int(p), int(q)))

    @property
    def input_dim(self) -> int:
        return self.shape[0] * self.shape[1]

    def _cross(self, A, B):
        return A @ B.T

    def _pairs(self, A, B):
        return np.sum(A * B, axis=1)


@dataclass(frozen=True)
class Product(Kernel):
    """``k((x1, x2), (y1, y2)) = left(x1, y1) * right(x2, y2)``.

    Points are concatenations; the first ``split`` coordinates go to ``left``.
    """

    left: Kernel
    right: Kernel
    split: int

    def __post_init__(self):
        if self.split < 1:
            raise InputError("split must be at least 1")
        if self.left.input_dim is not None and self.left.input_dim != self.split:
            raise InputError("split does not match the left kernel's input dimension")

    @property
    def input_dim(self) -> int | None:
        if self.right.input_dim is None:
            return None
        return self.split + self.right.input_dim

    def _cross(self, A, B):
        s = self.split
        if A.shape[1] <= s:
            raise InputError(f"points of dimension {A.shape[1]} cannot be split at {s}")
        return self.left._cross(A[:, :s], B[:, :s]) * self.right._cross(A[:, s:], B[:, s:])

    def _pairs(self, A, B):
        s = self.split
        return self.left._pairs(A[:, :s], B[:, :s]) * self.right._pairs(A[:, s:], B[:, s:])


def evaluate(k: Kernel, x, y) -> float:
    """Evaluate ``k(x, y)`` for two single points."""
    a, b = _as_point(x), _as_point(y)
    if a.shape != b.shape:
        raise InputError(f"dimension mismatch: {a.size} vs {b.size}")
    if k.input_dim is not None and a.size != k.input_dim:
        raise InputError(f"points have dimension {a.size}, kernel expects {k.input_dim}")
    return float(k._cross(a[None, :], b[None, :])[0, 0])


def gram_matrix(k: Kernel, X, Z=None) -> np.ndarray:
    """Matrix of pairwise evaluations ``k(X_i, Z_j)``.

    With ``Z`` omitted (or the same object as ``X``) the result is the
    symmetric Gram matrix of ``X``, made bitwise symmetric by mirroring the
    upper triangle.
    """
    A = as_points(X, k.input_dim)
    if Z is None or Z is X:
        G = k._cross(A, A)
        return np.triu(G) + np.triu(G, 1).T
    B = as_points(Z, k.input_dim)
    if B.shape[1] != A.shape[1]:
        raise InputError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    return k._cross(A, B)


def gram_entries(k: Kernel, X):
    """Elementwise Gram oracle ``(rows, cols) -> k(X[rows], X[cols])``.

    Suitable for :func:`incomplete_cholesky`, which never needs the full
    matrix.
    """
    A = as_points(X, k.input_dim)

    def oracle(rows, cols):
        return k._pairs(A[np.asarray(rows)], A[np.asarray(cols)])

    return oracle


def kernel_vector(k: Kernel, X, y) -> np.ndarray:
    """``(k(X_1, y), ..., k(X_n, y))`` for a single point ``y``."""
    A = as_points(X, k.input_dim)
    b = _as_point(y)
    if b.size != A.shape[1]:
        raise InputError(f"dimension mismatch: {A.shape[1]} vs {b.size}")
    return k._cross(A, b[None, :])[:, 0]


_MEDIAN_RE = re.compile(r"^median(?:\s*\*\s*([0-9.eE+-]+))?$")


def _parse_bandwidth(value, points):
    if isinstance(value, (int, float)):
        return float(value)
    text = str(value).strip()
    m = _MEDIAN_RE.match(text)
    if m is None:
        try:
            return float(text)
        except ValueError:
            raise InputError(f"unrecognized bandwidth {value!r}") from None
    if points is None:
        raise InputError("median bandwidth needs the training points")
    from .modelsel import median_bandwidth

    factor = float(m.group(1)) if m.group(1) else 1.0
    return factor * median_bandwidth(points)


def kernel_from_spec(spec: dict, points=None) -> Kernel:
    """Build a kernel from a config mapping.

    ``{"type": "gaussian", "bandwidth": 0.5 | "median" | "median*2"}``,
    ``{"type": "trace", "shape": [3, 3]}`` or
    ``{"type": "product", "left": {...}, "right": {...}, "split": d}``.
    ``points`` is required for median bandwidths; for products each side
    sees its own block of coordinates.
    """
    kind = str(spec.get("type", "gaussian")).lower()
    if kind == "gaussian":
        return GaussianRBF(_parse_bandwidth(spec.get("bandwidth", "median"), points))
    if kind == "trace":
        shape = spec.get("shape")
        if shape is None:
            if points is None:
                raise InputError("trace kernel needs a shape")
            dim = as_points(points).shape[1]
            side = math.isqrt(dim)
            if side * side != dim:
                raise InputError("trace kernel shape cannot be inferred")
            shape = (side, side)
        return Trace(tuple(shape))
    if kind == "product":
        split = int(spec["split"])
        P = None if points is None else as_points(points)
        left = kernel_from_spec(spec["left"], None if P is None else P[:, :split])
        right = kernel_from_spec(spec["right"], None if P is None else P[:, split:])
        return Product(left, right, split)
    raise InputError(f"unknown kernel type {kind!r}")
