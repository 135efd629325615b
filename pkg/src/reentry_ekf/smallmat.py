"""Fixed-size 4x4 linear algebra for the filter recursion.

Matrices are ``(4, 4)`` float64 numpy arrays and vectors are ``(4,)`` arrays.
Products go through numpy; the SPD inverse is a hand-rolled Cholesky so that a
degenerate innovation covariance is reported instead of silently inverted.
"""

from __future__ import annotations

import math

import numpy as np

N = 4


class NotPositiveDefinite(ValueError):
    """Raised when a Cholesky pivot is not strictly positive."""


def identity() -> np.ndarray:
    return np.eye(N)


def mat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b


def transpose(a: np.ndarray) -> np.ndarray:
    return a.T.copy()


def symmetrize(m: np.ndarray) -> np.ndarray:
    """Return ``(m + m.T) / 2``; the result is bit-exactly symmetric."""
    return 0.5 * (m + m.T)


def cholesky(m: np.ndarray) -> list[list[float]]:
    """Lower Cholesky factor of an SPD 4x4 matrix, as nested lists."""
    a = m.tolist()
    L = [[0.0] * N for _ in range(N)]
    for j in range(N):
        Lj = L[j]
        s = a[j][j]
        for k in range(j):
            s -= Lj[k] * Lj[k]
        if not s > 0.0:
            raise NotPositiveDefinite(f"non-positive pivot {s!r} at index {j}")
        d = math.sqrt(s)
        Lj[j] = d
        for i in range(j + 1, N):
            Li = L[i]
            t = a[i][j]
            for k in range(j):
                t -= Li[k] * Lj[k]
            Li[j] = t / d
    return L


def invert_spd(m: np.ndarray) -> np.ndarray:
    """Inverse of a symmetric positive definite 4x4 matrix.

    Factor ``m = L L^T``, invert the triangular factor by forward
    substitution and form ``L^-T L^-1``.

    Raises:
        NotPositiveDefinite: if the factorization meets a non-positive pivot.
    """
    L = cholesky(m)
    # W = L^-1, lower triangular
    W = [[0.0] * N for _ in range(N)]
    for i in range(N):
        Li = L[i]
        W[i][i] = 1.0 / Li[i]
        for j in range(i):
            s = 0.0
            for k in range(j, i):
                s += Li[k] * W[k][j]
            W[i][j] = -s / Li[i]
    inv = [[0.0] * N for _ in range(N)]
    for i in range(N):
        for j in range(i + 1):
            s = 0.0
            for k in range(i, N):
                s += W[k][i] * W[k][j]
            inv[i][j] = s
            inv[j][i] = s
    return np.array(inv)


def min_eigenvalue(m: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(symmetrize(m))[0])
