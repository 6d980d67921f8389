"""Dense symmetric / SPD matrix kernel.

Cholesky, inverse and log-determinant are backed by LAPACK through numpy.
The symmetric eigensolver is a cyclic Jacobi method, which is exact enough
and fully reproducible for the small dimensions used here.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from os import PathLike
from typing import Iterable

import numpy as np

__all__ = [
    "NotPositiveDefinite",
    "NoConvergence",
    "DimensionMismatch",
    "SpdMatrix",
    "DiagMatrix",
    "EigenDecomp",
    "as_spd",
    "cholesky",
    "spd_inverse",
    "log_det",
    "symmetric_eigen",
    "givens_rotation",
    "givens_rotation_product",
    "read_matrix_csv",
    "write_matrix_csv",
]

JACOBI_MAX_SWEEPS = 100
JACOBI_TOL = 1e-13
CSV_SYMMETRY_TOL = 1e-9


class NotPositiveDefinite(ValueError):
    """Raised when a Cholesky pivot is not strictly positive."""


class NoConvergence(RuntimeError):
    """Raised when the Jacobi sweep budget is exhausted."""


class DimensionMismatch(ValueError):
    pass


class SpdMatrix(np.ndarray):
    """A symmetric positive-definite ``ndarray``.

    Construction symmetrizes the input exactly (``(M + M.T) / 2``) and runs a
    Cholesky factorization, so any instance is known to be SPD. No
    conditioning floor is applied.
    """

    def __new__(cls, data, *, check: bool = True):
        arr = np.array(data, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise DimensionMismatch(f"expected a square matrix, got shape {arr.shape}")
        arr = 0.5 * (arr + arr.T)
        obj = arr.view(cls)
        if check:
            cholesky(obj)
        return obj

    @property
    def dim(self) -> int:
        return self.shape[0]


@dataclass(frozen=True)
class DiagMatrix:
    """Diagonal matrix stored by its strictly positive diagonal."""

    diag: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.diag, dtype=float).reshape(-1)
        if d.size == 0 or not np.all(d > 0):
            raise ValueError("diagonal entries must be strictly positive")
        object.__setattr__(self, "diag", d)

    @property
    def dim(self) -> int:
        return self.diag.size

    def dense(self) -> np.ndarray:
        return np.diag(self.diag)

    def log_det(self) -> float:
        return float(np.sum(np.log(self.diag)))


@dataclass(frozen=True)
class EigenDecomp:
    """Eigenvalues sorted descending and matching orthonormal eigenvector columns."""

    values: np.ndarray
    vectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.values) @ self.vectors.T


def as_spd(m) -> SpdMatrix:
    if isinstance(m, SpdMatrix):
        return m
    return SpdMatrix(m)


def cholesky(m) -> np.ndarray:
    """Lower-triangular ``L`` with ``m = L @ L.T``.

    Raises
    ------
    NotPositiveDefinite
        If a pivot is not strictly positive.
    """
    a = np.asarray(m, dtype=float)
    try:
        L = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    # LAPACK accepts a zero pivot on some inputs without complaint
    if not np.all(np.diag(L) > 0) or not np.all(np.isfinite(L)):
        raise NotPositiveDefinite("non-positive pivot in Cholesky factorization")
    return L


def spd_inverse(m) -> SpdMatrix:
    L = cholesky(m)
    L_inv = np.linalg.inv(L)
    return SpdMatrix(L_inv.T @ L_inv, check=False)


def log_det(m) -> float:
    """``log |m|`` as ``2 * sum(log(diag(L)))``."""
    L = cholesky(m)
    return 2.0 * float(np.sum(np.log(np.diag(L))))


def _off_norm(a: np.ndarray) -> float:
    off = a - np.diag(np.diag(a))
    return float(np.sqrt(np.sum(off * off)))


def symmetric_eigen(m, *, max_sweeps: int = JACOBI_MAX_SWEEPS, tol: float = JACOBI_TOL) -> EigenDecomp:
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Convergence is declared when the off-diagonal Frobenius norm drops below
    ``tol`` times the Frobenius norm of the input.
    """
    a = np.array(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
    a = 0.5 * (a + a.T)
    p = a.shape[0]
    v = np.eye(p)
    scale = np.linalg.norm(a)
    if scale == 0.0:
        return EigenDecomp(np.zeros(p), v)

    for _ in range(max_sweeps):
        if _off_norm(a) <= tol * scale:
            break
        for i in range(p - 1):
            for j in range(i + 1, p):
                aij = a[i, j]
                if aij == 0.0:
                    continue
                theta = (a[j, j] - a[i, i]) / (2.0 * aij)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                # A <- J^T A J with J the (i, j) plane rotation
                ai = a[:, i].copy()
                aj = a[:, j]
                a[:, i] = c * ai - s * aj
                a[:, j] = s * ai + c * aj
                ai = a[i, :].copy()
                aj = a[j, :]
                a[i, :] = c * ai - s * aj
                a[j, :] = s * ai + c * aj
                a[i, j] = a[j, i] = 0.0
                vi = v[:, i].copy()
                vj = v[:, j]
                v[:, i] = c * vi - s * vj
                v[:, j] = s * vi + c * vj
    else:
        if _off_norm(a) > tol * scale:
            raise NoConvergence(f"Jacobi did not converge in {max_sweeps} sweeps")

    values = np.diag(a).copy()
    order = np.argsort(-values, kind="stable")
    return EigenDecomp(values[order], v[:, order])


def givens_rotation(p: int, i: int, j: int, theta: float) -> np.ndarray:
    """Plane rotation acting on coordinates ``i < j``: ``[[c, -s], [s, c]]``."""
    g = np.eye(p)
    c, s = math.cos(theta), math.sin(theta)
    g[i, i] = c
    g[j, j] = c
    g[i, j] = -s
    g[j, i] = s
    return g


def givens_rotation_product(p: int, angles: Iterable[float]) -> np.ndarray:
    """Orthogonal matrix built from ``p(p-1)/2`` Givens angles.

    Pairs ``(i, j)``, ``i < j``, are visited in lexicographic order and each
    rotation is multiplied on the right: ``Q <- Q @ G(i, j, theta_k)``.
    """
    angles = np.asarray(list(angles), dtype=float)
    expected = p * (p - 1) // 2
    if angles.size != expected:
        raise DimensionMismatch(f"p={p} needs {expected} angles, got {angles.size}")
    q = np.eye(p)
    k = 0
    for i in range(p - 1):
        for j in range(i + 1, p):
            q = q @ givens_rotation(p, i, j, angles[k])
            k += 1
    return q


def read_matrix_csv(path: str | PathLike) -> SpdMatrix:
    """Read a full ``p x p`` matrix, one row per line.

    Symmetry is checked with tolerance ``1e-9`` relative to the largest
    entry and the matrix is then symmetrized by averaging.
    """
    with open(path, newline="") as fh:
        rows = [[float(x) for x in row] for row in csv.reader(fh) if row]
    arr = np.array(rows, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionMismatch(f"{path}: matrix is not square")
    scale = max(float(np.max(np.abs(arr))), 1.0)
    if np.max(np.abs(arr - arr.T)) > CSV_SYMMETRY_TOL * scale:
        raise ValueError(f"{path}: matrix is not symmetric")
    return SpdMatrix(arr)


def write_matrix_csv(path: str | PathLike, m) -> None:
    arr = np.asarray(m, dtype=float)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in arr:
            writer.writerow([repr(float(x)) for x in row])
