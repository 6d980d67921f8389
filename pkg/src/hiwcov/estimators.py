"""Bayes estimators, the MLE baseline, and the loss functions used to score them."""

from __future__ import annotations

import enum
import math

import numpy as np
from scipy.linalg import solve_triangular

from .matrix_core import DimensionMismatch, NotPositiveDefinite, SpdMatrix, cholesky, log_det
from .rand_dist import InvalidParameter

__all__ = [
    "LossKind",
    "EstimatorKind",
    "bayes_estimate_L1",
    "bayes_estimate_L2",
    "mle_estimate",
    "loss_frobenius",
    "loss_stein",
    "loss_eigen_rel",
    "shrunk_eigenvalues",
]


class LossKind(str, enum.Enum):
    STEIN = "stein"
    FROBENIUS = "frobenius"
    EIGEN_MIN_REL = "eigmin_rel"
    EIGEN_MAX_REL = "eigmax_rel"


class EstimatorKind(str, enum.Enum):
    MODEL1_L1 = "model1_L1"
    MODEL1_L2 = "model1_L2"
    MODEL2_L1 = "model2_L1"
    MODEL2_L2 = "model2_L2"
    DK_L1 = "dk_L1"
    DK_L2 = "dk_L2"
    MLE = "mle"


def bayes_estimate_L2(trace) -> SpdMatrix:
    """Posterior mean ``E(Sigma | S)``, the Bayes rule under Frobenius loss.

    Raises ``NotPositiveDefinite`` rather than repairing a bad average.
    """
    m = np.asarray(trace.sigma_mean, dtype=float)
    return SpdMatrix(0.5 * (m + m.T))


def bayes_estimate_L1(trace) -> SpdMatrix:
    """``E(Sigma^-1 | S)^-1``, the Bayes rule under Stein's loss."""
    m = np.asarray(trace.sigma_inv_mean, dtype=float)
    m = SpdMatrix(0.5 * (m + m.T))
    L = cholesky(m)
    l_inv = solve_triangular(L, np.eye(L.shape[0]), lower=True)
    return SpdMatrix(l_inv.T @ l_inv)


def mle_estimate(s, n: int) -> np.ndarray:
    """``S / n``. Singular when ``n < p``; deliberately not validated as SPD."""
    if n < 1:
        raise ValueError("n must be >= 1")
    s = np.asarray(s, dtype=float)
    return 0.5 * (s + s.T) / n


def _check_dims(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape or a.ndim != 2:
        raise DimensionMismatch(f"shape mismatch {a.shape} vs {b.shape}")


def loss_frobenius(est, truth) -> float:
    """Squared Frobenius distance, ``sum_ij (est_ij - truth_ij)**2``."""
    est = np.asarray(est, dtype=float)
    truth = np.asarray(truth, dtype=float)
    _check_dims(est, truth)
    d = est - truth
    return float(np.sum(d * d))


def loss_stein(est, truth) -> float:
    """Stein's loss ``tr(est truth^-1) - log det(est truth^-1) - p``.

    Evaluated on ``M = L^-1 est L^-T`` with ``truth = L L^T``. An estimate
    that is not positive definite has loss ``+inf``.
    """
    est = np.asarray(est, dtype=float)
    truth = np.asarray(truth, dtype=float)
    _check_dims(est, truth)
    L = cholesky(truth)
    x = solve_triangular(L, est, lower=True)
    m = solve_triangular(L, x.T, lower=True)
    m = 0.5 * (m + m.T)
    try:
        ld = log_det(m)
    except NotPositiveDefinite:
        return math.inf
    return max(float(np.trace(m)) - ld - est.shape[0], 0.0)


def loss_eigen_rel(truth_eig: float, est_eig: float) -> float:
    """Relative absolute eigenvalue error ``|truth - est| / truth``."""
    if not truth_eig > 0:
        raise InvalidParameter(f"true eigenvalue must be positive, got {truth_eig}")
    return abs(truth_eig - est_eig) / truth_eig


def shrunk_eigenvalues(beta: float, d_scalar: float, n: int, mle_eigs) -> np.ndarray:
    """Eigenvalues of the posterior mean for a fixed ``IW`` prior centred at ``d I``.

    ``g_i = ((beta-p-1) d + n l_i) / (beta + n - p - 1)``; exact only when the
    prior mean commutes with ``S``, hence the scalar ``d``.
    """
    l = np.asarray(mle_eigs, dtype=float)
    p = l.size
    if not beta > p + 1:
        raise InvalidParameter(f"beta={beta} must exceed p+1={p + 1}")
    w = beta - p - 1
    return (w * d_scalar + n * l) / (w + n)
