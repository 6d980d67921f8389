"""Hierarchical inverse-Wishart priors and their full conditionals.

Three models share the conditional ``Sigma | rest ~ IW(beta + n, S + scale)``
and differ in the diagonal scale and the prior on ``beta``:

``MODEL1``
    scale ``phi * I`` (one free scalar), ``pi(beta) ~ beta**-delta`` on
    ``(p+1, inf)``.
``MODEL2``
    scale ``diag(phi_1..phi_p)``, same prior on ``beta``.
``MODEL_DK``
    scale ``diag(alpha_1..alpha_p)``, ``pi(beta) ~ 1/beta`` on ``(p-1, b]``.

Model 1 and 2 are written in the reparametrized scale ``phi = (beta-p-1) alpha``.
Every log density here is unnormalized; out-of-support points evaluate to
``-inf`` rather than raising.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .matrix_core import DiagMatrix, SpdMatrix, as_spd, log_det, spd_inverse
from .rand_dist import InvalidParameter, WishartParams

__all__ = [
    "Variant",
    "ModelSpec",
    "HyperState",
    "ChainState",
    "conditional_sigma",
    "conditional_scale_model1",
    "conditional_scale_model2",
    "conditional_scale_dk",
    "log_multivariate_gamma",
    "beta_support",
    "beta_log_conditional",
    "beta_log_conditional_from_c",
    "beta_c_term",
    "log_joint_posterior",
    "beta_marginal_isotropic",
]

LOG2 = math.log(2.0)
LOGPI = math.log(math.pi)


class Variant(str, enum.Enum):
    MODEL1 = "model1"
    MODEL2 = "model2"
    MODEL_DK = "dk"

    @classmethod
    def parse(cls, value: "str | Variant") -> "Variant":
        if isinstance(value, Variant):
            return value
        key = str(value).strip().lower().replace("&", "").replace("_", "")
        aliases = {"model1": cls.MODEL1, "m1": cls.MODEL1, "1": cls.MODEL1,
                   "model2": cls.MODEL2, "m2": cls.MODEL2, "2": cls.MODEL2,
                   "dk": cls.MODEL_DK, "modeldk": cls.MODEL_DK}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown model variant {value!r}") from None


@dataclass(frozen=True)
class ModelSpec:
    """Active prior and its hyper-hyperparameter.

    ``delta`` is the exponent of the ``beta`` prior for Model 1/2 (must be at
    least 2 for a proper posterior). ``b`` is the upper bound on ``beta`` for
    the D&K model.
    """

    variant: Variant
    delta: int = 2
    b: float = 1e6

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant.parse(self.variant))
        if self.variant is not Variant.MODEL_DK and self.delta < 2:
            raise InvalidParameter(f"delta={self.delta}: the posterior is improper for delta <= 1")

    @property
    def beta_exponent(self) -> float:
        return 1.0 if self.variant is Variant.MODEL_DK else float(self.delta)

    def validate_dim(self, p: int) -> None:
        if self.variant is Variant.MODEL_DK and not self.b > p - 1:
            raise InvalidParameter(f"b={self.b} must exceed p-1={p - 1}")


@dataclass(frozen=True)
class HyperState:
    beta: float
    scale_diag: DiagMatrix

    def __post_init__(self):
        if not isinstance(self.scale_diag, DiagMatrix):
            object.__setattr__(self, "scale_diag", DiagMatrix(self.scale_diag))


@dataclass(frozen=True)
class ChainState:
    sigma: SpdMatrix
    hyper: HyperState
    sigma_inv: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "sigma", as_spd(self.sigma))
        if self.sigma_inv is None:
            object.__setattr__(self, "sigma_inv", np.asarray(spd_inverse(self.sigma)))


def beta_support(spec: ModelSpec, p: int) -> tuple[float, float]:
    """``(lower, upper)`` of the beta support; lower is exclusive, upper inclusive."""
    if spec.variant is Variant.MODEL_DK:
        return float(p - 1), float(spec.b)
    return float(p + 1), math.inf


def _in_support(spec: ModelSpec, p: int, beta):
    lo, hi = beta_support(spec, p)
    return (beta > lo) & (beta <= hi)


def conditional_sigma(spec: ModelSpec, hyper: HyperState, s, n: int) -> WishartParams:
    """Parameters of the inverse-Wishart full conditional of ``Sigma``."""
    s = np.asarray(s, dtype=float)
    scale = s + hyper.scale_diag.dense()
    return WishartParams(df=hyper.beta + n, scale=SpdMatrix(scale))


def conditional_scale_model1(beta: float, sigma_inv) -> tuple[float, float]:
    """Shape and rate of ``phi | rest`` under Model 1: ``(p beta/2, tr(Sigma^-1)/2)``."""
    sigma_inv = np.asarray(sigma_inv)
    p = sigma_inv.shape[0]
    return p * beta / 2.0, float(np.trace(sigma_inv)) / 2.0


def conditional_scale_model2(beta: float, sigma_inv, j: int) -> tuple[float, float]:
    """Shape and rate of ``phi_j | rest`` under Model 2.

    The shape is ``beta/2``: the joint posterior carries ``|Phi|**(beta/2 - 1)``
    and ``tr(Sigma^-1 Phi) = sum_j (Sigma^-1)_jj phi_j``.
    """
    return beta / 2.0, float(np.asarray(sigma_inv)[j, j]) / 2.0


def conditional_scale_dk(beta: float, sigma_inv, j: int) -> tuple[float, float]:
    return beta / 2.0, float(np.asarray(sigma_inv)[j, j]) / 2.0


def log_multivariate_gamma(p: int, a):
    """``log Gamma_p(a) = p(p-1)/4 log(pi) + sum_j log Gamma(a + (1-j)/2)``.

    Accepts scalar or array ``a``; raises ``InvalidParameter`` when any
    ``a <= (p-1)/2``.
    """
    a_arr = np.asarray(a, dtype=float)
    if np.any(a_arr <= (p - 1) / 2.0):
        raise InvalidParameter(f"log_multivariate_gamma needs a > {(p - 1) / 2}")
    offsets = (1.0 - np.arange(1, p + 1)) / 2.0
    total = np.sum(gammaln(a_arr[..., None] + offsets), axis=-1) + p * (p - 1) / 4.0 * LOGPI
    return float(total) if np.ndim(a) == 0 else total


def _log_mgamma_unchecked(p: int, a: np.ndarray) -> np.ndarray:
    offsets = (1.0 - np.arange(1, p + 1)) / 2.0
    return np.sum(gammaln(a[..., None] + offsets), axis=-1) + p * (p - 1) / 4.0 * LOGPI


def beta_c_term(log_det_sigma_inv: float, log_det_scale: float, p: int) -> float:
    """``C = (log|Sigma^-1| + log|Phi| - p log 2) / 2``, the slope of the beta log-conditional."""
    return 0.5 * (log_det_sigma_inv + log_det_scale - p * LOG2)


def beta_log_conditional_from_c(spec: ModelSpec, p: int, c: float, beta):
    """``beta C - delta log beta - log Gamma_p(beta/2)`` with ``-inf`` off support.

    Vectorised over ``beta``.
    """
    beta_arr = np.asarray(beta, dtype=float)
    inside = _in_support(spec, p, beta_arr)
    out = np.full(beta_arr.shape, -np.inf)
    b_in = beta_arr[inside]
    if b_in.size:
        out[inside] = (b_in * c - spec.beta_exponent * np.log(b_in)
                       - _log_mgamma_unchecked(p, 0.5 * b_in))
    return float(out) if np.ndim(beta) == 0 else out


def beta_log_conditional(spec: ModelSpec, sigma, scale_diag: DiagMatrix, n: int, beta):
    """Unnormalized log density of ``beta | Sigma, scale, S``.

    ``n`` does not enter: the likelihood is free of ``beta``.
    """
    if not isinstance(scale_diag, DiagMatrix):
        scale_diag = DiagMatrix(scale_diag)
    sigma = np.asarray(sigma, dtype=float)
    p = sigma.shape[0]
    c = beta_c_term(-log_det(sigma), scale_diag.log_det(), p)
    return beta_log_conditional_from_c(spec, p, c, beta)


def log_joint_posterior(spec: ModelSpec, state: ChainState, s, n: int) -> float:
    """Unnormalized log joint posterior of ``(Sigma, scale, beta)`` given ``S``."""
    sigma_inv = state.sigma_inv
    p = sigma_inv.shape[0]
    beta = state.hyper.beta
    if not _in_support(spec, p, beta):
        return -math.inf
    d = state.hyper.scale_diag.diag
    s = np.asarray(s, dtype=float)
    ld_sinv = -log_det(state.sigma)
    tr_term = float(np.sum(sigma_inv * s) + np.sum(np.diag(sigma_inv) * d))
    out = 0.5 * (beta + n + p + 1) * ld_sinv - 0.5 * tr_term
    out -= 0.5 * p * n * math.log(2 * math.pi) + 0.5 * p * beta * LOG2
    out -= spec.beta_exponent * math.log(beta) + log_multivariate_gamma(p, beta / 2.0)
    if spec.variant is Variant.MODEL1:
        phi = float(d[0])
        out += (0.5 * p * beta - 1.0) * math.log(phi)
    else:
        out += (0.5 * beta - 1.0) * float(np.sum(np.log(d)))
    return out


def beta_marginal_isotropic(spec: ModelSpec, p: int, n: int, beta):
    """Log marginal posterior of ``beta`` (up to a constant) when ``S`` is a multiple of ``I``.

    ``Sigma`` and the scale are integrated out in closed form; the result
    does not depend on the multiple. Model 2 / D&K integrate each ``phi_i``
    against a Beta(beta/2, n/2) kernel; Model 1 integrates its single
    ``phi`` against Beta(p beta/2, p n/2).
    """
    beta_arr = np.asarray(beta, dtype=float)
    inside = _in_support(spec, p, beta_arr)
    out = np.full(beta_arr.shape, -np.inf)
    b = beta_arr[inside]
    if b.size:
        ratio = _log_mgamma_unchecked(p, 0.5 * (b + n)) - _log_mgamma_unchecked(p, 0.5 * b)
        if spec.variant is Variant.MODEL1:
            kernel = gammaln(0.5 * p * b) - gammaln(0.5 * p * (b + n))
        else:
            kernel = p * (gammaln(0.5 * b) - gammaln(0.5 * (b + n)))
        out[inside] = ratio + kernel - spec.beta_exponent * np.log(b)
    return float(out) if np.ndim(beta) == 0 else out
