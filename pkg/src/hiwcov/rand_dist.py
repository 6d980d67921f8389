"""Seedable random sources and samplers.

Bit generator: numpy's PCG64, seeded through ``numpy.random.SeedSequence``.
A substream for a tuple of non-negative integer keys ``(k1, k2, ...)`` is
``SeedSequence([seed, k1, k2, ...])``; the SeedSequence hash is the frozen
mixing function, so any replication can be regenerated in isolation.

Gamma variates use Marsaglia and Tsang's squeeze method, with the
``U**(1/shape)`` boost for shapes below one. Wishart variates use the
Bartlett decomposition, valid for any real ``df > p - 1``.

``scatter_matrix`` does not centre the data: the model has a known zero mean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .matrix_core import SpdMatrix, as_spd, cholesky

__all__ = [
    "InvalidParameter",
    "RngStream",
    "WishartParams",
    "sample_standard_normal",
    "sample_gamma",
    "standard_gamma_array",
    "bartlett_factor",
    "sample_wishart",
    "sample_inverse_wishart",
    "sample_mvn_zero",
    "scatter_matrix",
]


class InvalidParameter(ValueError):
    pass


class RngStream:
    """Single-owner random stream on PCG64.

    Do not share an instance between workers; use :meth:`substream`.
    """

    def __init__(self, seed: int | np.random.SeedSequence = 0):
        if isinstance(seed, np.random.SeedSequence):
            self._seq = seed
        else:
            self._seq = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF)
        self.gen = np.random.Generator(np.random.PCG64(self._seq))

    @classmethod
    def for_keys(cls, seed: int, *keys: int) -> "RngStream":
        entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(k) for k in keys]
        return cls(np.random.SeedSequence(entropy))

    def substream(self, *keys: int) -> "RngStream":
        entropy = self._seq.entropy
        if not isinstance(entropy, (list, tuple)):
            entropy = [entropy]
        return RngStream(np.random.SeedSequence(list(entropy) + [int(k) for k in keys]))

    def normal(self, size=None):
        return self.gen.standard_normal(size)

    def uniform(self, size=None):
        return self.gen.random(size)


@dataclass(frozen=True)
class WishartParams:
    """Degrees of freedom and scale of a (inverse-)Wishart law."""

    df: float
    scale: SpdMatrix

    def __post_init__(self):
        scale = as_spd(self.scale)
        object.__setattr__(self, "scale", scale)
        if not self.df > scale.dim - 1:
            raise InvalidParameter(f"df={self.df} must exceed p-1={scale.dim - 1}")


def sample_standard_normal(rng: RngStream) -> float:
    return float(rng.gen.standard_normal())


SMALL_BATCH = 16


def _mt_scalar(d: float, c: float, x: float, u: float) -> float:
    """One Marsaglia-Tsang trial; returns 0.0 on rejection."""
    v = 1.0 + c * x
    if v <= 0.0:
        return 0.0
    v = v * v * v
    x2 = x * x
    if u < 1.0 - 0.0331 * x2 * x2 or math.log(u) < 0.5 * x2 + d * (1.0 - v + math.log(v)):
        return d * v
    return 0.0


def standard_gamma_array(rng: RngStream, shape) -> np.ndarray:
    """Marsaglia-Tsang draws from ``Gamma(shape, 1)``, one per entry of ``shape``.

    Rejected slots are redrawn until every entry is accepted. Small batches
    run a scalar loop over pre-drawn normals and uniforms.
    """
    a = np.atleast_1d(np.asarray(shape, dtype=float))
    if not np.all(a > 0):
        raise InvalidParameter("gamma shape must be positive")
    small = a < 1.0
    a_eff = np.where(small, a + 1.0, a)
    d = a_eff - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    gen = rng.gen
    if a.size <= SMALL_BATCH:
        dl, cl = d.tolist(), c.tolist()
        res = [0.0] * a.size
        todo = list(range(a.size))
        while todo:
            xs = gen.standard_normal(len(todo)).tolist()
            us = gen.random(len(todo)).tolist()
            left = []
            for i, x, u in zip(todo, xs, us):
                g = _mt_scalar(dl[i], cl[i], x, u)
                if g > 0.0:
                    res[i] = g
                else:
                    left.append(i)
            todo = left
        out = np.array(res)
    else:
        out = np.empty_like(a_eff)
        todo = np.arange(a.size)
        while todo.size:
            x = gen.standard_normal(todo.size)
            u = gen.random(todo.size)
            v = 1.0 + c[todo] * x
            ok = v > 0
            v = np.where(ok, v * v * v, 1.0)
            x2 = x * x
            accept = ok & ((u < 1.0 - 0.0331 * x2 * x2)
                           | (np.log(u) < 0.5 * x2 + d[todo] * (1.0 - v + np.log(v))))
            out[todo[accept]] = d[todo[accept]] * v[accept]
            todo = todo[~accept]
    if np.any(small):
        idx = np.nonzero(small)[0]
        u = gen.random(idx.size)
        out[idx] *= u ** (1.0 / a[idx])
    return out.reshape(np.shape(shape)) if np.ndim(shape) else out


def sample_gamma(rng: RngStream, shape: float, rate: float) -> float:
    """Draw from ``Gamma(shape, rate)``, density proportional to ``x**(shape-1) exp(-rate x)``."""
    if not (shape > 0 and rate > 0):
        raise InvalidParameter(f"shape={shape} and rate={rate} must both be positive")
    return float(standard_gamma_array(rng, np.array([shape]))[0] / rate)


def bartlett_factor(rng: RngStream, df: float, p: int) -> np.ndarray:
    """Lower-triangular ``A`` with ``A @ A.T ~ Wishart(df, I_p)``.

    ``A[i, i]**2 ~ chi2(df - i)`` (0-based ``i``), below-diagonal entries
    standard normal.
    """
    if not df > p - 1:
        raise InvalidParameter(f"df={df} must exceed p-1={p - 1}")
    chi2 = 2.0 * standard_gamma_array(rng, 0.5 * (df - np.arange(p)))
    a = np.zeros((p, p))
    a[np.tril_indices(p, -1)] = rng.gen.standard_normal(p * (p - 1) // 2)
    a[np.diag_indices(p)] = np.sqrt(chi2)
    return a


def sample_wishart(rng: RngStream, params: WishartParams) -> SpdMatrix:
    p = params.scale.dim
    L = cholesky(params.scale)
    la = L @ bartlett_factor(rng, params.df, p)
    return SpdMatrix(la @ la.T, check=False)


def sample_inverse_wishart(rng: RngStream, df: float, scale) -> SpdMatrix:
    """Draw ``Sigma ~ IW(df, scale)`` as the inverse of a ``Wishart(df, scale^-1)`` draw.

    With ``scale = L L^T`` and ``W = L^{-T} A A^T L^{-1}``,
    ``W^{-1} = (L A^{-T}) (L A^{-T})^T``, so only the triangular Bartlett factor is inverted.
    """
    scale = as_spd(scale)
    p = scale.dim
    if not df > p - 1:
        raise InvalidParameter(f"df={df} must exceed p-1={p - 1}")
    L = cholesky(scale)
    a = bartlett_factor(rng, df, p)
    f = L @ np.linalg.inv(a).T
    return SpdMatrix(f @ f.T)


def sample_mvn_zero(rng: RngStream, cov, n: int) -> np.ndarray:
    """``n`` i.i.d. rows from ``N_p(0, cov)``, generated as ``L z``."""
    L = cholesky(as_spd(cov))
    z = rng.gen.standard_normal((int(n), L.shape[0]))
    return z @ L.T


def scatter_matrix(data) -> np.ndarray:
    """``S = sum_i x_i x_i^T`` without mean-centering."""
    x = np.atleast_2d(np.asarray(data, dtype=float))
    s = x.T @ x
    return 0.5 * (s + s.T)
