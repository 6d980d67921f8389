"""Metropolis-within-Gibbs samplers for the three hierarchical models.

One sweep updates, in order,

1. ``Sigma ~ IW(beta + n, S + scale)``,
2. the diagonal scale from its Gamma conditional(s),
3. ``beta`` by a random-walk Metropolis step on ``gamma = log(beta - lower)``.

The beta proposal is ``N(gamma, 2 * var)`` where ``var`` is the variance of
the gamma-space conditional computed by trapezoidal quadrature. The accept
ratio is the gamma-space target ratio, Jacobian ``exp(gamma)`` included.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from os import PathLike

import numpy as np
from scipy.special import gammaln

from .matrix_core import NotPositiveDefinite
from .models import ChainState, ModelSpec, Variant, beta_c_term, beta_support
from .rand_dist import RngStream, standard_gamma_array

__all__ = [
    "ChainDiverged",
    "QuadratureDegenerate",
    "SamplerConfig",
    "ChainTrace",
    "BetaKernel",
    "gamma_moments_by_quadrature",
    "estimate_gamma_variance",
    "metropolis_beta_step",
    "run_chain",
    "initial_state",
    "write_trace_csv",
]

log = logging.getLogger(__name__)

BETA_DIVERGENCE = 1e12
PRESCAN_POINTS = 64
PRESCAN_RANGE = (-30.0, 30.0)
# relative weight above which the fine grid is considered to truncate mass
EDGE_WEIGHT_TOL = 1e-3


class ChainDiverged(RuntimeError):
    pass


class QuadratureDegenerate(RuntimeError):
    pass


@dataclass(frozen=True)
class SamplerConfig:
    iterations: int = 20_000
    burn_in: int = 5_000
    seed: int = 0
    quad_points: int = 512
    quad_halfwidth: float = 12.0
    variance_every: int = 1
    retain_sigma: bool = False
    freeze_beta: bool = False
    freeze_scale: bool = False

    def __post_init__(self):
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError(f"burn_in={self.burn_in} must be in [0, iterations={self.iterations})")
        if self.quad_points < 64:
            raise ValueError("quad_points must be at least 64")
        if self.variance_every < 1:
            raise ValueError("variance_every must be >= 1")

    def with_(self, **kw) -> "SamplerConfig":
        return replace(self, **kw)


@dataclass
class ChainTrace:
    """Post-burn-in summaries of one chain."""

    sigma_mean: np.ndarray
    sigma_inv_mean: np.ndarray
    beta_draws: np.ndarray
    accept_flags: np.ndarray
    sigma_diag: np.ndarray
    iterations: np.ndarray
    sigma_draws: np.ndarray | None = None
    warnings: list[str] = field(default_factory=list)

    @property
    def n_retained(self) -> int:
        return int(self.beta_draws.size)

    @property
    def accept_count(self) -> int:
        return int(np.count_nonzero(self.accept_flags))

    @property
    def acceptance_rate(self) -> float:
        return self.accept_count / max(self.n_retained, 1)

    @classmethod
    def from_draws(cls, draws) -> "ChainTrace":
        """Build a trace from explicit ``Sigma`` draws (hyperparameters unknown)."""
        draws = np.asarray(draws, dtype=float)
        k = draws.shape[0]
        invs = np.linalg.inv(draws)
        return cls(
            sigma_mean=draws.mean(axis=0),
            sigma_inv_mean=invs.mean(axis=0),
            beta_draws=np.full(k, np.nan),
            accept_flags=np.zeros(k, dtype=bool),
            sigma_diag=np.diagonal(draws, axis1=1, axis2=2).copy(),
            iterations=np.arange(k),
            sigma_draws=draws,
        )


def gamma_moments_by_quadrature(log_target, center: float, halfwidth: float, points: int):
    """Mean and variance of ``exp(log_target)`` over ``[center - hw, center + hw]``.

    ``log_target`` is vectorised in gamma. Raises ``QuadratureDegenerate``
    when the variance is not a finite positive number or the grid edges hold
    non-negligible mass.
    """
    grid = np.linspace(center - halfwidth, center + halfwidth, points)
    return _moments_on_grid(grid, np.asarray(log_target(grid), dtype=float))


def _trapezoid_weights(grid: np.ndarray) -> np.ndarray:
    h = np.diff(grid)
    w = np.zeros_like(grid)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return w


def _moments_on_grid(grid: np.ndarray, logt: np.ndarray, tw: np.ndarray | None = None
                     ) -> tuple[float, float]:
    top = np.max(logt)
    if not np.isfinite(top):
        raise QuadratureDegenerate("target is -inf on the whole grid")
    w = np.exp(logt - top)
    if w[0] > EDGE_WEIGHT_TOL or w[-1] > EDGE_WEIGHT_TOL:
        raise QuadratureDegenerate("quadrature window truncates the target")
    if tw is None:
        tw = _trapezoid_weights(grid)
    w = w * tw
    mass = w.sum()
    mean = (w @ grid) / mass
    var = (w @ (grid - mean) ** 2) / mass
    if not (np.isfinite(var) and var > 0):
        raise QuadratureDegenerate(f"non-positive quadrature variance {var!r}")
    return float(mean), float(var)


class BetaKernel:
    """Gamma-space beta conditional for one ``(spec, p)`` pair.

    The target is ``beta(g) * C + h(g)`` with
    ``h(g) = g - delta log beta(g) - log Gamma_p(beta(g)/2)`` and
    ``beta(g) = exp(g) + lower``. Only ``C`` depends on the chain state, so
    ``h`` is tabulated once per grid.
    """

    def __init__(self, spec: ModelSpec, p: int, quad_points: int = 512, quad_halfwidth: float = 12.0):
        spec.validate_dim(p)
        self.spec = spec
        self.p = p
        self.lower, self.upper = beta_support(spec, p)
        self.gamma_max = math.log(self.upper - self.lower) if math.isfinite(self.upper) else math.inf
        self.quad_points = quad_points
        self.quad_halfwidth = quad_halfwidth
        self._offsets = (1.0 - np.arange(1, p + 1)) / 2.0
        self._offsets_list = self._offsets.tolist()
        self._const = p * (p - 1) / 4.0 * math.log(math.pi)
        self._prescan = np.linspace(*PRESCAN_RANGE, PRESCAN_POINTS)
        self._prescan_beta, self._prescan_h = self._tabulate(self._prescan)
        self._fine: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = {}

    def beta_of(self, g):
        return np.exp(g) + self.lower

    def gamma_of(self, beta):
        return np.log(beta - self.lower)

    def _tabulate(self, grid: np.ndarray):
        beta = self.beta_of(grid)
        h = np.full(grid.shape, -np.inf)
        ok = (grid <= self.gamma_max) & (beta > self.lower)
        b = beta[ok]
        h[ok] = (grid[ok] - self.spec.beta_exponent * np.log(b)
                 - np.sum(gammaln(0.5 * b[:, None] + self._offsets), axis=1) - self._const)
        return beta, h

    def log_target(self, g, c: float):
        """Gamma-space log target, Jacobian included; vectorised in ``g``."""
        g_arr = np.atleast_1d(np.asarray(g, dtype=float))
        beta, h = self._tabulate(g_arr)
        out = beta * c + h
        return float(out[0]) if np.ndim(g) == 0 else out

    def log_target_scalar(self, g: float, c: float) -> float:
        if g > self.gamma_max:
            return -math.inf
        beta = math.exp(g) + self.lower
        if not beta > self.lower:
            return -math.inf
        half = 0.5 * beta
        lg = sum(math.lgamma(half + o) for o in self._offsets_list)
        return beta * c + g - self.spec.beta_exponent * math.log(beta) - lg - self._const

    def moments(self, c: float) -> tuple[float, float]:
        pre = self._prescan_beta * c + self._prescan_h
        k = int(np.argmax(pre))
        fine = self._fine.get(k)
        if fine is None:
            center = self._prescan[k]
            grid = np.linspace(center - self.quad_halfwidth, center + self.quad_halfwidth, self.quad_points)
            fine = (grid, *self._tabulate(grid), _trapezoid_weights(grid))
            self._fine[k] = fine
        grid, beta, h, tw = fine
        return _moments_on_grid(grid, beta * c + h, tw)

    def variance(self, c: float) -> float:
        return self.moments(c)[1]


def _c_from_state(spec: ModelSpec, state: ChainState) -> float:
    p = state.sigma.shape[0]
    _, ld = np.linalg.slogdet(state.sigma_inv)
    d = state.hyper.scale_diag.diag
    return beta_c_term(ld, float(np.sum(np.log(d))), p)


def estimate_gamma_variance(spec: ModelSpec, state: ChainState, n: int, config: SamplerConfig,
                            kernel: BetaKernel | None = None) -> float:
    """Variance of ``gamma = log(beta - lower)`` under the beta full conditional."""
    p = state.sigma.shape[0]
    kernel = kernel or BetaKernel(spec, p, config.quad_points, config.quad_halfwidth)
    return kernel.variance(_c_from_state(spec, state))


def _safe_variance(kernel: BetaKernel, c: float, warnings: list[str] | None = None) -> float:
    try:
        return kernel.variance(c)
    except QuadratureDegenerate as exc:
        msg = f"quadrature degenerate ({exc}); proposal variance falls back to 1"
        log.warning(msg)
        if warnings is not None:
            warnings.append(msg)
        return 1.0


def _beta_step(kernel: BetaKernel, beta: float, c: float, var: float, gen: np.random.Generator):
    g = math.log(beta - kernel.lower)
    g_new = g + math.sqrt(2.0 * var) * gen.standard_normal()
    log_u = math.log(gen.random())
    if g_new > kernel.gamma_max:
        return beta, False
    if log_u < kernel.log_target_scalar(g_new, c) - kernel.log_target_scalar(g, c):
        return math.exp(g_new) + kernel.lower, True
    return beta, False


def metropolis_beta_step(spec: ModelSpec, state: ChainState, n: int, config: SamplerConfig,
                         rng: RngStream, kernel: BetaKernel | None = None) -> tuple[float, bool]:
    """One random-walk Metropolis update of ``beta`` at fixed ``(Sigma, scale)``."""
    p = state.sigma.shape[0]
    kernel = kernel or BetaKernel(spec, p, config.quad_points, config.quad_halfwidth)
    c = _c_from_state(spec, state)
    var = _safe_variance(kernel, c)
    return _beta_step(kernel, state.hyper.beta, c, var, rng.gen)


def initial_state(spec: ModelSpec, s, n: int) -> tuple[np.ndarray, np.ndarray, float]:
    """``Sigma0 = S/n + 0.1 I``, scale from its diagonal, ``beta0 = p + 3``."""
    s = np.asarray(s, dtype=float)
    p = s.shape[0]
    sigma0 = s / n + 0.1 * np.eye(p)
    d = np.diag(sigma0).copy()
    if spec.variant is Variant.MODEL1:
        d = np.full(p, d.mean())
    return sigma0, d, float(p + 3)


def run_chain(spec: ModelSpec, s, n: int, config: SamplerConfig, rng: RngStream | None = None, *,
              init_beta: float | None = None, init_scale=None) -> ChainTrace:
    """Run one Metropolis-within-Gibbs chain and summarise the post-burn-in draws.

    ``config.freeze_beta`` / ``config.freeze_scale`` hold the corresponding
    block at its initial value, which turns the sampler into a plain
    conjugate inverse-Wishart sampler when both are set.
    """
    s = np.asarray(s, dtype=float)
    s = 0.5 * (s + s.T)
    p = s.shape[0]
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = rng or RngStream(config.seed)
    gen = rng.gen
    variant = spec.variant
    kernel = None if config.freeze_beta else BetaKernel(spec, p, config.quad_points, config.quad_halfwidth)

    # Sigma0 only seeds the scale: Sigma is the first block drawn
    _, scale, beta = initial_state(spec, s, n)
    if init_scale is not None:
        scale = np.broadcast_to(np.asarray(init_scale, dtype=float), (p,)).copy()
    if init_beta is not None:
        beta = float(init_beta)
    lower, upper = beta_support(spec, p)
    if not lower < beta <= upper:
        raise ValueError(f"initial beta={beta} outside support ({lower}, {upper}]")

    kept = config.iterations - config.burn_in
    sum_sigma = np.zeros((p, p))
    sum_inv = np.zeros((p, p))
    betas = np.empty(kept)
    accepts = np.zeros(kept, dtype=bool)
    diags = np.empty((kept, p))
    draws = np.empty((kept, p, p)) if config.retain_sigma else None
    warnings: list[str] = []
    tril = np.tril_indices(p, -1)
    diag_idx = np.diag_indices(p)
    dof_offsets = np.arange(p)
    var = 1.0
    log_p2 = p * math.log(2.0)

    for it in range(config.iterations):
        # Sigma | scale, beta ~ IW(beta + n, S + diag(scale))
        post_scale = s.copy()
        post_scale[diag_idx] += scale
        try:
            L = np.linalg.cholesky(post_scale)
        except np.linalg.LinAlgError:
            raise NotPositiveDefinite(f"S + scale is not positive definite at iteration {it}") from None
        df = beta + n
        a = np.zeros((p, p))
        a[tril] = gen.standard_normal(tril[0].size)
        a[diag_idx] = np.sqrt(2.0 * standard_gamma_array(rng, 0.5 * (df - dof_offsets)))
        l_inv = np.linalg.inv(L)
        g_fac = l_inv.T @ a
        sigma_inv = g_fac @ g_fac.T
        f_fac = L @ np.linalg.inv(a).T
        sigma = f_fac @ f_fac.T
        ld_sigma_inv = 2.0 * (np.sum(np.log(a[diag_idx])) - np.sum(np.log(L[diag_idx])))

        if not config.freeze_scale:
            if variant is Variant.MODEL1:
                scale[:] = standard_gamma_array(rng, [0.5 * p * beta])[0] / (0.5 * np.trace(sigma_inv))
            else:
                scale = standard_gamma_array(rng, np.full(p, 0.5 * beta)) / (0.5 * np.diag(sigma_inv))

        accepted = False
        if not config.freeze_beta:
            c = 0.5 * (ld_sigma_inv + np.sum(np.log(scale)) - log_p2)
            if it % config.variance_every == 0:
                var = _safe_variance(kernel, c, warnings)
            beta, accepted = _beta_step(kernel, beta, c, var, gen)
            if beta > BETA_DIVERGENCE:
                raise ChainDiverged(f"beta={beta:.3g} exceeded {BETA_DIVERGENCE:g} at iteration {it}")

        k = it - config.burn_in
        if k >= 0:
            sum_sigma += sigma
            sum_inv += sigma_inv
            betas[k] = beta
            accepts[k] = accepted
            diags[k] = np.diag(sigma)
            if draws is not None:
                draws[k] = sigma

    sigma_mean = sum_sigma / kept
    sigma_inv_mean = sum_inv / kept
    return ChainTrace(
        sigma_mean=0.5 * (sigma_mean + sigma_mean.T),
        sigma_inv_mean=0.5 * (sigma_inv_mean + sigma_inv_mean.T),
        beta_draws=betas,
        accept_flags=accepts,
        sigma_diag=diags,
        iterations=np.arange(config.burn_in, config.iterations),
        sigma_draws=draws,
        warnings=warnings,
    )


def write_trace_csv(path: str | PathLike, trace: ChainTrace) -> None:
    """One retained iteration per line: ``iter,beta,accept,sigma_diag_1..p``."""
    p = trace.sigma_diag.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "beta", "accept"] + [f"sigma_diag_{i + 1}" for i in range(p)])
        for i in range(trace.n_retained):
            w.writerow([int(trace.iterations[i]), repr(float(trace.beta_draws[i])),
                        int(trace.accept_flags[i])] + [repr(float(x)) for x in trace.sigma_diag[i]])
