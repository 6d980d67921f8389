import math

import numpy as np
import pytest
from conftest import random_spd
from scipy import stats
from scipy.integrate import trapezoid
from scipy.special import multigammaln

from hiwcov.matrix_core import DiagMatrix
from hiwcov.models import (
    ChainState,
    HyperState,
    ModelSpec,
    Variant,
    beta_log_conditional,
    beta_marginal_isotropic,
    beta_support,
    conditional_scale_dk,
    conditional_scale_model1,
    conditional_scale_model2,
    conditional_sigma,
    log_joint_posterior,
    log_multivariate_gamma,
)
from hiwcov.rand_dist import InvalidParameter

M1 = ModelSpec(Variant.MODEL1)
M2 = ModelSpec(Variant.MODEL2)
DK = ModelSpec(Variant.MODEL_DK)


def _state(sigma, beta, d):
    return ChainState(sigma, HyperState(beta, DiagMatrix(d)))


def test_conditional_sigma_examples():
    w = conditional_sigma(M1, HyperState(10.0, np.full(5, 2.0)), np.eye(5), 5)
    assert w.df == 15 and np.allclose(w.scale, 3 * np.eye(5))
    phi = np.arange(1.0, 6.0)
    w = conditional_sigma(M2, HyperState(8.0, phi), np.zeros((5, 5)), 3)
    assert np.allclose(w.scale, np.diag(phi))
    w = conditional_sigma(DK, HyperState(6.0, np.full(5, 2.0)), np.eye(5), 7)
    assert w.df == 13 and np.allclose(w.scale, 3 * np.eye(5))


def test_conditional_scale_examples():
    assert conditional_scale_model1(10.0, np.eye(5)) == (25.0, 2.5)
    assert conditional_scale_model1(4.0, np.diag([3.0, 5.0])) == (4.0, 4.0)
    for j in range(5):
        assert conditional_scale_model2(10.0, np.eye(5), j) == (5.0, 0.5)
    assert conditional_scale_dk(6.0, np.eye(5), 0)[0] == 3.0
    assert conditional_scale_dk(6.0, np.diag([4.0, 1.0]), 0)[1] == 2.0
    shape, _ = conditional_scale_dk(4.0 + 1e-9, np.eye(5), 0)
    assert shape > 2.0


def test_log_multivariate_gamma_examples():
    assert log_multivariate_gamma(1, 1.0) == pytest.approx(0.0, abs=1e-15)
    expected = 0.5 * math.log(math.pi) + math.log(0.5 * math.sqrt(math.pi))
    assert log_multivariate_gamma(2, 2.0) == pytest.approx(expected, rel=1e-13)
    with pytest.raises(InvalidParameter):
        log_multivariate_gamma(5, 2.0)


@pytest.mark.parametrize("p", [1, 2, 5, 9])
def test_log_multivariate_gamma_matches_scipy(p):
    for a in np.linspace((p - 1) / 2 + 0.01, 300.0, 40):
        assert log_multivariate_gamma(p, a) == pytest.approx(multigammaln(a, p), rel=1e-12, abs=1e-12)


def test_beta_log_conditional_example():
    value = beta_log_conditional(M1, np.eye(2), DiagMatrix([2.0, 2.0]), 3, 10.0)
    log_g2_5 = 0.5 * math.log(math.pi) + math.lgamma(5.0) + math.lgamma(4.5)
    assert value == pytest.approx(-2 * math.log(10.0) - log_g2_5, rel=1e-13)


def test_beta_log_conditional_support():
    assert beta_log_conditional(M1, np.eye(5), DiagMatrix(np.ones(5)), 5, 6.0) == -math.inf
    assert beta_log_conditional(M2, np.eye(5), DiagMatrix(np.ones(5)), 5, 5.5) == -math.inf
    assert beta_log_conditional(DK, np.eye(5), DiagMatrix(np.ones(5)), 5, 4.0) == -math.inf
    assert np.isfinite(beta_log_conditional(DK, np.eye(5), DiagMatrix(np.ones(5)), 5, 4.5))
    assert beta_log_conditional(DK, np.eye(5), DiagMatrix(np.ones(5)), 5, 2e6) == -math.inf
    assert beta_support(DK, 5) == (4.0, 1e6)


def test_model_spec_validation():
    with pytest.raises(InvalidParameter):
        ModelSpec(Variant.MODEL1, delta=1)
    ModelSpec(Variant.MODEL_DK, delta=1)
    with pytest.raises(InvalidParameter):
        ModelSpec(Variant.MODEL_DK, b=3.0).validate_dim(5)
    assert Variant.parse("D&K") is Variant.MODEL_DK


def test_joint_sigma_difference_model1(gen):
    p, n, beta, phi = 4, 7, 9.0, 1.3
    s = random_spd(gen, p) * n
    a, b = random_spd(gen, p), random_spd(gen, p)
    sa, sb = _state(a, beta, np.full(p, phi)), _state(b, beta, np.full(p, phi))
    diff = log_joint_posterior(M1, sa, s, n) - log_joint_posterior(M1, sb, s, n)
    ia, ib = np.linalg.inv(a), np.linalg.inv(b)
    t = s + phi * np.eye(p)
    expected = (0.5 * (beta + n + p + 1) * (np.linalg.slogdet(ia)[1] - np.linalg.slogdet(ib)[1])
                - 0.5 * (np.trace(ia @ t) - np.trace(ib @ t)))
    assert diff == pytest.approx(expected, abs=1e-10)


def test_joint_scaling_model1(gen):
    p, n, beta, phi = 5, 6, 8.0, 0.7
    s = random_spd(gen, p) * n
    sigma = random_spd(gen, p)
    base = log_joint_posterior(M1, _state(sigma, beta, np.full(p, phi)), s, n)
    for c in (0.1, 3.0, 40.0):
        scaled = log_joint_posterior(M1, _state(c * sigma, beta, np.full(p, c * phi)), c * s, n)
        expected = (-0.5 * p * (n + p + 1) - 1.0) * math.log(c)
        assert scaled - base == pytest.approx(expected, abs=1e-9)


def test_joint_out_of_support():
    assert log_joint_posterior(M1, _state(np.eye(5), 5.5, np.ones(5)), np.eye(5), 5) == -math.inf


def _deviation(a, b):
    d = np.asarray(a) - np.asarray(b)
    return float(np.max(np.abs(d - d[0])))


@pytest.mark.parametrize("spec", [M1, M2, DK], ids=["model1", "model2", "dk"])
def test_conditional_consistency(spec, gen):
    p, n = 4, 6
    s = random_spd(gen, p) * n
    sigma = random_spd(gen, p)
    beta = 8.5
    d = np.full(p, 0.9) if spec.variant is Variant.MODEL1 else gen.uniform(0.5, 2.0, p)
    sigma_inv = np.linalg.inv(sigma)

    # Sigma: inverse-Wishart kernel along a path of SPD matrices
    w = conditional_sigma(spec, HyperState(beta, d), s, n)
    other = random_spd(gen, p)
    path = [(1 - t) * sigma + t * other for t in np.linspace(0, 1, 50)]
    joint = [log_joint_posterior(spec, _state(m, beta, d), s, n) for m in path]
    cond = [stats.invwishart.logpdf(m, df=w.df, scale=np.asarray(w.scale)) for m in path]
    assert _deviation(joint, cond) < 1e-9

    # scale block
    if spec.variant is Variant.MODEL1:
        shape, rate = conditional_scale_model1(beta, sigma_inv)
        grid = np.linspace(0.05, 5.0, 50)
        joint = [log_joint_posterior(spec, _state(sigma, beta, np.full(p, g)), s, n) for g in grid]
        cond = stats.gamma(shape, scale=1 / rate).logpdf(grid)
        assert _deviation(joint, cond) < 1e-9
    else:
        cond_fn = conditional_scale_model2 if spec.variant is Variant.MODEL2 else conditional_scale_dk
        for j in range(p):
            shape, rate = cond_fn(beta, sigma_inv, j)
            grid = np.linspace(0.05, 5.0, 50)
            joint = []
            for g in grid:
                dj = d.copy()
                dj[j] = g
                joint.append(log_joint_posterior(spec, _state(sigma, beta, dj), s, n))
            cond = stats.gamma(shape, scale=1 / rate).logpdf(grid)
            assert _deviation(joint, cond) < 1e-9

    # beta
    grid = np.linspace(p + 1.5, 80.0, 50)
    joint = [log_joint_posterior(spec, _state(sigma, b, d), s, n) for b in grid]
    cond = beta_log_conditional(spec, sigma, DiagMatrix(d), n, grid)
    assert _deviation(joint, cond) < 1e-9


@pytest.mark.parametrize("variant", [Variant.MODEL1, Variant.MODEL2])
@pytest.mark.parametrize("delta", [2, 3])
def test_tail_slope(variant, delta):
    spec = ModelSpec(variant, delta=delta)
    betas = np.geomspace(1e3, 1e5, 40)
    logd = beta_marginal_isotropic(spec, 5, 5, betas)
    slope = np.polyfit(np.log(betas), logd, 1)[0]
    assert abs(slope + delta) < 0.1


def _truncated_mean(spec, upper, p=5, n=5):
    u = np.linspace(math.log(1e-6), math.log(upper - p - 1), 20000)
    beta = p + 1 + np.exp(u)
    logw = beta_marginal_isotropic(spec, p, n, beta) + u
    w = np.exp(logw - logw.max())
    return float(trapezoid(w * beta, u) / trapezoid(w, u))


def test_truncated_mean_diverges_for_delta2():
    means = [_truncated_mean(ModelSpec(Variant.MODEL1, delta=2), t) for t in (1e2, 1e3, 1e4)]
    assert means[0] < means[1] < means[2]
    assert means[2] - means[1] > 0.5 * (means[1] - means[0])
    settled = [_truncated_mean(ModelSpec(Variant.MODEL1, delta=4), t) for t in (1e2, 1e3, 1e4)]
    assert abs(settled[2] - settled[1]) < 0.01 * settled[2]


def test_model2_dk_differ_by_prior_exponent(gen):
    # Model 2 needs delta >= 2, so its extra -(delta-1) log beta is removed explicitly
    p, n, delta = 5, 5, 2
    m2 = ModelSpec(Variant.MODEL2, delta=delta)
    s = random_spd(gen, p) * n
    offsets = []
    for _ in range(20):
        st = _state(random_spd(gen, p), gen.uniform(p + 1.5, 100.0), gen.uniform(0.2, 3.0, p))
        diff = log_joint_posterior(m2, st, s, n) - log_joint_posterior(DK, st, s, n)
        offsets.append(diff - (1 - delta) * math.log(st.hyper.beta))
    assert np.ptp(offsets) < 1e-9
