import math

import numpy as np
import pytest
from conftest import random_spd
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from hiwcov.estimators import (
    bayes_estimate_L1,
    bayes_estimate_L2,
    loss_eigen_rel,
    loss_frobenius,
    loss_stein,
    mle_estimate,
    shrunk_eigenvalues,
)
from hiwcov.gibbs import ChainTrace
from hiwcov.matrix_core import DimensionMismatch, NotPositiveDefinite
from hiwcov.rand_dist import InvalidParameter, RngStream, sample_mvn_zero, scatter_matrix

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def test_identical_draws():
    m = np.array([[2.0, 0.4], [0.4, 1.0]])
    trace = ChainTrace.from_draws([m, m, m])
    assert np.allclose(bayes_estimate_L2(trace), m)
    assert np.allclose(bayes_estimate_L1(trace), m)


def test_two_draw_trace():
    trace = ChainTrace.from_draws([np.diag([1.0, 3.0]), np.diag([3.0, 1.0])])
    assert np.allclose(bayes_estimate_L2(trace), np.diag([2.0, 2.0]))
    assert np.allclose(bayes_estimate_L1(trace), np.diag([1.5, 1.5]))


def test_l2_estimate_surfaces_bad_average():
    trace = ChainTrace.from_draws([np.eye(2)])
    trace.sigma_mean = np.diag([1.0, -1.0])
    with pytest.raises(NotPositiveDefinite):
        bayes_estimate_L2(trace)


def test_single_draw_l1_equals_l2(gen):
    m = random_spd(gen, 5)
    trace = ChainTrace.from_draws([m])
    assert np.allclose(bayes_estimate_L1(trace), bayes_estimate_L2(trace), atol=1e-12)


def test_mle_examples():
    assert np.allclose(mle_estimate(5 * np.eye(5), 5), np.eye(5))
    x = np.random.default_rng(1).standard_normal((3, 5))
    eig = np.linalg.eigvalsh(mle_estimate(scatter_matrix(x), 3))
    assert np.count_nonzero(np.abs(eig) < 1e-9) == 2


def test_mle_consistency():
    sigma = np.array([[1.0, 0.3, 0.0], [0.3, 2.0, -0.4], [0.0, -0.4, 0.5]])
    x = sample_mvn_zero(RngStream(2), sigma, 1_000_000)
    assert np.max(np.abs(mle_estimate(scatter_matrix(x), x.shape[0]) - sigma)) < 0.01


def test_frobenius_examples(gen):
    assert loss_frobenius(np.eye(3), np.eye(3)) == 0.0
    assert loss_frobenius(np.diag([2.0, 2.0]), np.eye(2)) == 2.0
    a, b = gen.standard_normal((4, 4)), gen.standard_normal((4, 4))
    oracle = sum((a[i, j] - b[i, j]) ** 2 for i in range(4) for j in range(4))
    assert loss_frobenius(a, b) == pytest.approx(oracle, abs=1e-12)
    with pytest.raises(DimensionMismatch):
        loss_frobenius(np.eye(2), np.eye(3))


def test_stein_examples():
    assert loss_stein(np.eye(3), np.eye(3)) == pytest.approx(0.0, abs=1e-15)
    assert loss_stein(2 * np.eye(2), np.eye(2)) == pytest.approx(4 - 2 * math.log(2) - 2, abs=1e-12)
    assert loss_stein(np.diag([1.0, 0.0]), np.eye(2)) == math.inf
    with pytest.raises(NotPositiveDefinite):
        loss_stein(np.eye(2), np.diag([1.0, -1.0]))


def test_eigen_rel_examples():
    assert loss_eigen_rel(2.0, 1.0) == 0.5
    assert loss_eigen_rel(3.0, 3.0) == 0.0
    small = 0.75 ** 20
    assert loss_eigen_rel(small, 0.1) == pytest.approx(30.5, abs=0.05)
    with pytest.raises(InvalidParameter):
        loss_eigen_rel(0.0, 1.0)


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_stein_nonnegative_and_congruence_invariant(seed):
    gen = np.random.default_rng(seed)
    est, truth = random_spd(gen, 5), random_spd(gen, 5)
    a = gen.standard_normal((5, 5))
    assume(abs(np.linalg.det(a)) > 1e-2)
    base = loss_stein(est, truth)
    assert base >= 0
    assert loss_stein(a @ est @ a.T, a @ truth @ a.T) == pytest.approx(base, abs=1e-9, rel=1e-9)


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_losses_symmetric_and_zero_iff_equal(seed):
    gen = np.random.default_rng(seed)
    a, b = random_spd(gen, 4), random_spd(gen, 4)
    assert loss_frobenius(a, b) == loss_frobenius(b, a)
    assert loss_frobenius(a, a) == 0.0
    assert abs(loss_stein(a, a)) < 1e-12
    assert loss_frobenius(a, b) > 1e-12
    assert loss_stein(a, b) > 1e-12


def test_shrinkage_limits():
    l = np.array([3.0, 1.0, 0.5, 0.2, 0.1])
    g = shrunk_eigenvalues(1e8, 0.7, 5, l)
    assert np.allclose(g, 0.7, rtol=1e-6)
    g = shrunk_eigenvalues(10.0, 0.7, 10**8, l)
    assert np.allclose(g, l, rtol=1e-6)
    with pytest.raises(InvalidParameter):
        shrunk_eigenvalues(6.0, 1.0, 5, l)


@settings(max_examples=100, deadline=None)
@given(st.floats(6.01, 1e4), st.floats(0.01, 10.0), st.integers(1, 1000), seeds)
def test_shrinkage_inequalities(beta, d, n, seed):
    l = np.random.default_rng(seed).uniform(0.01, 10.0, 5)
    g = shrunk_eigenvalues(beta, d, n, l)
    below = l < d
    assert np.all(l[below] < g[below])
    assert np.all(l[~below] >= g[~below])
    assert np.ptp(g) < np.ptp(l)


def test_shrinkage_matches_posterior_mean_when_commuting(gen):
    # D = d I commutes with S, so the posterior mean has eigenvalues g_i
    p, n, beta, d = 5, 8, 11.0, 0.6
    s = random_spd(gen, p) * n
    post_mean = ((beta - p - 1) * d * np.eye(p) + s) / (beta + n - p - 1)
    g = shrunk_eigenvalues(beta, d, n, np.linalg.eigvalsh(s / n))
    assert np.allclose(np.sort(g), np.linalg.eigvalsh(post_mean), atol=1e-12)
