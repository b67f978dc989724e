import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from bfcla.mltests import (BARTLETT_FORMS, STATISTICS, bartlett_c1, bartlett_psi,
                           bartlett_statistic, lm_statistic, lr0_statistic, lr_from_mu,
                           lr_statistic, run_tests, wald_statistic)
from bfcla.solvers import run_cla
from bfcla.stats_core import X, Y, mahalanobis, summarize, wald_mean_mu0

from conftest import direct_summary, random_instance, random_summary

EPS = 1e-9


def lm_outer_product(x, y, mu):
    """``e'G (G'G)^{-1} G'e`` from per-observation mean scores at the restricted fit."""
    n1, d = x.shape
    n2 = y.shape[0]
    rx, ry = x - mu, y - mu
    p1 = np.linalg.inv(rx.T @ rx / n1)
    p2 = np.linalg.inv(ry.T @ ry / n2)
    g = np.zeros((n1 + n2, 2 * d))
    g[:n1, :d] = rx @ p1
    g[n1:, d:] = ry @ p2
    ge = g.sum(axis=0)
    return float(ge @ np.linalg.solve(g.T @ g, ge))


def loglik(sample, mean, cov):
    return float(np.sum(stats.multivariate_normal(mean, cov).logpdf(sample)))


def psi_oracle(summary):
    """Both trace terms through explicit products and inverses."""
    s = summary
    n1, n2 = s.n1, s.n2
    n = n1 + n2
    sbar_inv = np.linalg.inv((n2 / n) * s.s1 + (n1 / n) * s.s2)
    psi1 = psi2 = 0.0
    for si, ni, nj in ((s.s1, n1, n2), (s.s2, n2, n1)):
        k = nj ** 2 * (n - 2) / (n ** 2 * (ni - 1))
        m = si @ sbar_inv
        psi1 += k * sum(m[i, i] for i in range(s.d)) ** 2
        psi2 += k * sum((m @ m)[i, i] for i in range(s.d))
    return psi1, psi2


# Wald

def test_wald_equal_means():
    v = [0.3, -0.2]
    assert wald_statistic(direct_summary(5, 6, v, v, np.eye(2), 2 * np.eye(2))) == 0.0


def test_wald_scalar_fifty():
    s = direct_summary(100, 100, [1.0], [0.0], [[1.0]], [[1.0]])
    assert wald_statistic(s) == pytest.approx(50.0, rel=1e-14)


def test_wald_is_minimum_of_weighted_distances(rng):
    s = random_summary(rng, 3, 15)
    mu0 = wald_mean_mu0(s)

    def q(mu):
        return s.n1 * mahalanobis(s, X, mu) + s.n2 * mahalanobis(s, Y, mu)

    w = wald_statistic(s)
    assert abs(q(mu0) - w) <= 1e-8 * w
    for _ in range(50):
        assert q(mu0 + 0.1 * rng.normal(size=3)) >= w


# LR

def test_lr_equal_means():
    v = np.array([1.0, 2.0])
    s = direct_summary(5, 5, v, v, np.eye(2), 3 * np.eye(2))
    assert lr_statistic(s, run_cla(s, EPS)) == 0.0
    assert lr0_statistic(s) == 0.0


def test_lr_scalar_grid_oracle():
    from test_solvers import SCALAR, scalar_grid_min

    s = direct_summary(**SCALAR)
    eps = 1e-8
    assert abs(lr_statistic(s, run_cla(s, eps)) - 2 * scalar_grid_min()) <= 2 * eps + 1e-8


def test_lr_matches_direct_likelihood(rng):
    x, y = random_instance(rng, 2, 12)
    s = summarize(x, y)
    sol = run_cla(s, 1e-10)
    mu = sol.mu_hat
    full = loglik(x, s.xbar, s.s1) + loglik(y, s.ybar, s.s2)
    rx, ry = s.xbar - mu, s.ybar - mu
    restricted = (loglik(x, mu, s.s1 + np.outer(rx, rx))
                  + loglik(y, mu, s.s2 + np.outer(ry, ry)))
    assert abs(-2 * (restricted - full) - lr_statistic(s, sol)) <= 1e-7


def test_lr0_equals_lr_for_symmetric_scalar():
    s = direct_summary(8, 8, [0.0], [2.0], [[1.5]], [[1.5]])
    sol = run_cla(s, 1e-12)
    assert sol.mu_hat[0] == pytest.approx(wald_mean_mu0(s)[0], abs=1e-5)
    assert abs(lr0_statistic(s) - lr_statistic(s, sol)) <= 2e-12 + 1e-12


# LM

def test_lm_zero_at_common_mean():
    v = np.array([0.5])
    s = direct_summary(7, 9, v, v, [[1.0]], [[2.0]])
    assert lm_statistic(s, v) == 0.0


def test_lm_plug_in_ten():
    s = direct_summary(10, 10, [1.0], [-1.0], [[1.0]], [[1.0]])
    assert mahalanobis(s, X, [0.0]) == 1.0 and mahalanobis(s, Y, [0.0]) == 1.0
    assert lm_statistic(s, np.array([0.0])) == pytest.approx(10.0, abs=1e-14)


def test_lm_matches_outer_product_definition(rng):
    for d in (1, 2, 3):
        x, y = random_instance(rng, d, 12)
        s = summarize(x, y)
        mu = run_cla(s, 1e-10).mu_hat
        want = lm_outer_product(x, y, mu)
        assert abs(lm_statistic(s, mu) - want) <= 1e-6 * want


# Bartlett

def test_bartlett_identity_difference_form():
    n = 10
    s = direct_summary(n, n, [0.0, 0.0], [1.0, 0.0], np.eye(2), np.eye(2))
    psi1, psi2 = bartlett_psi(s)
    k = n ** 2 * (2 * n - 2) / (4 * n ** 2 * (n - 1))
    assert k == 0.5
    assert psi1 == pytest.approx(4.0, rel=1e-14) and psi2 == pytest.approx(2.0, rel=1e-14)
    assert bartlett_c1(s, "difference") == pytest.approx(1.0, rel=1e-14)
    b, c1 = bartlett_statistic(s, 3.0, form="difference")
    assert b == pytest.approx((1 - 1 / 18) * 3.0, rel=1e-14)


def test_bartlett_identity_sum_form():
    for d in (1, 2, 4):
        s = direct_summary(10, 10, np.zeros(d), np.ones(d), np.eye(d), np.eye(d))
        assert bartlett_c1(s) == pytest.approx(d + 1.0, rel=1e-13)
        assert bartlett_c1(s, "difference") == pytest.approx(d - 1.0, abs=1e-13)


def test_bartlett_zero_lr(rng):
    s = random_summary(rng, 3, 10)
    for form in BARTLETT_FORMS:
        assert bartlett_statistic(s, 0.0, form)[0] == 0.0


def test_bartlett_unknown_form(rng):
    with pytest.raises(ValueError):
        bartlett_c1(random_summary(rng, 2, 10), "product")


def test_bartlett_psi_trace_oracle(rng):
    s = random_summary(rng, 3, 11, 17)
    got = bartlett_psi(s)
    want = psi_oracle(s)
    for a, b in zip(got, want):
        assert abs(a - b) <= 1e-10 * max(1.0, abs(b))


# run_tests

def test_report_equal_means():
    v = np.array([0.0, 1.0])
    s = direct_summary(6, 8, v, v, np.eye(2), np.diag([1.0, 4.0]))
    r = run_tests(s)
    for name in STATISTICS:
        assert r.statistic(name) == 0.0
        assert r.p_values[name] == 1.0
    assert not any(r.decisions.values())


def test_report_far_means_reject_everywhere():
    s = direct_summary(100, 100, [1.0], [0.0], [[1.0]], [[1.0]])
    r = run_tests(s)
    assert r.w == pytest.approx(50.0)
    assert r.p_values["W"] < 1e-10
    assert r.p_values["W"] == pytest.approx(math.erfc(math.sqrt(25.0)), rel=1e-8)
    assert all(r.decisions[("W", a)] for a in r.alphas)


def test_report_decisions_monotone(rng):
    for _ in range(30):
        r = run_tests(random_summary(rng, 3, 12, shift=rng.uniform(0, 4)))
        for name in STATISTICS:
            a01, a05, a10 = (r.decisions[(name, a)] for a in (0.01, 0.05, 0.10))
            assert a01 <= a05 <= a10


def test_report_rejects_bad_alpha(rng):
    with pytest.raises(ValueError):
        run_tests(random_summary(rng, 2, 10), alphas=(0.05, 1.0))


def test_report_serializes(rng):
    r = run_tests(random_summary(rng, 2, 10))
    doc = r.to_dict()
    assert set(doc["statistics"]) == set(STATISTICS)
    assert len(doc["decisions"]) == len(STATISTICS) * len(r.alphas)


# properties

def test_ordering_and_bounds(rng):
    eps = 1e-8
    for k in range(60):
        d = 1 + k % 8
        s = random_summary(rng, d, d + 3 + k % 7, shift=rng.uniform(0, 5))
        r = run_tests(s, eps)
        tol = 2 * eps + 1e-9
        assert r.w >= r.lr0 - 1e-9 * max(1.0, r.w)
        assert r.lr0 >= r.lr - tol
        assert r.lr >= r.lm - tol
        assert 0 <= r.lm <= s.n1 + s.n2
        assert min(r.w, r.lr0, r.lr, r.lm) >= 0


def test_exchange_symmetry(rng):
    for _ in range(10):
        s = random_summary(rng, 3, 10, 14)
        a = run_tests(s, 1e-11)
        b = run_tests(s.swapped(), 1e-11)
        assert abs(a.w - b.w) <= 1e-9 * max(1.0, a.w)
        assert abs(a.lr - b.lr) <= 1e-9 * max(1.0, a.lr) + 4e-11
        assert abs(a.lm - b.lm) <= 1e-6 * max(1.0, a.lm)


@settings(max_examples=40, deadline=None)
@given(d=st.integers(1, 4), seed=st.integers(0, 2 ** 32 - 1))
def test_affine_invariance(d, seed):
    gen = np.random.default_rng(seed)
    x, y = random_instance(gen, d, 3 * d + 5)
    a = gen.normal(size=(d, d)) + 3.0 * np.eye(d)
    shift = gen.normal(size=d)
    s = summarize(x, y)
    t = summarize(x @ a.T + shift, y @ a.T + shift)
    eps = 1e-11
    r, q = run_tests(s, eps), run_tests(t, eps)
    for name in STATISTICS:
        u, v = r.statistic(name), q.statistic(name)
        assert abs(u - v) <= 1e-6 * max(1.0, abs(u))


def test_lr_from_mu_matches_objective(rng):
    s = random_summary(rng, 3, 10)
    mu = rng.normal(size=3)
    want = s.n1 * math.log1p(mahalanobis(s, X, mu)) + s.n2 * math.log1p(mahalanobis(s, Y, mu))
    assert lr_from_mu(s, mu) == pytest.approx(want, rel=1e-14)
