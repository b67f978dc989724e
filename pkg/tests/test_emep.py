import math

import numpy as np
import pytest

from bfcla.emep import (DEFAULT_DELTA, INTERVAL_RATIO, context_from_spectrum, g_eval, mu_hat,
                        newton_schedule_length, prepare_context, secular_value_and_derivative,
                        solve_emep)
from bfcla.solvers import compute_bounds
from bfcla.stats_core import X, Y, mahalanobis

from conftest import direct_summary, random_summary


def direct_secular(summary, lam, v1, orientation=X):
    """``M_center(mu_hat(lam)) - v1`` through the explicit linear-solve route."""
    return mahalanobis(summary, orientation, mu_hat(summary, orientation, lam)) - v1


def bisect_root(fn, lo, hi, rel=1e-12, abs_tol=1e-14):
    flo = fn(lo)
    while hi - lo > max(abs_tol, rel * hi):
        mid = 0.5 * (lo + hi)
        fm = fn(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_equal_means_give_zero_s():
    s = direct_summary(5, 5, [1.0, 2.0], [1.0, 2.0], np.eye(2), 2 * np.eye(2))
    ctx = prepare_context(s)
    np.testing.assert_array_equal(ctx.s, 0.0)


def test_scalar_context():
    s = direct_summary(5, 5, [0.0], [1.0], [[1.0]], [[1.0]])
    ctx = prepare_context(s)
    np.testing.assert_allclose(ctx.values, [1.0])
    # The factor 2 of the linear term cancels against the multiplier's 2, so
    # the secular vector is S1^{1/2} S2^{-1} (ybar - xbar) rotated.
    np.testing.assert_allclose(np.abs(ctx.s), [1.0])


def test_context_secular_matches_direct(rng):
    s = random_summary(rng, 3, 12)
    ctx = prepare_context(s)
    for lam in (0.0, 0.3, 2.5, 40.0):
        for v1 in (0.0, 0.7):
            m, _ = secular_value_and_derivative(ctx, lam, v1)
            assert abs(m - direct_secular(s, lam, v1)) <= 1e-8 * max(1.0, abs(m))


def test_secular_zero_vector():
    ctx = context_from_spectrum([1.0, 2.0], [0.0, 0.0])
    assert secular_value_and_derivative(ctx, 0.7, 1.5) == (-1.5, 0.0)


def test_secular_scalar_closed_form():
    ctx = context_from_spectrum([1.0], [2.0])
    m, dm = secular_value_and_derivative(ctx, 1.0, 1.0)
    assert m == 0.0 and dm == -1.0


def test_secular_derivative_finite_difference(rng):
    ctx = context_from_spectrum(np.sort(rng.uniform(0.2, 3.0, 5)), rng.normal(size=5))
    for lam in (0.1, 1.0, 5.0):
        h = 1e-6
        fd = (secular_value_and_derivative(ctx, lam + h, 0.3)[0]
              - secular_value_and_derivative(ctx, lam - h, 0.3)[0]) / (2 * h)
        dm = secular_value_and_derivative(ctx, lam, 0.3)[1]
        assert dm < 0
        assert abs(fd - dm) <= 1e-5 * abs(dm)


def test_mu_hat_endpoints(rng):
    s = random_summary(rng, 3, 10)
    np.testing.assert_array_equal(mu_hat(s, X, 0.0), s.ybar)
    np.testing.assert_allclose(mu_hat(s, X, 1e12), s.xbar, atol=1e-8)
    np.testing.assert_array_equal(mu_hat(s, Y, 0.0), s.xbar)


def test_mu_hat_symmetric_scalar():
    s = direct_summary(6, 6, [1.0], [3.0], [[2.0]], [[2.0]])
    assert mu_hat(s, X, 1.0)[0] == pytest.approx(2.0, abs=1e-14)


def test_mu_hat_kkt(rng):
    s = random_summary(rng, 3, 10)
    lam = 2.5
    mu = mu_hat(s, X, lam)
    r = np.linalg.solve(s.s2, s.ybar - mu) + lam * np.linalg.solve(s.s1, s.xbar - mu)
    assert np.abs(r).max() <= 1e-9


def test_inactive_level(rng):
    s = random_summary(rng, 3, 10)
    ctx = prepare_context(s)
    level = mahalanobis(s, X, s.ybar)
    for v1 in (level, 2 * level):
        sol = solve_emep(ctx, v1)
        assert not sol.active and sol.lambda_star == 0.0 and sol.h_value == 0.0
        np.testing.assert_array_equal(sol.mu_hat, s.ybar)


def test_zero_level_clamps(rng):
    s = random_summary(rng, 2, 10)
    ctx = prepare_context(s)
    sol = solve_emep(ctx, 0.0)
    np.testing.assert_array_equal(sol.mu_hat, s.xbar)
    assert sol.h_value == pytest.approx(mahalanobis(s, Y, s.xbar), rel=1e-14)
    assert math.isfinite(sol.subgradient) and sol.subgradient < 0
    assert sol.lambda_star == pytest.approx(np.linalg.norm(ctx.s) / math.sqrt(ctx.delta))


def test_scalar_root_is_exact():
    sol = solve_emep(context_from_spectrum([1.0], [2.0]), 1.0)
    assert sol.lambda_star == pytest.approx(1.0, abs=1e-12)
    assert sol.subgradient == -sol.lambda_star


def test_negative_level_rejected():
    with pytest.raises(ValueError):
        solve_emep(context_from_spectrum([1.0], [2.0]), -1.0)


def test_root_matches_bisection_oracle(rng):
    s = random_summary(rng, 4, 15)
    ctx = prepare_context(s)
    v1 = 0.5 * mahalanobis(s, X, s.ybar)
    sol = solve_emep(ctx, v1)
    oracle = bisect_root(lambda lam: direct_secular(s, lam, v1), 0.0, 1e6)
    assert abs(sol.lambda_star - oracle) <= DEFAULT_DELTA * max(1.0, oracle)
    assert abs(secular_value_and_derivative(ctx, sol.lambda_star, v1)[0]) <= 1e-10 * (1 + v1)


def test_schedule_length():
    assert newton_schedule_length(1e-10, 1e-10) == 1.0
    assert newton_schedule_length(2 ** 8 * 1e-10, 1e-10) == pytest.approx(1 + math.log2(9))
    assert INTERVAL_RATIO == pytest.approx(13 / 12)


def test_newton_contraction_and_schedule(rng):
    for k in range(40):
        s = random_summary(rng, 1 + k % 6, 20)
        ctx = prepare_context(s)
        top = mahalanobis(s, X, s.ybar)
        for frac in (0.05, 0.3, 0.8):
            sol = solve_emep(ctx, frac * top)
            tr = sol.newton_trace
            norm_s = np.linalg.norm(ctx.s)
            b = norm_s / math.sqrt(frac * top) - ctx.values[0]
            if b > ctx.delta:
                assert sol.schedule_steps <= math.floor(newton_schedule_length(b, ctx.delta)) + 1
            if len(tr) < 2:
                continue
            first = abs(tr[1] - tr[0])
            for j in range(1, len(tr) - 1):
                bound = 0.5 ** (2 ** (j - 1) - 1) * first
                assert abs(tr[j + 1] - tr[j]) <= bound + 1e-12 * max(1.0, tr[j])


def test_jacobi_context_agrees(rng):
    s = random_summary(rng, 5, 20)
    v1 = 0.4 * mahalanobis(s, X, s.ybar)
    a = solve_emep(prepare_context(s), v1)
    b = solve_emep(prepare_context(s, method="jacobi"), v1)
    assert abs(a.lambda_star - b.lambda_star) <= 1e-9 * max(1.0, a.lambda_star)


def test_y_orientation_mirrors_x(rng):
    s = random_summary(rng, 3, 10)
    v1 = 0.3 * mahalanobis(s, Y, s.xbar)
    a = solve_emep(prepare_context(s, Y), v1)
    b = solve_emep(prepare_context(s.swapped(), X), v1)
    assert a.lambda_star == pytest.approx(b.lambda_star, rel=1e-9)
    np.testing.assert_allclose(a.mu_hat, b.mu_hat, rtol=1e-9, atol=1e-12)


def test_g_right_end_and_left_end(rng):
    s = random_summary(rng, 3, 10)
    ctx = prepare_context(s)
    bounds = compute_bounds(s)
    u2, slope, _ = g_eval(ctx, bounds.u1_bar)
    assert u2 == 1.0 and slope == 0.0
    u2, _, _ = g_eval(ctx, 1.0)
    assert u2 == pytest.approx(bounds.u2_bar, rel=1e-12)
    with pytest.raises(ValueError):
        g_eval(ctx, 0.5)


def test_g_flat_when_means_coincide():
    s = direct_summary(5, 5, [1.0, 0.0], [1.0, 0.0], np.eye(2), 3 * np.eye(2))
    ctx = prepare_context(s)
    for u in (1.0, 1.5, 10.0):
        assert g_eval(ctx, u)[0] == 1.0


def _grid_g(ctx, lo, hi, n):
    us = np.linspace(lo, hi, n)
    return us, np.array([g_eval(ctx, u)[0] for u in us])


def test_subgradient_inequality_midway(rng):
    s = random_summary(rng, 2, 10)
    ctx = prepare_context(s)
    top = compute_bounds(s).u1_bar
    u1 = 1.0 + 0.5 * (top - 1.0)
    g1, slope, _ = g_eval(ctx, u1)
    us, gs = _grid_g(ctx, 1.0, top, 50)
    assert np.all(gs >= g1 + slope * (us - u1) - 1e-9 * np.maximum(1.0, gs))


def test_g_nonincreasing_convex_and_cuts_minorize(rng):
    for k in range(5):
        s = random_summary(rng, 1 + k, 12)
        ctx = prepare_context(s)
        top = compute_bounds(s).u1_bar
        us, gs = _grid_g(ctx, 1.0, top, 100)
        slopes = np.diff(gs) / np.diff(us)
        assert np.all(slopes <= 1e-8)
        assert np.all(np.diff(slopes) >= -1e-8 * max(1.0, np.abs(slopes).max()))
        for u in us[::10]:
            g1, sl, _ = g_eval(ctx, u)
            assert np.all(gs >= g1 + sl * (us - u) - 1e-8)


def test_kkt_residual_when_active(rng):
    for k in range(20):
        s = random_summary(rng, 1 + k % 5, 15)
        ctx = prepare_context(s)
        v1 = 0.25 * mahalanobis(s, X, s.ybar)
        sol = solve_emep(ctx, v1)
        assert sol.active
        r = (np.linalg.solve(s.s2, s.ybar - sol.mu_hat)
             + sol.lambda_star * np.linalg.solve(s.s1, s.xbar - sol.mu_hat))
        assert np.abs(r).max() <= 1e-7 * (1 + np.abs(s.ybar - s.xbar).max())
