"""Local methods for the restricted mean: ItUp, damped Newton, annealing.

All three start from the Wald mean and report the better of the start and
the best point found, so the resulting LR never exceeds ``LR0``.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .solvers import compute_bounds
from .stats_core import X, Y, bfp_objective, wald_mean_mu0


@dataclass
class HeuristicResult:
    mu: np.ndarray
    objective: float
    iterations: int
    method: str
    converged: bool = True


def _precisions(summary):
    eye = np.eye(summary.d)
    p1 = linalg.cho_solve((summary.chol1, True), eye, check_finite=False)
    p2 = linalg.cho_solve((summary.chol2, True), eye, check_finite=False)
    return 0.5 * (p1 + p1.T), 0.5 * (p2 + p2.T)


def _gradient_hessian(summary, p1, p2, mu):
    """Gradient and Hessian of ``(N1/2) ln(1+M_X) + (N2/2) ln(1+M_Y)``."""
    grad = np.zeros(summary.d)
    hess = np.zeros((summary.d, summary.d))
    for mean, prec, n in ((summary.xbar, p1, summary.n1), (summary.ybar, p2, summary.n2)):
        q = prec @ (mean - mu)
        t = 1.0 + float((mean - mu) @ q)
        grad -= n * q / t
        hess += n * prec / t - 2.0 * n * np.outer(q, q) / t ** 2
    return grad, 0.5 * (hess + hess.T)


def _best_of(summary, start, mu, iterations, method, converged):
    f_start = bfp_objective(summary, start)
    f_mu = bfp_objective(summary, mu)
    if f_mu <= f_start:
        return HeuristicResult(mu, f_mu, iterations, method, converged)
    return HeuristicResult(start, f_start, iterations, method, converged)


def iterative_update(summary, tol=1e-6, max_iter=500):
    """Fixed-point iteration on the first-order conditions.

    ``mu <- (N1 A1^-1 + N2 A2^-1)^-1 (N1 A1^-1 xbar + N2 A2^-1 ybar)`` with
    ``A_i = S_i + (mean_i - mu)(mean_i - mu)'``, from the Wald mean until the
    step is below ``tol`` in the sup norm.
    """
    p1, p2 = _precisions(summary)
    start = wald_mean_mu0(summary)
    mu = start
    for k in range(max_iter):
        weights = []
        for mean, prec, n in ((summary.xbar, p1, summary.n1), (summary.ybar, p2, summary.n2)):
            r = mean - mu
            q = prec @ r
            # Sherman-Morrison inverse of S + r r'.
            weights.append(n * (prec - np.outer(q, q) / (1.0 + r @ q)))
        a = weights[0] + weights[1]
        rhs = weights[1] @ (summary.ybar - summary.xbar)
        nxt = summary.xbar + linalg.solve(0.5 * (a + a.T), rhs, assume_a="pos")
        step = float(np.max(np.abs(nxt - mu)))
        mu = nxt
        if step <= tol:
            return _best_of(summary, start, mu, k, "itup", True)
    return _best_of(summary, start, mu, max_iter, "itup", False)


def newton_linesearch(summary, tol=1e-6, max_iter=100, c_armijo=1e-4):
    """Damped Newton with Armijo backtracking from the Wald mean.

    When the Hessian is not positive definite the step falls back to the
    negative gradient.
    """
    p1, p2 = _precisions(summary)
    start = wald_mean_mu0(summary)
    mu = start
    f = bfp_objective(summary, mu)
    for k in range(max_iter):
        grad, hess = _gradient_hessian(summary, p1, p2, mu)
        if float(np.max(np.abs(grad))) <= tol:
            return _best_of(summary, start, mu, k, "nm", True)
        try:
            c = linalg.cho_factor(hess, lower=True)
            direction = -linalg.cho_solve(c, grad)
        except linalg.LinAlgError:
            direction = -grad
        slope = float(grad @ direction)
        if slope >= 0.0:
            direction, slope = -grad, -float(grad @ grad)
        t = 1.0
        while True:
            cand = mu + t * direction
            f_cand = bfp_objective(summary, cand)
            if f_cand <= f + c_armijo * t * slope or t < 1e-12:
                break
            t *= 0.5
        if f_cand > f:
            return _best_of(summary, start, mu, k, "nm", False)
        mu, f = cand, f_cand
    grad, _ = _gradient_hessian(summary, p1, p2, mu)
    return _best_of(summary, start, mu, max_iter, "nm",
                    float(np.max(np.abs(grad))) <= tol)


def simulated_annealing(summary, rng, iters=1000, cooling=0.995):
    """Random-walk Metropolis on the objective with geometric cooling.

    Initial temperature is ``f(mu0)/10 + 1e-6``. Proposals are isotropic
    Gaussian steps whose scale is the mean separation scaled by the spread of
    the bounding triangle, ``0.1 * |xbar - ybar| * diag / (1 + diag)``.
    """
    start = wald_mean_mu0(summary)
    f_start = bfp_objective(summary, start)
    bounds = compute_bounds(summary)
    diag = math.hypot(bounds.u1_bar - 1.0, bounds.u2_bar - 1.0)
    scale = 0.1 * float(np.linalg.norm(summary.xbar - summary.ybar)) * diag / (1.0 + diag)
    mu, f = start, f_start
    best, f_best = start, f_start
    temp = f_start / 10.0 + 1e-6
    if scale == 0.0:
        return HeuristicResult(start, f_start, iters, "sa")
    for _ in range(iters):
        cand = mu + scale * rng.standard_normal(summary.d)
        f_cand = bfp_objective(summary, cand)
        if f_cand <= f or rng.uniform() < math.exp(-(f_cand - f) / temp):
            mu, f = cand, f_cand
            if f < f_best:
                best, f_best = mu, f
        temp *= cooling
    return HeuristicResult(best, f_best, iters, "sa")
