"""Ellipsoidal Mean Estimation Problem.

For a constraint level ``v1`` the problem is::

    h(v1) = min_mu  M_target(mu)   subject to   M_center(mu) <= v1

where, for the default orientation, the constraint is on the X sample
("center" is X, "target" is Y). With ``w = S1^{-1/2} (mu - xbar)`` and the
spectral decomposition ``S1^{1/2} S2^{-1} S1^{1/2} = P D P'`` the optimal
multiplier is the root of the secular function::

    m(lambda) = sum_i s_i^2 / (D_i + lambda)^2 - v1,   s = P' S1^{1/2} S2^{-1} (ybar - xbar)

which is convex and decreasing, so Newton's method started left of the
root converges monotonically. The root is located by a binary search over
geometrically growing intervals (ratio 13/12) followed by a fixed Newton
schedule; ``-lambda*`` is a subgradient of ``h`` at ``v1``.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import BracketFailure
from .matrixkit import SpectralDecomposition, spectral_decomposition_spd, sqrtm_spd
from .stats_core import X, Y, mahalanobis

INTERVAL_RATIO = 1.0 + 1.0 / 12.0
DEFAULT_DELTA = 1e-10
MAX_POLISH_STEPS = 60


@dataclass(frozen=True)
class EmepContext:
    """Spectral data for one orientation, reusable across levels.

    ``values``/``s`` define the secular function; ``transform`` maps the
    rotated variable back, ``mu = center + transform @ z``.
    """

    values: np.ndarray
    s: np.ndarray
    transform: np.ndarray | None = None
    center: np.ndarray | None = None
    orientation: str = X
    summary: object = field(default=None, repr=False)
    delta: float = DEFAULT_DELTA

    @property
    def d(self):
        return self.values.shape[0]

    @property
    def m_at_zero(self):
        """``m(0) + v1``: the constraint value at the unconstrained target mean."""
        return float(np.sum((self.s / self.values) ** 2))


@dataclass
class EmepSolution:
    lambda_star: float
    mu_hat: np.ndarray
    h_value: float
    subgradient: float
    newton_steps: int
    active: bool
    newton_trace: list = field(default_factory=list)
    schedule_steps: int = 0


def prepare_context(summary, orientation=X, delta=DEFAULT_DELTA, method="lapack"):
    """Spectral reduction for the EMEP with the constraint on ``orientation``."""
    other = Y if orientation == X else X
    center, s_c, *_ = summary.side(orientation)
    target, _, chol_t, _ = summary.side(other)
    dec_c = spectral_decomposition_spd(s_c, method=method)
    root_c = sqrtm_spd(s_c, dec_c)
    half = linalg.cho_solve((chol_t, True), root_c, check_finite=False)  # S_t^{-1} S_c^{1/2}
    m = root_c @ half
    dec = spectral_decomposition_spd(0.5 * (m + m.T), method=method)
    c = half.T @ (target - center)
    return EmepContext(
        values=dec.values,
        s=dec.vectors.T @ c,
        transform=root_c @ dec.vectors,
        center=center,
        orientation=orientation,
        summary=summary,
        delta=delta,
    )


def context_from_spectrum(values, s, delta=DEFAULT_DELTA):
    """A bare context (no sample attached) for exercising the root finder."""
    return EmepContext(values=np.asarray(values, dtype=float),
                       s=np.asarray(s, dtype=float), delta=delta)


def secular_value_and_derivative(ctx, lam, v1):
    """``(m(lambda), m'(lambda))`` in O(d)."""
    inv = 1.0 / (ctx.values + lam)
    q = ctx.s * inv
    return float(q @ q) - v1, -2.0 * float((q * inv) @ q)


def mu_hat(summary, orientation, lam):
    """Stationary point of ``M_target + lam * M_center`` (direct linear solve)."""
    other = Y if orientation == X else X
    center, _, chol_c, _ = summary.side(orientation)
    target, _, chol_t, _ = summary.side(other)
    d = summary.d
    p_c = linalg.cho_solve((chol_c, True), np.eye(d), check_finite=False)
    p_t = linalg.cho_solve((chol_t, True), np.eye(d), check_finite=False)
    a = p_t + lam * p_c
    # Expressed as an offset from the target mean so lam == 0 is exact.
    return target + linalg.solve(0.5 * (a + a.T), lam * (p_c @ (center - target)), assume_a="pos")


def _mu_from_context(ctx, lam):
    return ctx.center + ctx.transform @ (ctx.s / (ctx.values + lam))


def newton_schedule_length(b, delta):
    """Newton step budget ``1 + log2(1 + max(0, log2(b/delta)))`` from the left endpoint."""
    return 1.0 + math.log2(1.0 + max(0.0, math.log2(b / delta)))


def _newton(ctx, v1, lam, lo, hi, schedule, tol_m):
    """Safeguarded Newton from ``lam`` (left of the root) inside ``[lo, hi]``.

    Runs the full ``schedule`` and then keeps polishing until ``|m| <= tol_m``.
    Returns ``(lambda, steps, trace, schedule_steps)``.
    """
    trace = [lam]
    steps = 0
    schedule_steps = 0
    while steps < MAX_POLISH_STEPS:
        m, dm = secular_value_and_derivative(ctx, lam, v1)
        in_schedule = steps <= schedule
        if (not in_schedule and abs(m) <= tol_m) or m == 0.0 or dm == 0.0:
            break
        if m > 0.0:
            lo = max(lo, lam)
        else:
            hi = min(hi, lam)
        nxt = lam - m / dm
        if not lo <= nxt <= hi:
            # Floating-point edge case: fall back to bisection on the bracket.
            nxt = 0.5 * (lo + hi)
        steps += 1
        if in_schedule:
            schedule_steps = steps
        if nxt == lam:
            break
        lam = nxt
        trace.append(lam)
    return lam, steps, trace, schedule_steps


def find_root(ctx, v1):
    """Root of the secular function for an active constraint (``m(0) > 0``, ``v1 > 0``).

    Returns ``(lambda, newton_steps, trace, schedule_steps)``.
    """
    delta = ctx.delta
    tol_m = 1e-10 * (1.0 + v1)
    norm_s = float(np.linalg.norm(ctx.s))
    root_v = math.sqrt(v1)
    # sum s^2/(Dmax+l)^2 <= m + v1 <= sum s^2/(Dmin+l)^2 brackets the root.
    b = norm_s / root_v - float(ctx.values[0])
    lo0 = max(0.0, norm_s / root_v - float(ctx.values[-1]))
    hi0 = max(b, lo0) * (1.0 + 1e-12) + 1e-300
    if secular_value_and_derivative(ctx, hi0, v1)[0] > tol_m:
        raise BracketFailure(f"m(b) > 0 with b = {hi0:.6g} at level {v1:.6g}")
    if hi0 - lo0 <= delta or b <= delta:
        # Bracket already narrower than the tolerance (e.g. d == 1).
        return _newton(ctx, v1, lo0, lo0, hi0, 0, tol_m)

    a = max(delta, lo0)
    schedule = newton_schedule_length(b, delta)
    if secular_value_and_derivative(ctx, a, v1)[0] < 0.0:
        # Only possible when a == delta overshoots: the root is in [lo0, delta).
        return _newton(ctx, v1, lo0, lo0, a, schedule, tol_m)

    # Binary search for the last partition point a*r^i with m >= 0.
    n_int = max(1, math.ceil(math.log(b / a) / math.log(INTERVAL_RATIO)))
    lo_i, hi_i = 0, n_int
    while hi_i - lo_i > 1:
        mid = (lo_i + hi_i) // 2
        if secular_value_and_derivative(ctx, a * INTERVAL_RATIO ** mid, v1)[0] >= 0.0:
            lo_i = mid
        else:
            hi_i = mid
    left = a * INTERVAL_RATIO ** lo_i
    right = min(hi0, a * INTERVAL_RATIO ** hi_i)
    return _newton(ctx, v1, left, left, max(right, left), schedule, tol_m)


def solve_emep(ctx, v1):
    """Solve the EMEP at level ``v1`` (constraint ``M_center(mu) <= v1``)."""
    v1 = float(v1)
    if v1 < 0.0:
        raise ValueError(f"level must be nonnegative, got {v1}")
    has_data = ctx.summary is not None
    other = Y if ctx.orientation == X else X
    # relative slack absorbs the roundoff between spectral and Cholesky routes
    if ctx.m_at_zero <= v1 * (1.0 + 1e-12):
        mu = ctx.summary.side(other)[0].copy() if has_data else None
        return EmepSolution(0.0, mu, 0.0, 0.0, 0, False)
    if v1 == 0.0:
        lam_cap = float(np.linalg.norm(ctx.s)) / math.sqrt(ctx.delta)
        mu = ctx.center.copy() if has_data else None
        h = mahalanobis(ctx.summary, other, mu) if has_data else float(np.sum(ctx.s ** 2 / ctx.values))
        return EmepSolution(lam_cap, mu, h, -lam_cap, 0, True)
    lam, steps, trace, schedule_steps = find_root(ctx, v1)
    if has_data:
        mu = _mu_from_context(ctx, lam)
        h = mahalanobis(ctx.summary, other, mu)
    else:
        mu = None
        # Target distance in rotated coordinates: sum lam^2 s^2 / (D (D+lam)^2).
        h = float(np.sum((lam * ctx.s / (ctx.values + lam)) ** 2 / ctx.values))
    return EmepSolution(lam, mu, h, -lam, steps, True, trace, schedule_steps)


def g_eval(ctx, u1):
    """Border of the feasible set: ``g(u1) = 1 + h(u1 - 1)`` and a subgradient."""
    if u1 < 1.0:
        raise ValueError(f"u1 must be >= 1, got {u1}")
    sol = solve_emep(ctx, u1 - 1.0)
    return 1.0 + sol.h_value, sol.subgradient, sol
