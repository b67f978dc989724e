"""Global minimization over the projected feasible set.

The lifted problem only has two non-convex variables ``(u1, u2)``; its
projection ``K`` is the epigraph of the convex, nonincreasing border
``g``. The Cutting Lines Algorithm keeps an outer polyhedral approximation
of ``K`` built from subgradient cuts of ``g`` and minimizes the
quasi-concave objective over its extreme points, which yields a lower bound
at every iteration. The Discretization Algorithm evaluates ``g`` on a
geometric grid of ``u1`` instead.
"""

import bisect
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .emep import g_eval, prepare_context
from .errors import IterationBudgetExceeded
from .stats_core import X, Y, bfp_objective, mahalanobis, wald_mean_mu0


def objective_f(n1, n2, u1, u2):
    return 0.5 * n1 * math.log(u1) + 0.5 * n2 * math.log(u2)


@dataclass(frozen=True)
class Bounds:
    l1: float
    l2: float
    u1_bar: float
    u2_bar: float


def compute_bounds(summary):
    """Vertices of the triangle that contains the optimal ``(u1, u2)``."""
    return Bounds(1.0, 1.0,
                  1.0 + mahalanobis(summary, X, summary.ybar),
                  1.0 + mahalanobis(summary, Y, summary.xbar))


@dataclass(frozen=True)
class Cut:
    """Affine minorant ``u2 >= u2_at + slope * (u - u1)`` of the border."""

    u1: float
    u2: float
    slope: float

    def __call__(self, u):
        return self.u2 + self.slope * (u - self.u1)


FLAT_CUT = Cut(1.0, 1.0, 0.0)


def _crossing(a, b):
    return (b.u2 - a.u2 + a.slope * a.u1 - b.slope * b.u1) / (a.slope - b.slope)


class PolyApprox:
    """Upper envelope of cuts on ``u1 >= left``.

    Cuts are held sorted by slope, so rebuilding the envelope after an
    insertion is a single linear sweep.
    """

    def __init__(self, cuts=(), left=1.0):
        self.left = left
        self._cuts = [FLAT_CUT]
        self._slopes = [0.0]
        self.extreme_points = []
        for cut in cuts:
            self._insert(cut)
        self._rebuild()

    @property
    def cuts(self):
        return list(self._cuts)

    def envelope(self, u):
        return max(c(u) for c in self._cuts)

    def copy(self):
        new = PolyApprox.__new__(PolyApprox)
        new.left = self.left
        new._cuts = list(self._cuts)
        new._slopes = list(self._slopes)
        new.extreme_points = list(self.extreme_points)
        return new

    def _insert(self, cut):
        if cut.slope > 0.0:
            raise ValueError(f"cut slope must be nonpositive, got {cut.slope}")
        if cut in self._cuts:
            return False
        i = bisect.bisect_right(self._slopes, cut.slope)
        self._cuts.insert(i, cut)
        self._slopes.insert(i, cut.slope)
        return True

    def _rebuild(self):
        left = self.left
        # Among equal slopes keep the one that is highest at the wall.
        lines = []
        for c in self._cuts:
            if lines and lines[-1].slope == c.slope:
                if c(left) > lines[-1](left):
                    lines[-1] = c
                continue
            lines.append(c)
        # Lines dominated at the wall and to its right by a later (flatter,
        # higher) line never appear on the envelope; the monotone hull sweep
        # below removes the rest.
        hull = []
        for c in lines:
            while hull:
                top = hull[-1]
                if c(left) >= top(left):
                    hull.pop()
                    continue
                if len(hull) >= 2 and _crossing(hull[-2], c) <= _crossing(hull[-2], top):
                    hull.pop()
                    continue
                break
            hull.append(c)
        points = [(left, hull[0](left))]
        for j, (a, b) in enumerate(zip(hull, hull[1:])):
            u = _crossing(a, b)
            if not math.isfinite(u) or not math.isfinite(b(u)):
                # nearly parallel lines meet beyond floating range
                hull = hull[: j + 1]
                break
            points.append((u, b(u)))
        self._hull = hull
        self.extreme_points = points

    def add(self, cut):
        """Insert ``cut`` in place; returns False when it was already present."""
        changed = self._insert(cut)
        if changed:
            self._rebuild()
        return changed


def add_cut(poly, cut):
    new = poly.copy()
    new.add(cut)
    return new


def minimize_over_extreme_points(poly, n1, n2):
    """Extreme point with the smallest objective (ties go to the smallest u1)."""
    best = None
    for u1, u2 in poly.extreme_points:
        u2 = max(u2, 1.0)
        val = objective_f(n1, n2, u1, u2)
        if best is None or val < best[2]:
            best = (u1, u2, val)
    return best


@dataclass
class BfpSolution:
    mu_hat: np.ndarray
    u1: float
    u2: float
    f_star: float
    lower_bound: float
    iterations: int
    algorithm: str
    epsilon: float
    trace: list = field(default_factory=list)
    ties: list = field(default_factory=list)
    init_seconds: float = 0.0
    loop_seconds: float = 0.0
    source: str = "cut"

    @property
    def gap(self):
        return self.f_star - self.lower_bound


def worst_case_iterations(bounds, n1, n2, epsilon):
    return math.ceil(bounds.u1_bar * bounds.u2_bar * n1 * n2 / (2.0 * epsilon ** 2))


def _incumbents(summary):
    """Closed-form feasible points that a global solution can never be worse than."""
    mu0 = wald_mean_mu0(summary)
    return [("mu0", mu0), ("xbar", summary.xbar.copy()), ("ybar", summary.ybar.copy())]


def _finish(summary, mu, lower_bound, iterations, algorithm, epsilon, trace, source,
            init_seconds, loop_seconds, ties=()):
    u1 = 1.0 + mahalanobis(summary, X, mu)
    u2 = 1.0 + mahalanobis(summary, Y, mu)
    f_star = objective_f(summary.n1, summary.n2, u1, u2)
    return BfpSolution(mu_hat=mu, u1=u1, u2=u2, f_star=f_star,
                       lower_bound=min(lower_bound, f_star), iterations=iterations,
                       algorithm=algorithm, epsilon=epsilon, trace=trace, ties=list(ties),
                       init_seconds=init_seconds, loop_seconds=loop_seconds, source=source)


def _trivial(summary, algorithm, epsilon):
    return BfpSolution(mu_hat=summary.xbar.copy(), u1=1.0, u2=1.0, f_star=0.0,
                       lower_bound=0.0, iterations=1 if algorithm == "cla" else 0,
                       algorithm=algorithm, epsilon=epsilon, source="trivial")


def _gap_ok(gap, f_best, epsilon, relative):
    return gap <= (epsilon * (1.0 + abs(f_best)) if relative else epsilon)


def run_cla(summary, epsilon, relative=False, ctx=None, max_iterations=None):
    """Cutting Lines Algorithm: an ``epsilon``-optimal solution with certificate.

    ``epsilon`` is an absolute gap on the objective unless ``relative`` is
    set, in which case the stop rule is ``gap <= epsilon * (1 + |f|)``.
    """
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    n1, n2 = summary.n1, summary.n2
    bounds = compute_bounds(summary)
    if bounds.u1_bar == 1.0 or bounds.u2_bar == 1.0:
        return _trivial(summary, "cla", epsilon)

    t0 = time.perf_counter()
    if ctx is None:
        ctx = prepare_context(summary, X)
    t1 = time.perf_counter()

    budget = worst_case_iterations(bounds, n1, n2, epsilon)
    if max_iterations is not None:
        budget = min(budget, max_iterations)
    poly = PolyApprox(left=bounds.l1)
    u1 = min(bounds.u1_bar, (1.0 + epsilon / n1) * bounds.l1)
    best_f = math.inf
    best = None
    visited = []
    trace = []
    k = 0
    while True:
        k += 1
        if k > budget:
            raise IterationBudgetExceeded(f"no certificate after {budget} iterations")
        u2, slope, sol = g_eval(ctx, u1)
        f_k = objective_f(n1, n2, u1, u2)
        visited.append((u1, f_k))
        if f_k < best_f:
            best_f, best = f_k, (u1, u2, sol)
        changed = poly.add(Cut(u1, u2, slope))
        hat_u1, hat_u2, hat_f = minimize_over_extreme_points(poly, n1, n2)
        gap = best_f - hat_f
        trace.append({"iteration": k, "u1": u1, "u2": u2, "f": f_k, "f_hat": hat_f,
                      "f_best": best_f, "gap": gap})
        if _gap_ok(gap, best_f, epsilon, relative):
            break
        nxt = min(bounds.u1_bar, hat_u1 * (1.0 + epsilon / n1))
        if not changed and nxt == u1:
            # Clamped at the previous point: the envelope cannot improve further.
            break
        u1 = nxt
    t2 = time.perf_counter()

    mu = best[2].mu_hat
    source = "cut"
    f_mu = bfp_objective(summary, mu)
    for name, cand in _incumbents(summary):
        f_c = bfp_objective(summary, cand)
        if f_c < f_mu:
            mu, f_mu, source = cand, f_c, name
    tie_tol = max(epsilon, 1e-12)
    span = bounds.u1_bar - bounds.l1
    ties = [u for u, f in visited
            if f - best_f <= tie_tol and abs(u - best[0]) > 1e-3 * span]
    return _finish(summary, mu, hat_f, k, "cla", epsilon, trace, source,
                   t1 - t0, t2 - t1, ties)


def da_loop_count(bounds, n1, epsilon):
    """Exact loop count ``ceil(log(U1/L1) / log(1 + 2 eps / N1))``."""
    return math.ceil(math.log(bounds.u1_bar / bounds.l1) / math.log1p(2.0 * epsilon / n1))


def run_da(summary, epsilon, ctx=None):
    """Discretization Algorithm on the grid ``L1 (1 + 2 eps / N1)^k``.

    The grid points inside ``[L1, U1]`` are evaluated, and the right end
    contributes the candidate ``f(U1, L2)``. The lower bound uses that ``g``
    is nonincreasing: on ``[u^{k-1}, u^k]`` the objective is at least
    ``f(u^{k-1}, g(u^k))``.
    """
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    n1, n2 = summary.n1, summary.n2
    bounds = compute_bounds(summary)
    if bounds.u1_bar == 1.0 or bounds.u2_bar == 1.0:
        return _trivial(summary, "da", epsilon)

    t0 = time.perf_counter()
    if ctx is None:
        ctx = prepare_context(summary, X)
    t1 = time.perf_counter()

    ratio = 1.0 + 2.0 * epsilon / n1
    best_f = objective_f(n1, n2, bounds.u1_bar, bounds.l2)
    best_mu = summary.ybar.copy()
    lower = math.inf
    prev = bounds.l1
    loops = 0
    trace = []
    k = 1
    while True:
        u1 = bounds.l1 * ratio ** k
        if u1 > bounds.u1_bar:
            break
        u2, _, sol = g_eval(ctx, u1)
        f_k = objective_f(n1, n2, u1, u2)
        loops += 1
        lower = min(lower, objective_f(n1, n2, prev, u2))
        if f_k < best_f:
            best_f, best_mu = f_k, sol.mu_hat
        trace.append({"iteration": k, "u1": u1, "u2": u2, "f": f_k})
        prev = u1
        k += 1
    # Final candidate at the right endpoint, where g(U1) = L2.
    loops += 1
    lower = min(lower, objective_f(n1, n2, prev, bounds.l2))
    t2 = time.perf_counter()
    return _finish(summary, best_mu, lower, loops, "da", epsilon, trace, "grid",
                   t1 - t0, t2 - t1)
