"""Seeded Monte Carlo studies of size, power, LR discrepancy and timing.

Replication ``r`` draws everything from ``RngStream(seed, r)``: two fresh
covariances ``M M'``, then the X and the Y samples. Results are gathered in
replication order, so any number of worker processes gives identical output.
"""

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import linalg

from .distributions import RngStream, chi2_quantile, random_spd, sample_mvn
from .emep import prepare_context
from .errors import BfclaError, ConfigError
from .heuristics import iterative_update, newton_linesearch, simulated_annealing
from .mltests import (DEFAULT_ALPHAS, bartlett_statistic, lm_statistic, lr0_statistic,
                      wald_statistic)
from .solvers import compute_bounds, da_loop_count, run_cla, run_da, worst_case_iterations
from .stats_core import summarize

TESTS = ("W", "LR", "LM", "B")
HEURISTICS = ("itup", "nm", "sa")


@dataclass
class StudyConfig:
    d: int
    n1: int
    n2: int | None = None
    reps: int = 2000
    alphas: tuple = DEFAULT_ALPHAS
    epsilon: float = 1e-6
    seed: int = 42
    delta_grid: tuple = (0.0,)
    algorithm: str = "cla"
    threads: int = 1

    def __post_init__(self):
        if self.n2 is None:
            self.n2 = 2 * self.n1
        self.alphas = tuple(float(a) for a in self.alphas)
        self.delta_grid = tuple(float(x) for x in self.delta_grid)
        self.validate()

    def validate(self):
        if self.d < 1:
            raise ConfigError(f"d must be >= 1, got {self.d}")
        if self.n1 <= self.d or self.n2 <= self.d:
            raise ConfigError(f"need n1 > d and n2 > d (d={self.d}, n1={self.n1}, n2={self.n2})")
        if self.reps < 1:
            raise ConfigError(f"reps must be >= 1, got {self.reps}")
        if not self.alphas or any(not 0.0 < a < 1.0 for a in self.alphas):
            raise ConfigError(f"alphas must lie in (0, 1), got {self.alphas}")
        if not self.epsilon > 0.0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if not self.delta_grid or any(x < 0.0 for x in self.delta_grid):
            raise ConfigError(f"delta grid must be a nonempty list of nonnegative values")
        if self.algorithm not in ("cla", "da"):
            raise ConfigError(f"algorithm must be 'cla' or 'da', got {self.algorithm!r}")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")

    def to_dict(self):
        out = asdict(self)
        out["alphas"] = list(self.alphas)
        out["delta_grid"] = list(self.delta_grid)
        return out


@dataclass
class StudyResult:
    kind: str
    config: StudyConfig
    rates: dict
    stderr: dict
    reps_used: int
    failures: int
    quartiles: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    wall_clock_seconds: float = 0.0

    def rate(self, test, alpha, delta=0.0):
        return self.rates[(test, float(alpha), float(delta))]

    def rows(self):
        """Tidy rows ``(test, alpha, delta, rate, stderr, reps, seed)``."""
        return [
            {"test": t, "alpha": a, "delta": dl, "rate": r,
             "stderr": self.stderr[(t, a, dl)], "reps": self.reps_used, "seed": self.config.seed}
            for (t, a, dl), r in self.rates.items()
        ]

    def to_dict(self):
        return {
            "kind": self.kind,
            "config": self.config.to_dict(),
            "reps_used": self.reps_used,
            "failures": self.failures,
            "results": self.rows(),
            "quartiles": self.quartiles,
            "extra": self.extra,
            "wall_clock_seconds": self.wall_clock_seconds,
        }


def _map(fn, items, threads):
    if threads <= 1:
        return [fn(item) for item in items]
    items = list(items)
    chunk = max(1, len(items) // (4 * threads))
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items, chunksize=chunk))


def mu2_of_delta(sigma1, sigma2, delta, axis):
    """Mean on axis ``axis`` at squared distance ``delta**2`` from 0 in ``(S1+S2)^-1``."""
    d = sigma1.shape[0]
    if not 0 <= axis < d:
        raise ValueError(f"axis must be in [0, {d}), got {axis}")
    e = np.zeros(d)
    e[axis] = 1.0
    if delta == 0.0:
        return e * 0.0
    total = sigma1 + sigma2
    w = linalg.solve(0.5 * (total + total.T), e, assume_a="pos")
    return e * (delta / math.sqrt(w[axis]))


def draw_replication(config, rep):
    """Covariances, Cholesky factors and mean-zero raw samples for replication ``rep``."""
    rng = RngStream(config.seed, rep)
    d = config.d
    sigma1 = random_spd(rng, d)
    sigma2 = random_spd(rng, d)
    l1 = np.linalg.cholesky(sigma1)
    l2 = np.linalg.cholesky(sigma2)
    zeros = np.zeros(d)
    x = sample_mvn(rng, zeros, l1, config.n1)
    y = sample_mvn(rng, zeros, l2, config.n2)
    return rng, sigma1, sigma2, x, y


def _solve(summary, config):
    if config.algorithm == "da":
        return run_da(summary, config.epsilon)
    return run_cla(summary, config.epsilon)


def compute_statistics(summary, config):
    sol = _solve(summary, config)
    lr = 2.0 * sol.f_star
    b, _ = bartlett_statistic(summary, lr)
    return {
        "W": wald_statistic(summary),
        "LR0": lr0_statistic(summary),
        "LR": lr,
        "LM": lm_statistic(summary, sol.mu_hat),
        "B": b,
        "iterations": sol.iterations,
    }


def _size_task(args):
    config, rep = args
    _, sigma1, sigma2, x, y = draw_replication(config, rep)
    out = []
    for delta in config.delta_grid:
        if delta == 0.0:
            y_shift = y
        else:
            y_shift = y + mu2_of_delta(sigma1, sigma2, delta, rep % config.d)
        try:
            out.append(compute_statistics(summarize(x, y_shift), config))
        except BfclaError:
            out.append(None)
    return out


def _rejection_tables(config, per_rep, kind):
    rates, stderr, quartiles = {}, {}, {}
    quantiles = {a: chi2_quantile(config.d, 1.0 - a) for a in config.alphas}
    failures = 0
    reps_used = None
    for j, delta in enumerate(config.delta_grid):
        stats = [rep[j] for rep in per_rep if rep[j] is not None]
        failures += sum(1 for rep in per_rep if rep[j] is None)
        n = len(stats)
        reps_used = n if reps_used is None else min(reps_used, n)
        for test in TESTS:
            values = np.array([s[test] for s in stats])
            quartiles[f"{test}@{delta!r}"] = (
                [float(v) for v in np.percentile(values, [25, 50, 75])] if n else []
            )
            for alpha in config.alphas:
                count = int(np.sum(values > quantiles[alpha])) if n else 0
                p = count / n if n else math.nan
                rates[(test, alpha, delta)] = p
                stderr[(test, alpha, delta)] = math.sqrt(p * (1.0 - p) / n) if n else math.nan
    iters = [s["iterations"] for rep in per_rep for s in rep if s is not None]
    extra = {"mean_iterations": float(np.mean(iters)) if iters else math.nan,
             "max_iterations": int(max(iters)) if iters else 0}
    return StudyResult(kind, config, rates, stderr, reps_used or 0, failures, quartiles, extra)


def size_study(config):
    """Rejection rates of W, LR, LM and B under ``mu1 == mu2 == 0``."""
    if config.delta_grid != (0.0,):
        config = StudyConfig(**{**config.to_dict(), "delta_grid": (0.0,)})
    t0 = time.perf_counter()
    per_rep = _map(_size_task, [(config, r) for r in range(config.reps)], config.threads)
    result = _rejection_tables(config, per_rep, "size")
    result.wall_clock_seconds = time.perf_counter() - t0
    return result


def power_study(config):
    """Rejection rates over the ``delta_grid``; replication ``r`` shifts axis ``r mod d``.

    The noise of replication ``r`` is shared by all deltas, so the
    ``delta == 0`` column is the size study under the same seed.
    """
    t0 = time.perf_counter()
    per_rep = _map(_size_task, [(config, r) for r in range(config.reps)], config.threads)
    result = _rejection_tables(config, per_rep, "power")
    result.wall_clock_seconds = time.perf_counter() - t0
    return result


def _discrepancy_task(args):
    config, rep, alpha, heuristics = args
    rng, _, _, x, y = draw_replication(config, rep)
    try:
        summary = summarize(x, y)
        q = chi2_quantile(config.d, 1.0 - alpha)
        w = wald_statistic(summary)
        lr0 = lr0_statistic(summary)
        out = {"W": w > q, "LR0": lr0 > q, "LR": False, "solved": False}
        for h in heuristics:
            out[h] = False
        if lr0 > q:
            # LR <= LR_h <= LR0, so nothing below LR0 can reject.
            out["LR"] = 2.0 * _solve(summary, config).f_star > q
            out["solved"] = True
            for h in heuristics:
                if h == "itup":
                    res = iterative_update(summary)
                elif h == "nm":
                    res = newton_linesearch(summary)
                else:
                    res = simulated_annealing(summary, rng)
                out[h] = 2.0 * res.objective > q
        return out
    except BfclaError:
        return None


def discrepancy_study(config, successes=None, alpha=0.05, heuristics=HEURISTICS,
                      max_reps=None, batch=1000):
    """How often W, LR0 and heuristic LRs reject while the global LR accepts.

    With ``successes=k`` replications run in fixed batches until ``k`` LR0
    discrepancies have been seen (or ``max_reps``) and the tally is cut at
    the k-th one; otherwise exactly ``config.reps`` replications are used.
    """
    heuristics = tuple(heuristics)
    for h in heuristics:
        if h not in HEURISTICS:
            raise ConfigError(f"unknown heuristic {h!r}")
    t0 = time.perf_counter()
    limit = config.reps if successes is None else (max_reps or 10 ** 6)
    outcomes = []
    start = 0
    while start < limit:
        stop = min(limit, start + (batch if successes is not None else limit))
        tasks = [(config, r, alpha, heuristics) for r in range(start, stop)]
        outcomes.extend(_map(_discrepancy_task, tasks, config.threads))
        start = stop
        if successes is not None:
            hits = sum(1 for o in outcomes if o and o["LR0"] and not o["LR"])
            if hits >= successes:
                break
    if successes is not None:
        hits = 0
        for i, o in enumerate(outcomes):
            if o and o["LR0"] and not o["LR"]:
                hits += 1
                if hits == successes:
                    outcomes = outcomes[: i + 1]
                    break
    valid = [o for o in outcomes if o is not None]
    n = len(valid)
    rates, stderr = {}, {}
    for name in ("LR0", "W") + heuristics:
        count = sum(1 for o in valid if o[name] and not o["LR"])
        p = count / n if n else math.nan
        rates[(name, alpha, 0.0)] = p
        stderr[(name, alpha, 0.0)] = math.sqrt(p * (1.0 - p) / n) if n else math.nan
    extra = {"lr_solves": sum(1 for o in valid if o["solved"]),
             "lr_rejections": sum(1 for o in valid if o["LR"]),
             "successes_target": successes}
    result = StudyResult("discrepancy", config, rates, stderr, n, len(outcomes) - n, {}, extra)
    result.wall_clock_seconds = time.perf_counter() - t0
    return result


def _timing_task(args):
    config, rep, include_da = args
    rng, _, _, x, y = draw_replication(config, rep)
    summary = summarize(x, y)
    bounds = compute_bounds(summary)
    out = {}
    t0 = time.perf_counter()
    ctx = prepare_context(summary)
    t1 = time.perf_counter()
    cla = run_cla(summary, config.epsilon, ctx=ctx)
    t2 = time.perf_counter()
    out["init_seconds"] = t1 - t0
    out["cla"] = (t2 - t1, cla.iterations)
    out["cla_bound"] = worst_case_iterations(bounds, summary.n1, summary.n2, config.epsilon)
    if include_da:
        t3 = time.perf_counter()
        da = run_da(summary, config.epsilon, ctx=ctx)
        out["da"] = (time.perf_counter() - t3, da.iterations)
        out["da_formula"] = da_loop_count(bounds, summary.n1, config.epsilon)
    for name, fn in (("itup", lambda: iterative_update(summary)),
                     ("nm", lambda: newton_linesearch(summary)),
                     ("sa", lambda: simulated_annealing(summary, rng))):
        t3 = time.perf_counter()
        res = fn()
        out[name] = (time.perf_counter() - t3, res.iterations)
    return out


def timing_study(config, include_da=True):
    """Average seconds and iterations per algorithm on shared instances.

    Seconds are wall-clock and vary run to run; iteration counts are deterministic.
    """
    t0 = time.perf_counter()
    per_rep = _map(_timing_task, [(config, r, include_da) for r in range(config.reps)],
                   config.threads)
    algorithms = ["cla", "itup", "nm", "sa"] + (["da"] if include_da else [])
    summary = {}
    for name in algorithms:
        summary[name] = {
            "mean_seconds": float(np.mean([o[name][0] for o in per_rep])),
            "mean_iterations": float(np.mean([o[name][1] for o in per_rep])),
        }
    summary["cla"]["init_seconds"] = float(np.mean([o["init_seconds"] for o in per_rep]))
    summary["cla"]["bound_respected"] = all(o["cla"][1] <= o["cla_bound"] for o in per_rep)
    if include_da:
        summary["da"]["formula_matches"] = all(o["da"][1] == o["da_formula"] for o in per_rep)
    result = StudyResult("timing", config, {}, {}, len(per_rep), 0, {}, summary)
    result.wall_clock_seconds = time.perf_counter() - t0
    return result
