"""Sufficient statistics and the Mahalanobis distance functions."""

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import DegenerateSample, NotPositiveDefinite
from .matrixkit import as_spd, cholesky_spd

X, Y = "X", "Y"


@dataclass(frozen=True)
class SampleSummary:
    """Means and MLE (divisor ``N``) covariances of the two samples.

    Cholesky factors of both covariances are computed once at construction
    and reused by every quadratic form downstream.
    """

    n1: int
    n2: int
    xbar: np.ndarray
    ybar: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    chol1: np.ndarray = field(init=False, repr=False)
    chol2: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        xbar = np.atleast_1d(np.asarray(self.xbar, dtype=float))
        ybar = np.atleast_1d(np.asarray(self.ybar, dtype=float))
        s1 = as_spd(self.s1)
        s2 = as_spd(self.s2)
        d = xbar.shape[0]
        if ybar.shape != (d,) or s1.shape != (d, d) or s2.shape != (d, d):
            raise ValueError("inconsistent dimensions in sample summary")
        if self.n1 <= d or self.n2 <= d:
            raise DegenerateSample(
                f"need n1 > d and n2 > d, got n1={self.n1}, n2={self.n2}, d={d}"
            )
        try:
            chol1 = cholesky_spd(s1)
            chol2 = cholesky_spd(s2)
        except NotPositiveDefinite as exc:
            raise DegenerateSample("sample covariance is not positive definite") from exc
        for name, value in (("xbar", xbar), ("ybar", ybar), ("s1", s1), ("s2", s2),
                            ("chol1", chol1), ("chol2", chol2)):
            object.__setattr__(self, name, value)

    @property
    def d(self):
        return self.xbar.shape[0]

    def side(self, side):
        """``(mean, covariance, cholesky, n)`` for ``side`` in {"X", "Y"}."""
        if side == X:
            return self.xbar, self.s1, self.chol1, self.n1
        if side == Y:
            return self.ybar, self.s2, self.chol2, self.n2
        raise ValueError(f"side must be 'X' or 'Y', got {side!r}")

    def swapped(self):
        return SampleSummary(self.n2, self.n1, self.ybar, self.xbar, self.s2, self.s1)


def summarize(x_sample, y_sample):
    """Build a :class:`SampleSummary` from raw ``N x d`` samples."""
    x = np.asarray(x_sample, dtype=float)
    y = np.asarray(y_sample, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if y.ndim == 1:
        y = y[:, None]
    if x.ndim != 2 or y.ndim != 2 or x.shape[1] != y.shape[1]:
        raise ValueError(f"samples must be matrices with equal column counts, got {x.shape}, {y.shape}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("samples contain non-finite values")
    d = x.shape[1]
    n1, n2 = x.shape[0], y.shape[0]
    if n1 <= d or n2 <= d:
        raise DegenerateSample(f"need N1 > d and N2 > d, got N1={n1}, N2={n2}, d={d}")
    xbar = x.mean(axis=0)
    ybar = y.mean(axis=0)
    xc = x - xbar
    yc = y - ybar
    return SampleSummary(n1, n2, xbar, ybar, xc.T @ xc / n1, yc.T @ yc / n2)


def _quad(chol, r):
    z = linalg.solve_triangular(chol, r, lower=True, check_finite=False)
    return float(z @ z)


def mahalanobis(summary, side, mu):
    """Squared distance ``(mean - mu)' S^{-1} (mean - mu)`` for one sample."""
    mean, _, chol, _ = summary.side(side)
    return _quad(chol, mean - np.asarray(mu, dtype=float))


def wald_mean_mu0(summary):
    """Precision-weighted mean ``(N1 S1^-1 + N2 S2^-1)^-1 (N1 S1^-1 xbar + N2 S2^-1 ybar)``.

    This is the stationary point of ``N1 M_X(mu) + N2 M_Y(mu)`` and the natural
    starting point for local methods.
    """
    s = summary
    p1 = linalg.cho_solve((s.chol1, True), np.eye(s.d), check_finite=False)
    p2 = linalg.cho_solve((s.chol2, True), np.eye(s.d), check_finite=False)
    a = s.n1 * p1 + s.n2 * p2
    # Written as a correction to xbar so that xbar == ybar returns xbar exactly.
    rhs = s.n2 * (p2 @ (s.ybar - s.xbar))
    return s.xbar + linalg.solve(0.5 * (a + a.T), rhs, assume_a="pos")


def bfp_objective(summary, mu):
    """``(N1/2) ln(1 + M_X(mu)) + (N2/2) ln(1 + M_Y(mu))``, the reduced objective."""
    return 0.5 * (summary.n1 * np.log1p(mahalanobis(summary, X, mu))
                  + summary.n2 * np.log1p(mahalanobis(summary, Y, mu)))
