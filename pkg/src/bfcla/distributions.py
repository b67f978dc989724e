"""Chi-square distribution functions, seeded random streams and samplers."""

import math

import numpy as np
from scipy import special

from .errors import ConvergenceFailure, NotPositiveDefinite
from .matrixkit import cholesky_spd


class RngStream:
    """Reproducible random stream keyed by ``(seed, stream_id)``.

    Streams for different ``stream_id`` come from independent children of
    one :class:`numpy.random.SeedSequence`, so replication ``r`` draws the
    same numbers no matter how replications are scheduled.
    """

    def __init__(self, seed, stream_id=0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        seq = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self.generator = np.random.Generator(np.random.PCG64(seq))

    def standard_normal(self, size=None):
        return self.generator.standard_normal(size)

    def uniform(self, size=None):
        return self.generator.random(size)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


def chi2_cdf(d, x):
    """Lower tail ``P(d/2, x/2)`` of the chi-square distribution."""
    if x <= 0.0:
        return 0.0
    return float(special.gammainc(0.5 * d, 0.5 * x))


def chi2_sf(d, x):
    """Upper tail, accurate far into the tail (used for p-values)."""
    if x <= 0.0:
        return 1.0
    return float(special.gammaincc(0.5 * d, 0.5 * x))


def chi2_pdf(d, x):
    if x <= 0.0:
        return 0.0 if d > 2 else (0.5 if d == 2 else math.inf)
    k = 0.5 * d
    return math.exp((k - 1.0) * math.log(x) - 0.5 * x - k * math.log(2.0) - special.gammaln(k))


def _wilson_hilferty(d, p):
    z = math.sqrt(2.0) * special.erfinv(2.0 * p - 1.0)
    c = 2.0 / (9.0 * d)
    return max(d * (1.0 - c + z * math.sqrt(c)) ** 3, 1e-8)


def chi2_quantile(d, p, tol=1e-12):
    """Inverse CDF by safeguarded Newton from the Wilson-Hilferty point."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    lo, hi = 0.0, math.inf
    x = _wilson_hilferty(d, p)
    for _ in range(200):
        # Work on whichever tail is smaller to keep precision near p -> 1.
        if p > 0.5:
            r = (1.0 - p) - chi2_sf(d, x)
        else:
            r = chi2_cdf(d, x) - p
        if abs(r) <= tol * min(p, 1.0 - p):
            return x
        if r > 0.0:
            hi = x
        else:
            lo = x
        dens = chi2_pdf(d, x)
        nxt = x - r / dens if dens > 0.0 and math.isfinite(dens) else math.nan
        if not (lo < nxt < hi):
            nxt = 0.5 * (lo + hi) if math.isfinite(hi) else 2.0 * x + 1.0
        if nxt == x:
            return x
        x = nxt
    raise ConvergenceFailure(f"chi2_quantile({d}, {p}) did not converge")


def sample_mvn(rng, mean, chol_factor, size=None):
    """``mean + L z`` with ``z`` standard normal; ``size`` rows if given."""
    mean = np.asarray(mean, dtype=float)
    d = mean.shape[0]
    if size is None:
        return mean + chol_factor @ rng.standard_normal(d)
    z = rng.standard_normal((size, d))
    return mean + z @ chol_factor.T


def random_spd(rng, d, attempts=3):
    """``M M'`` with ``M`` a ``d x d`` matrix of independent N(0, 1) entries."""
    for _ in range(attempts):
        m = rng.standard_normal((d, d))
        sigma = m @ m.T
        sigma = 0.5 * (sigma + sigma.T)
        try:
            cholesky_spd(sigma)
        except NotPositiveDefinite:
            continue
        return sigma
    raise ConvergenceFailure(f"could not draw a positive definite {d}x{d} matrix")
