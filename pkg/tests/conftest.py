import numpy as np
import pytest

from bfcla.stats_core import SampleSummary, summarize

ACCEPTANCE_LINES = []


def random_instance(rng, d, n1, n2=None, shift=1.0):
    """Raw Gaussian samples with random covariances and a random mean shift."""
    n2 = 2 * n1 if n2 is None else n2
    a = rng.normal(size=(d, d))
    b = rng.normal(size=(d, d))
    x = rng.normal(size=(n1, d)) @ a.T
    y = rng.normal(size=(n2, d)) @ b.T + shift * rng.normal(size=d) / np.sqrt(n1)
    return x, y


def random_summary(rng, d, n1, n2=None, shift=1.0):
    return summarize(*random_instance(rng, d, n1, n2, shift))


def direct_summary(n1, n2, xbar, ybar, s1, s2):
    return SampleSummary(n1, n2, np.atleast_1d(np.asarray(xbar, float)),
                         np.atleast_1d(np.asarray(ybar, float)),
                         np.atleast_2d(np.asarray(s1, float)),
                         np.atleast_2d(np.asarray(s2, float)))


def phi_oracle(summary, mu):
    """Reduced objective through explicit inverses, vectorized over rows of ``mu``."""
    mu = np.atleast_2d(mu)
    p1 = np.linalg.inv(summary.s1)
    p2 = np.linalg.inv(summary.s2)
    rx = summary.xbar - mu
    ry = summary.ybar - mu
    mx = np.einsum("ij,jk,ik->i", rx, p1, rx)
    my = np.einsum("ij,jk,ik->i", ry, p2, ry)
    return 0.5 * (summary.n1 * np.log1p(mx) + summary.n2 * np.log1p(my))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
