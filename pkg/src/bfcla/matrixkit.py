"""Symmetric positive definite linear algebra primitives.

Everything here works on plain ``numpy`` arrays. Factorizations are backed by
LAPACK through numpy/scipy; a self-contained cyclic Jacobi eigensolver is kept
alongside as an independent route (and for callers who want it explicitly).
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import ConvergenceFailure, NotPositiveDefinite

SYMMETRY_TOL = 1e-8


@dataclass(frozen=True)
class SpectralDecomposition:
    """``m = vectors @ diag(values) @ vectors.T`` with ``values`` ascending."""

    vectors: np.ndarray
    values: np.ndarray

    def reconstruct(self):
        return (self.vectors * self.values) @ self.vectors.T


def as_spd(m):
    """Validate a square matrix and return its symmetrized float copy.

    Asymmetry larger than ``SYMMETRY_TOL`` (relative to the largest entry)
    is treated as a caller bug. Positive definiteness is not checked here;
    it surfaces as :class:`NotPositiveDefinite` from the factorizations.
    """
    m = np.array(m, dtype=float)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise ValueError(f"expected a non-empty square matrix, got shape {m.shape}")
    scale = np.max(np.abs(m)) if m.size else 0.0
    if np.max(np.abs(m - m.T)) > SYMMETRY_TOL * max(scale, 1e-300):
        raise ValueError("matrix is not symmetric")
    return 0.5 * (m + m.T)


def cholesky_spd(m):
    """Lower-triangular ``L`` with ``L @ L.T == m``."""
    m = as_spd(m)
    try:
        L = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("matrix is not positive definite") from exc
    if not np.all(np.isfinite(L)) or np.any(np.diag(L) <= 0.0):
        raise NotPositiveDefinite("matrix is not positive definite")
    return L


def solve_spd(m, rhs, chol=None):
    """Solve ``m x = rhs`` through a Cholesky factor (computed if not given)."""
    L = cholesky_spd(m) if chol is None else chol
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape[0] != L.shape[0]:
        raise ValueError(f"rhs has length {rhs.shape[0]}, expected {L.shape[0]}")
    return linalg.cho_solve((L, True), rhs, check_finite=False)


def inv_spd(m, chol=None):
    L = cholesky_spd(m) if chol is None else chol
    inv = linalg.cho_solve((L, True), np.eye(L.shape[0]), check_finite=False)
    return 0.5 * (inv + inv.T)


def spectral_decomposition_spd(m, method="lapack"):
    """Eigen-decomposition of an SPD matrix, eigenvalues ascending.

    ``method="lapack"`` uses ``numpy.linalg.eigh``; ``method="jacobi"`` runs
    :func:`jacobi_eigh`.
    """
    m = as_spd(m)
    if method == "jacobi":
        values, vectors = jacobi_eigh(m)
    elif method == "lapack":
        values, vectors = np.linalg.eigh(m)
    else:
        raise ValueError(f"unknown method {method!r}")
    if values[0] <= 0.0:
        raise NotPositiveDefinite(f"smallest eigenvalue {values[0]:.3e} is not positive")
    return SpectralDecomposition(vectors=vectors, values=values)


def jacobi_eigh(m, tol=1e-15, max_rotations=None):
    """Cyclic Jacobi eigenvalue algorithm for a symmetric matrix.

    Sweeps over all off-diagonal pairs, annihilating each with a plane
    rotation, until the off-diagonal Frobenius mass drops below
    ``tol * ||m||_F``. The rotation budget defaults to ``30 * d**2``.

    Returns ``(values, vectors)`` sorted ascending, like ``numpy.linalg.eigh``.
    """
    a = np.array(m, dtype=float)
    d = a.shape[0]
    v = np.eye(d)
    if max_rotations is None:
        max_rotations = 30 * d * d
    norm = np.linalg.norm(a)
    target = tol * norm
    rotations = 0
    while d > 1:
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= target:
            break
        swept = rotations
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                if rotations >= max_rotations:
                    raise ConvergenceFailure(
                        f"Jacobi eigensolver exceeded {max_rotations} rotations"
                    )
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.copysign(1.0, theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
                rotations += 1
        if rotations == swept:
            break
    values = np.diag(a).copy()
    order = np.argsort(values)
    return values[order], v[:, order]


def sqrtm_spd(m, decomposition=None):
    """Symmetric square root via the spectral decomposition."""
    dec = spectral_decomposition_spd(m) if decomposition is None else decomposition
    root = (dec.vectors * np.sqrt(dec.values)) @ dec.vectors.T
    return 0.5 * (root + root.T)


def rank_one_inverse_update(m_inv, v):
    """Return ``(M + v v^T)^{-1}`` from ``M^{-1}`` (Sherman-Morrison)."""
    m_inv = np.asarray(m_inv, dtype=float)
    v = np.asarray(v, dtype=float)
    if v.shape != (m_inv.shape[0],):
        raise ValueError(f"v has shape {v.shape}, expected ({m_inv.shape[0]},)")
    w = m_inv @ v
    out = m_inv - np.outer(w, w) / (1.0 + v @ w)
    return 0.5 * (out + out.T)
