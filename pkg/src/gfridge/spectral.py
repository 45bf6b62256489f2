"""Spectral decomposition of a design matrix and spectral matrix functions.

Every estimator and risk formula downstream depends on ``X`` only through
the eigendecomposition ``X^T X / n = V diag(s) V^T`` and the matching left
singular vectors, so this module computes those once and routes all matrix
functions through them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InputError, NumericError


@dataclass(frozen=True)
class SpectralData:
    """Eigendecomposition of ``X^T X / n`` plus SVD factors of ``X``.

    Attributes
    ----------
    eigenvalues : (p,) array
        Eigenvalues ``s_i`` of ``X^T X / n`` sorted descending, padded with
        zeros to length ``p`` when ``p > n``. Values under the rank threshold
        are stored as exact zeros.
    right_vectors : (p, p) array
        Orthonormal eigenvectors ``V``; column ``i`` pairs with ``s_i``.
    left_vectors : (n, min(n, p)) array
        Left singular vectors ``U`` with ``X = sqrt(n) U diag(sqrt(s)) V^T``
        over the first ``min(n, p)`` eigenvalues.
    n, p : int
    rank : int
        Number of eigenvalues above the threshold.
    """

    eigenvalues: np.ndarray
    right_vectors: np.ndarray
    left_vectors: np.ndarray
    n: int
    p: int
    rank: int

    @property
    def rank_deficient(self) -> bool:
        return self.rank < self.p

    @property
    def s_max(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def nonzero(self) -> np.ndarray:
        """Boolean mask of eigenvalues above the rank threshold."""
        return self.eigenvalues > 0.0

    @property
    def m(self) -> int:
        return min(self.n, self.p)

    def sample_covariance(self) -> np.ndarray:
        return apply_spectral(self, lambda s: s)


def _as_design(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise InputError(f"design matrix must be 2-D, got shape {X.shape}")
    n, p = X.shape
    if n < 1 or p < 1:
        raise InputError(f"design matrix must have n >= 1 and p >= 1, got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise InputError("design matrix has non-finite entries")
    return X


def rank_threshold(s_max: float, p: int) -> float:
    return p * np.finfo(float).eps * s_max


def decompose(X) -> SpectralData:
    """Decompose ``X`` into the spectral data used everywhere else.

    Eigenvalues below ``p * eps * s_max`` are set to exactly zero so that
    the zero-eigenvalue conventions of the risk formulas apply
    deterministically.

    Raises
    ------
    InputError
        If ``X`` is not a finite 2-D array with positive dimensions.
    """
    X = _as_design(X)
    n, p = X.shape
    m = min(n, p)
    U, d, Vt = np.linalg.svd(X / np.sqrt(n), full_matrices=True)
    s = np.zeros(p)
    # LAPACK returns singular values sorted descending; padding zeros go last
    s[:m] = d**2
    V = Vt.T
    s = np.maximum(s, 0.0)
    s[s < rank_threshold(s[0], p)] = 0.0
    rank = int(np.count_nonzero(s))
    return SpectralData(
        eigenvalues=s,
        right_vectors=V,
        left_vectors=U[:, :m],
        n=n,
        p=p,
        rank=rank,
    )


def from_eigenvalues(eigenvalues, n: int) -> SpectralData:
    """Spectral data for a diagonal design with the given eigenvalues.

    Useful when only the spectrum matters (Bayes risks). The design is
    ``X = sqrt(n) [diag(sqrt(s)); 0]`` when ``n >= p``.
    """
    s = np.sort(np.asarray(eigenvalues, dtype=float))[::-1].copy()
    p = s.size
    if n < np.count_nonzero(s):
        raise InputError("more nonzero eigenvalues than samples")
    X = np.zeros((n, p))
    k = min(n, p)
    X[np.arange(k), np.arange(k)] = np.sqrt(n * np.maximum(s[:k], 0.0))
    return decompose(X)


def spectral_values(sd: SpectralData, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Evaluate ``f`` on the eigenvalues, checking finiteness."""
    vals = np.asarray(f(sd.eigenvalues), dtype=float)
    if vals.shape != sd.eigenvalues.shape:
        vals = np.broadcast_to(vals, sd.eigenvalues.shape).astype(float)
    bad = ~np.isfinite(vals)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise NumericError(
            f"spectral function is not finite at eigenvalue s[{i}] = {sd.eigenvalues[i]!r}"
        )
    return vals


def apply_spectral(sd: SpectralData, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Return ``V diag(f(s)) V^T``.

    ``f`` receives the whole eigenvalue array and must be vectorized.
    """
    vals = spectral_values(sd, f)
    V = sd.right_vectors
    out = (V * vals) @ V.T
    return 0.5 * (out + out.T)


def matrix_exp_neg(sd: SpectralData, t: float) -> np.ndarray:
    """``exp(-t X^T X / n)`` for ``t >= 0``."""
    if not t >= 0:
        raise InputError(f"time must be nonnegative, got {t}")
    return apply_spectral(sd, lambda s: np.exp(-t * s))


def pseudo_inverse_values(s: np.ndarray) -> np.ndarray:
    out = np.zeros_like(s)
    nz = s > 0
    out[nz] = 1.0 / s[nz]
    return out


def pseudoinverse(sd: SpectralData) -> np.ndarray:
    """Moore-Penrose inverse of ``X^T X / n`` using the stored rank threshold."""
    return apply_spectral(sd, pseudo_inverse_values)


def quadratic_weights(sd: SpectralData, cov: np.ndarray) -> np.ndarray:
    """``V^T cov V``: a covariance expressed in the eigenbasis of ``X^T X / n``."""
    V = sd.right_vectors
    return V.T @ cov @ V
