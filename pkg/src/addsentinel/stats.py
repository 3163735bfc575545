"""Dense symmetric-matrix numerics: moments, PSD square root, Gaussian Fréchet distance.

All arithmetic is float64 internally regardless of input storage precision;
covariance subtraction is cancellation-prone in float32.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptySampleSet, IndefiniteMatrix, NotSymmetric
from .validation import as_feature_matrix, as_square_matrix

SYMMETRY_ATOL = 1e-9
EIGENVALUE_FLOOR = -1e-8
DEFAULT_EPSILON = 1e-6


@dataclass(frozen=True)
class Moments:
    """Mean vector, covariance matrix, and sample count of one distribution."""

    mean: np.ndarray
    cov: np.ndarray
    count: int

    @property
    def dim(self) -> int:
        return int(self.mean.shape[0])


def estimate_moments(samples) -> Moments:
    """Estimate (mean, covariance, count) from a nonempty sample set.

    Uses the biased (divide-by-n) covariance so a single sample yields the
    zero matrix. Summation follows input order, so results are reproducible
    for identical input sequences.
    """
    X = as_feature_matrix(samples, name="samples")
    n = X.shape[0]
    mean = X.sum(axis=0) / n
    centered = X - mean
    cov = centered.T @ centered / n
    cov = 0.5 * (cov + cov.T)
    return Moments(mean=mean, cov=cov, count=n)


def _check_symmetric(m: np.ndarray, name: str) -> np.ndarray:
    if not np.all(np.abs(m - m.T) <= SYMMETRY_ATOL):
        raise NotSymmetric(f"{name}: matrix is not symmetric within {SYMMETRY_ATOL}")
    return 0.5 * (m + m.T)


def sqrtm_psd(m) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition.

    Eigenvalues in [-1e-8, 0) are treated as floating-point noise and
    clamped to zero; anything more negative raises IndefiniteMatrix.
    """
    m = as_square_matrix(m, name="m")
    m = _check_symmetric(m, "m")
    w, v = np.linalg.eigh(m)
    if w[0] < EIGENVALUE_FLOOR:
        raise IndefiniteMatrix(f"eigenvalue {w[0]:.3e} below tolerance {EIGENVALUE_FLOOR}")
    w = np.clip(w, 0.0, None)
    root = (v * np.sqrt(w)) @ v.T
    return 0.5 * (root + root.T)


def _sqrt_trace_of_product(cov_a: np.ndarray, cov_b: np.ndarray) -> float:
    """tr[(cov_a cov_b)^(1/2)] via the symmetrized form A^(1/2) B A^(1/2).

    Mathematically identical to square-rooting the nonsymmetric product for
    PSD inputs, but numerically stable. Eigenvalues are clamped at zero.
    """
    sa = sqrtm_psd(cov_a)
    inner = sa @ cov_b @ sa
    w = np.linalg.eigvalsh(0.5 * (inner + inner.T))
    return float(np.sqrt(np.clip(w, 0.0, None)).sum())


def frechet_distance(ref: Moments, qry: Moments, *, epsilon: float = DEFAULT_EPSILON) -> float:
    """Squared Fréchet distance between two Gaussians given by their moments.

    Returns ||mu_r - mu_q||^2 + tr[S_r + S_q - 2 (S_r S_q)^(1/2)] with
    epsilon * I added to both covariances before the square root (windows
    smaller than the dimension produce rank-deficient covariances). The
    result is clamped to be nonnegative.
    """
    if ref.dim != qry.dim:
        raise DimensionMismatch(f"dimension mismatch: {ref.dim} vs {qry.dim}")
    if ref.count < 1 or qry.count < 1:
        raise EmptySampleSet("moments with count = 0 carry no distribution")
    d = ref.dim
    cov_r = ref.cov
    cov_q = qry.cov
    if epsilon > 0.0:
        eye = epsilon * np.eye(d)
        cov_r = cov_r + eye
        cov_q = cov_q + eye
    diff = ref.mean - qry.mean
    value = float(diff @ diff)
    value += float(np.trace(cov_r) + np.trace(cov_q))
    value -= 2.0 * _sqrt_trace_of_product(cov_r, cov_q)
    return max(0.0, value)
