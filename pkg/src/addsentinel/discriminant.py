"""Gaussian discriminant classifier used as the pluggable classifier head.

Logits are per-class log densities under uniform priors, so the predicted
class is the maximum-likelihood class with ties broken toward the lowest id.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DimensionMismatch
from .reference import ReferenceModel


class GaussianDiscriminant:
    """Classifier over K multivariate normals; callable as feature -> (class, logits)."""

    def __init__(self, means, covs, jitter: float = 0.0):
        self.means = np.asarray(means, dtype=np.float64)
        covs = np.asarray(covs, dtype=np.float64)
        k, d = self.means.shape
        self.dim = d
        self.num_classes = k
        self._precision = np.empty((k, d, d))
        self._log_norm = np.empty(k)
        eye = np.eye(d)
        for c in range(k):
            cov = covs[c] + jitter * eye
            L = np.linalg.cholesky(cov)
            L_inv = np.linalg.inv(L)
            self._precision[c] = L_inv.T @ L_inv
            logdet = 2.0 * np.log(np.diag(L)).sum()
            self._log_norm[c] = -0.5 * (logdet + d * math.log(2.0 * math.pi))

    def logits(self, feature: np.ndarray) -> np.ndarray:
        x = np.asarray(feature, dtype=np.float64)
        if x.shape != (self.dim,):
            raise DimensionMismatch(f"feature shape {x.shape}, expected ({self.dim},)")
        out = np.empty(self.num_classes)
        for c in range(self.num_classes):
            diff = x - self.means[c]
            out[c] = self._log_norm[c] - 0.5 * float(diff @ self._precision[c] @ diff)
        return out

    def __call__(self, feature: np.ndarray) -> tuple[int, np.ndarray]:
        logits = self.logits(feature)
        return int(np.argmax(logits)), logits

    def predict_batch(self, features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        X = np.asarray(features, dtype=np.float64)
        n = X.shape[0]
        logits = np.empty((n, self.num_classes))
        for c in range(self.num_classes):
            diff = X - self.means[c]
            logits[:, c] = self._log_norm[c] - 0.5 * np.einsum(
                "ij,jk,ik->i", diff, self._precision[c], diff)
        return np.argmax(logits, axis=1), logits


def discriminant_from_reference(model: ReferenceModel, jitter: float = 1e-6
                                ) -> GaussianDiscriminant:
    """Build the classifier head from fitted reference moments."""
    means = np.stack([stats.mean for _, stats in model.classes])
    covs = np.stack([stats.cov for _, stats in model.classes])
    return GaussianDiscriminant(means, covs, jitter=jitter)
