"""Malicious-score computation over window batches, plus logit-based comparison scorers.

The account-aware score weights each class-wise Gaussian discrepancy by the
class share of the window; two ablation variants drop the weighting or the
class conditioning. Two window-free scorers over classifier outputs (peak
softmax deficit and free energy) serve as comparison points. All scorers
share the orientation: higher means more likely malicious.

Class-wise distances regularize the reference covariance only
(cov_ref + epsilon * I, query covariance left raw with eigenvalues clamped
at zero). Keeping the query side unregularized admits an exact low-rank
evaluation over the window features, which is what keeps per-query scoring
within the millisecond budget at production dimensions; see
``class_distance``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NotADistribution, UnknownClassId
from .reference import ReferenceModel
from .stats import DEFAULT_EPSILON, Moments, estimate_moments, frechet_distance, sqrtm_psd

VARIANTS = ("add", "ew", "gdd", "msp", "energy")


@dataclass(frozen=True)
class DetectorConfig:
    """Scoring variant, window size, decision threshold, and regularizer."""

    variant: str = "add"
    window_size: int = 64
    tau: float = math.inf
    epsilon: float = DEFAULT_EPSILON
    energy_temperature: float = 1.0
    higher_is_malicious: bool = True

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")
        if self.window_size < 1:
            raise ValueError("window_size must be >= 1")
        if self.epsilon < 0:
            raise ValueError("epsilon must be >= 0")
        if self.energy_temperature <= 0:
            raise ValueError("energy_temperature must be > 0")
        if not self.higher_is_malicious:
            raise ValueError("score orientation is fixed: higher means malicious")


@dataclass(frozen=True)
class Verdict:
    """Outcome of thresholding one malicious score."""

    score: float
    is_malicious: bool
    variant: str
    window_snapshot_len: int


@dataclass(frozen=True)
class PreparedClass:
    """Reference-side quantities precomputed for repeated class distances."""

    mean: np.ndarray
    sqrt_cov_reg: np.ndarray   # (cov + epsilon I)^(1/2)
    trace_cov_reg: float       # tr(cov + epsilon I)


def prepare_reference(model: ReferenceModel, epsilon: float = DEFAULT_EPSILON
                      ) -> dict[int, PreparedClass]:
    """Precompute per-class square roots so window scoring avoids d^3 work."""
    prepared = {}
    eye = epsilon * np.eye(model.dim)
    for cid, stats in model.classes:
        reg = stats.cov + eye
        prepared[cid] = PreparedClass(
            mean=np.asarray(stats.mean, dtype=np.float64),
            sqrt_cov_reg=sqrtm_psd(reg),
            trace_cov_reg=float(np.trace(reg)),
        )
    return prepared


def class_distance(prep: PreparedClass, feats: np.ndarray) -> float:
    """Squared Fréchet distance from one window class group to its reference.

    Uses tr[(R S_a)^(1/2)] = sum of sqrt eigenvalues of R^(1/2) S_a R^(1/2).
    With n group features, the nonzero spectrum of that product equals the
    spectrum of the n x n Gram matrix of the rows of (centered @ R^(1/2)),
    so groups smaller than the dimension cost O(n d^2) instead of O(d^3).
    """
    n, d = feats.shape
    mu = feats.sum(axis=0) / n
    centered = feats - mu
    diff = prep.mean - mu
    value = float(diff @ diff) + prep.trace_cov_reg
    value += float(np.sum(centered * centered)) / n
    if n < d:
        b = centered @ prep.sqrt_cov_reg
        gram = b @ b.T / n
        w = np.linalg.eigvalsh(0.5 * (gram + gram.T))
    else:
        cov = centered.T @ centered / n
        inner = prep.sqrt_cov_reg @ cov @ prep.sqrt_cov_reg
        w = np.linalg.eigvalsh(0.5 * (inner + inner.T))
    value -= 2.0 * float(np.sqrt(np.clip(w, 0.0, None)).sum())
    return max(0.0, value)


def _window_arrays(window) -> tuple[np.ndarray, np.ndarray]:
    if hasattr(window, "snapshot"):
        return window.snapshot()
    features, classes = window
    return np.asarray(features, dtype=np.float64), np.asarray(classes, dtype=np.int64)


def _class_sums(model: ReferenceModel, window, epsilon: float,
                prepared: dict[int, PreparedClass] | None) -> list[tuple[int, float]]:
    features, classes = _window_arrays(window)
    if features.shape[1] != model.dim:
        raise DimensionMismatch(
            f"window dim {features.shape[1]} does not match reference dim {model.dim}")
    if prepared is None:
        prepared = prepare_reference(model, epsilon)
    out = []
    for cid in np.unique(classes):
        prep = prepared.get(int(cid))
        if prep is None:
            raise UnknownClassId(f"window class {int(cid)} not in the reference model")
        group = features[classes == cid]
        out.append((group.shape[0], class_distance(prep, group)))
    return out


def score_add(model: ReferenceModel, window, *, epsilon: float = DEFAULT_EPSILON,
              prepared: dict[int, PreparedClass] | None = None) -> float:
    """Class-share-weighted sum of class-wise distances over the window."""
    sums = _class_sums(model, window, epsilon, prepared)
    total = sum(n for n, _ in sums)
    return float(sum(n * dist for n, dist in sums) / total)


def score_ew(model: ReferenceModel, window, *, epsilon: float = DEFAULT_EPSILON,
             prepared: dict[int, PreparedClass] | None = None) -> float:
    """Unweighted sum of class-wise distances over the window."""
    sums = _class_sums(model, window, epsilon, prepared)
    return float(sum(dist for _, dist in sums))


def score_gdd(ref_global: Moments, window, *, epsilon: float = DEFAULT_EPSILON) -> float:
    """Single Fréchet distance between pooled window moments and the global reference."""
    features, _ = _window_arrays(window)
    return frechet_distance(ref_global, estimate_moments(features), epsilon=epsilon)


def score_msp(softmax_probs) -> float:
    """One minus the peak softmax probability (higher means less confident)."""
    p = np.asarray(softmax_probs, dtype=np.float64)
    if p.ndim != 1 or p.size == 0 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-6:
        raise NotADistribution("softmax_probs must be nonnegative and sum to 1")
    return float(1.0 - p.max())


def score_energy(logits, temperature: float = 1.0) -> float:
    """Free energy -T log sum exp(logit / T), computed stably."""
    z = np.asarray(logits, dtype=np.float64) / temperature
    m = z.max()
    return float(-temperature * (m + math.log(np.exp(z - m).sum())))


def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def apply_threshold(score: float, config: DetectorConfig,
                    window_len: int | None = None) -> Verdict:
    """Flag the score as malicious iff it strictly exceeds tau (ties are benign)."""
    return Verdict(
        score=float(score),
        is_malicious=bool(score > config.tau),
        variant=config.variant,
        window_snapshot_len=int(window_len if window_len is not None else config.window_size),
    )
