"""Detection metrics over scored streams.

Convention throughout: a query from a benign account is the positive class,
and scores are oriented higher-is-malicious, so a query is predicted
positive (benign) when its score is at or below the threshold.
"""

from __future__ import annotations

import numpy as np

from .errors import MissingClass


def _split(stream) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray([s for s, _ in stream], dtype=np.float64)
    benign = np.asarray([bool(b) for _, b in stream])
    b = scores[benign]
    m = scores[~benign]
    if b.size == 0 or m.size == 0:
        raise MissingClass("need both benign and malicious scores")
    return b, m


def fpr_at_tpr(stream, tpr_target: float = 0.95) -> float:
    """False-positive rate at the smallest threshold reaching the target TPR.

    The threshold is the smallest score value admitting at least the target
    fraction of benign queries; the result is the fraction of malicious
    queries admitted at that threshold.
    """
    if not 0.0 < tpr_target <= 1.0:
        raise ValueError("tpr_target must be in (0, 1]")
    benign, malicious = _split(stream)
    k = int(np.ceil(tpr_target * benign.size))
    threshold = np.sort(benign)[k - 1]
    return float(np.mean(malicious <= threshold))


def auroc(stream) -> float:
    """Probability a random benign score is below a random malicious one, ties half.

    The rank-sum formulation; equals the area under the ROC curve.
    """
    benign, malicious = _split(stream)
    ms = np.sort(malicious)
    lo = np.searchsorted(ms, benign, side="left")
    hi = np.searchsorted(ms, benign, side="right")
    wins = (ms.size - hi).sum()
    ties = (hi - lo).sum()
    return float((wins + 0.5 * ties) / (benign.size * ms.size))


def aupr(stream) -> float:
    """Area under the precision-recall curve with benign as the positive class.

    Step-wise interpolation over all distinct score thresholds:
    sum over thresholds of (recall step) * precision.
    """
    benign, malicious = _split(stream)
    thresholds = np.unique(np.concatenate([benign, malicious]))
    bs = np.sort(benign)
    ms = np.sort(malicious)
    tp = np.searchsorted(bs, thresholds, side="right").astype(np.float64)
    fp = np.searchsorted(ms, thresholds, side="right").astype(np.float64)
    precision = tp / (tp + fp)
    recall = tp / benign.size
    prev = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev) * precision))


def separation_gap(benign_scores, malicious_scores) -> float:
    """min(malicious) - max(benign); positive iff a perfect threshold exists."""
    b = np.asarray(benign_scores, dtype=np.float64)
    m = np.asarray(malicious_scores, dtype=np.float64)
    if b.size == 0 or m.size == 0:
        raise MissingClass("need both benign and malicious scores")
    return float(m.min() - b.max())
