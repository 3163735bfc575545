"""Threshold selection from a tolerated accuracy-dropping ratio.

The procedure replays a labeled benign stream through the full pipeline
once with detection disabled. Poisoning never feeds back into window state,
so per-query scores are identical at every threshold and the sweep can be
evaluated from that single trace. Sweep accuracies count every poisoned
response as an error, which makes the sweep deterministic and monotone in
tau; the final achieved accuracy is then measured literally (a poisoned
random label that happens to be correct still counts) by re-simulating at
the chosen threshold with the seeded poisoning stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import EmptyStream
from .gateway import ClassifierFn, DefenseEngine, QueryRequest
from .reference import ReferenceModel
from .scoring import DetectorConfig
from .validation import as_feature_matrix, as_labels


@dataclass(frozen=True)
class CalibrationReport:
    gamma: float
    acc_star: float          # undefended accuracy on the calibration stream
    achieved_acc: float      # defended accuracy at tau, literal counting
    tau: float
    sweep: tuple[tuple[float, float], ...]   # (candidate tau, defended accuracy)
    unachievable: bool = False


def _replay(engine: DefenseEngine, features: np.ndarray, labels: np.ndarray,
            account: str) -> tuple[np.ndarray, np.ndarray]:
    """Scores and returned-label correctness for each query, in order."""
    scores = np.empty(features.shape[0])
    correct = np.empty(features.shape[0], dtype=bool)
    for i, feature in enumerate(features):
        resp = engine.handle_query(QueryRequest(account, feature[None, :]))
        scores[i] = resp.verdict.score
        correct[i] = int(np.argmax(resp.labels[0])) == labels[i]
    return scores, correct


def calibrate_tau(reference: ReferenceModel, benign_stream, classifier: ClassifierFn,
                  gamma: float, *, config: DetectorConfig, seed_features,
                  seed: int = 0, account_id: str = "calibration") -> CalibrationReport:
    """Pick the smallest threshold keeping defended accuracy within gamma of acc*.

    ``benign_stream`` is a (features, true_labels) pair. Candidates are the
    unique per-query scores observed on the undefended pass plus +inf; the
    selected candidate is nudged one finite candidate upward when possible,
    trading a little slack for utility headroom.
    """
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must be in [0, 1)")
    features, labels = benign_stream
    features = as_feature_matrix(features, dim=reference.dim, name="benign_stream")
    labels = as_labels(labels, n=features.shape[0], name="benign_stream labels")
    if features.shape[0] == 0:
        raise EmptyStream("calibration stream is empty")

    open_engine = DefenseEngine(reference, classifier, seed_features,
                                replace(config, tau=math.inf), seed=seed)
    scores, honest_correct = _replay(open_engine, features, labels, account_id)
    n = scores.shape[0]
    acc_star = float(honest_correct.mean())
    target = acc_star * (1.0 - gamma)

    finite = np.unique(scores)
    order = np.argsort(scores, kind="stable")
    correct_sorted = honest_correct[order].astype(np.float64)
    cum_correct = np.cumsum(correct_sorted)
    # defended accuracy at candidate t: honest-and-correct among queries with
    # score <= t, poisoned responses counted as errors
    upto = np.searchsorted(np.sort(scores), finite, side="right")
    sweep_acc = cum_correct[upto - 1] / n
    sweep = [(float(t), float(a)) for t, a in zip(finite, sweep_acc)]
    sweep.append((math.inf, acc_star))

    eligible = np.nonzero(sweep_acc + 1e-12 >= target)[0]
    if eligible.size == 0:
        tau = math.inf
        unachievable = True
    else:
        idx = int(eligible[0])
        if idx + 1 < finite.size:
            idx += 1
        tau = float(finite[idx])
        unachievable = False

    defended = DefenseEngine(reference, classifier, seed_features,
                             replace(config, tau=tau), seed=seed)
    _, returned_correct = _replay(defended, features, labels, account_id)
    achieved = float(returned_correct.mean())
    return CalibrationReport(gamma=float(gamma), acc_star=acc_star,
                             achieved_acc=achieved, tau=tau,
                             sweep=tuple(sweep), unachievable=unachievable)
