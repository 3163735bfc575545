"""Scikit-learn style front end over the defense engine.

The estimator follows outlier-detector conventions: ``fit(X, y)`` freezes
per-class references (and a Gaussian discriminant head unless a classifier
is supplied), ``score_samples`` returns higher-is-more-benign scores, and
``predict`` returns +1 for benign and -1 for flagged queries.

Unlike a stateless transformer, scoring is streaming: each scored query
advances the sliding window of the named account. Call
:meth:`reset_accounts` to discard per-account state between experiments.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .calibration import CalibrationReport, calibrate_tau
from .discriminant import discriminant_from_reference
from .gateway import DefenseEngine, QueryRequest
from .reference import fit_reference
from .scoring import DetectorConfig
from .validation import as_feature_matrix, as_labels


class AccountDiscrepancyDetector(BaseEstimator):
    """Flags accounts whose recent query distribution drifts from training.

    Parameters mirror the engine: scoring variant, window size, decision
    threshold tau (None means +inf, i.e. nothing is flagged until
    :meth:`calibrate` or ``set_params`` provides one), covariance
    regularizer, and the seeded random state.
    """

    def __init__(self, variant: str = "add", window_size: int = 64,
                 tau: float | None = None, epsilon: float = 1e-6,
                 energy_temperature: float = 1.0, response_mode: str = "hard",
                 max_accounts: int = 16384, classifier=None, random_state: int = 0):
        self.variant = variant
        self.window_size = window_size
        self.tau = tau
        self.epsilon = epsilon
        self.energy_temperature = energy_temperature
        self.response_mode = response_mode
        self.max_accounts = max_accounts
        self.classifier = classifier
        self.random_state = random_state

    def _config(self, tau: float) -> DetectorConfig:
        return DetectorConfig(variant=self.variant, window_size=self.window_size,
                              tau=tau, epsilon=self.epsilon,
                              energy_temperature=self.energy_temperature)

    def fit(self, X, y):
        X = as_feature_matrix(X, name="X")
        y = as_labels(y, n=X.shape[0], name="y")
        self.reference_ = fit_reference(X, y)
        self.classifier_ = (self.classifier if self.classifier is not None
                            else discriminant_from_reference(self.reference_,
                                                             jitter=self.epsilon))
        self.n_features_in_ = X.shape[1]
        self.classes_ = np.array(self.reference_.class_ids)
        self.tau_ = math.inf if self.tau is None else float(self.tau)
        self.offset_ = -self.tau_
        self._seed_features = X
        self._rebuild_engine()
        return self

    def _rebuild_engine(self) -> None:
        self.engine_ = DefenseEngine(
            self.reference_, self.classifier_, self._seed_features,
            self._config(self.tau_), seed=self.random_state,
            response_mode=self.response_mode, max_accounts=self.max_accounts)

    def reset_accounts(self) -> None:
        """Drop all per-account window state (references stay fitted)."""
        check_is_fitted(self, "engine_")
        self._rebuild_engine()

    def calibrate(self, X_benign, y_benign, gamma: float = 1e-4) -> CalibrationReport:
        """Set tau from a labeled benign stream and a tolerated accuracy drop."""
        check_is_fitted(self, "engine_")
        report = calibrate_tau(self.reference_, (X_benign, y_benign),
                               self.classifier_, gamma,
                               config=self._config(math.inf),
                               seed_features=self._seed_features,
                               seed=self.random_state)
        self.tau_ = report.tau
        self.offset_ = -self.tau_
        self._rebuild_engine()
        return report

    def malicious_scores(self, X, account_id: str = "default") -> np.ndarray:
        """Raw per-query scores (higher = more suspicious), advancing the window."""
        check_is_fitted(self, "engine_")
        X = as_feature_matrix(X, dim=self.n_features_in_, name="X")
        scores = np.empty(X.shape[0])
        for i, feature in enumerate(X):
            resp = self.engine_.handle_query(QueryRequest(account_id, feature[None, :]))
            scores[i] = resp.verdict.score
        return scores

    def score_samples(self, X, account_id: str = "default") -> np.ndarray:
        """Negated malicious scores, so higher means more benign."""
        return -self.malicious_scores(X, account_id=account_id)

    def decision_function(self, X, account_id: str = "default") -> np.ndarray:
        """Positive for benign-looking queries, negative for flagged ones."""
        return self.score_samples(X, account_id=account_id) - self.offset_

    def predict(self, X, account_id: str = "default") -> np.ndarray:
        """+1 for benign, -1 for malicious, with ties at tau counted benign."""
        return np.where(self.decision_function(X, account_id=account_id) < 0, -1, 1)
