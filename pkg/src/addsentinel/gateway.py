"""The defense pipeline: classify, update the account window, score, respond.

Each pushed feature gets its own verdict against the updated window; flagged
queries receive a uniformly random one-hot label instead of the honest
response. With tau = +inf the engine's outputs are bit-identical to the bare
classifier, so the module can be inserted or removed transparently.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from ._rng import substream
from .reference import ReferenceModel, pooled_moments
from .scoring import (
    DetectorConfig,
    Verdict,
    apply_threshold,
    prepare_reference,
    score_add,
    score_energy,
    score_ew,
    score_gdd,
    score_msp,
    softmax,
)
from .validation import as_feature_matrix
from .windows import WindowStore

ClassifierFn = Callable[[np.ndarray], tuple[int, np.ndarray]]

RESPONSE_MODES = ("hard", "soft")


@dataclass(frozen=True)
class QueryRequest:
    """A batch of S >= 1 features submitted by one account."""

    account_id: str
    features: object
    response_mode: str | None = None


@dataclass(frozen=True)
class QueryResponse:
    labels: np.ndarray       # (S, K) probability vectors, one-hot in hard mode
    poisoned: np.ndarray     # (S,) bool, per item
    verdict: Verdict         # verdict of the last item in the batch
    latency_micros: int


@dataclass(frozen=True)
class EngineStats:
    accounts: int
    max_accounts: int
    window_feature_bytes: int
    total_window_feature_bytes: int
    max_total_window_feature_bytes: int
    queries_scored: int
    score_latency_p50_ms: float
    score_latency_p95_ms: float
    score_latency_p99_ms: float


class DefenseEngine:
    """Stateful per-account detector plus response poisoning around a classifier.

    Randomness is split into independent named substreams of ``seed``: one
    for window seeding, one for poisoned label draws, so experiments are
    reproducible and the streams do not couple.
    """

    def __init__(self, reference: ReferenceModel, classifier: ClassifierFn,
                 seed_features, config: DetectorConfig, *, seed: int = 0,
                 response_mode: str = "hard", max_accounts: int = 16384,
                 poison_uniform_soft: bool = False):
        if response_mode not in RESPONSE_MODES:
            raise ValueError(f"response_mode must be one of {RESPONSE_MODES}")
        self.reference = reference
        self.classifier = classifier
        self.config = config
        self.response_mode = response_mode
        self.poison_uniform_soft = poison_uniform_soft
        self.num_classes = reference.num_classes
        self.seed = int(seed)
        self._prepared = prepare_reference(reference, config.epsilon)
        self._global_stats = pooled_moments(reference)
        seeds = as_feature_matrix(seed_features, dim=reference.dim, name="seed_features")
        seed_classes = np.array([classifier(f)[0] for f in seeds], dtype=np.int64)
        self.windows = WindowStore(
            seeds.astype(np.float32), seed_classes, capacity=config.window_size,
            rng=substream(self.seed, "seeding"), max_accounts=max_accounts)
        self._poison_rng = substream(self.seed, "poisoning")
        self._score_latencies_us: list[float] = []

    def _score_window(self, window, logits: np.ndarray) -> float:
        variant = self.config.variant
        if variant == "add":
            return score_add(self.reference, window, epsilon=self.config.epsilon,
                             prepared=self._prepared)
        if variant == "ew":
            return score_ew(self.reference, window, epsilon=self.config.epsilon,
                            prepared=self._prepared)
        if variant == "gdd":
            return score_gdd(self._global_stats, window, epsilon=self.config.epsilon)
        if variant == "msp":
            return score_msp(softmax(logits))
        return score_energy(logits, self.config.energy_temperature)

    def _honest_label(self, logits: np.ndarray, mode: str) -> np.ndarray:
        if mode == "soft":
            return softmax(logits)
        vec = np.zeros(self.num_classes)
        vec[int(np.argmax(logits))] = 1.0
        return vec

    def _poisoned_label(self, mode: str) -> np.ndarray:
        if mode == "soft" and self.poison_uniform_soft:
            return np.full(self.num_classes, 1.0 / self.num_classes)
        vec = np.zeros(self.num_classes)
        vec[int(self._poison_rng.integers(self.num_classes))] = 1.0
        return vec

    def handle_query(self, request: QueryRequest) -> QueryResponse:
        t_start = time.perf_counter_ns()
        feats = as_feature_matrix(request.features, dim=self.reference.dim,
                                  name="features")
        mode = request.response_mode or self.response_mode
        if mode not in RESPONSE_MODES:
            raise ValueError(f"response_mode must be one of {RESPONSE_MODES}")
        window = self.windows.get_or_create(request.account_id)
        labels = np.empty((feats.shape[0], self.num_classes))
        poisoned = np.empty(feats.shape[0], dtype=bool)
        verdict: Verdict | None = None
        with self.windows.lock_for(request.account_id):
            for i, feature in enumerate(feats):
                class_id, logits = self.classifier(feature)
                window.push(feature, class_id)
                t0 = time.perf_counter_ns()
                score = self._score_window(window, logits)
                self._score_latencies_us.append((time.perf_counter_ns() - t0) / 1e3)
                verdict = apply_threshold(score, self.config, len(window))
                poisoned[i] = verdict.is_malicious
                labels[i] = (self._poisoned_label(mode) if verdict.is_malicious
                             else self._honest_label(logits, mode))
        latency = (time.perf_counter_ns() - t_start) // 1000
        assert verdict is not None
        return QueryResponse(labels=labels, poisoned=poisoned, verdict=verdict,
                             latency_micros=int(latency))

    def submit(self, account_id: str, features, response_mode: str | None = None
               ) -> QueryResponse:
        return self.handle_query(QueryRequest(account_id, features, response_mode))

    def with_tau(self, tau: float) -> "DefenseEngine":
        """A fresh engine identical to this one except for the threshold."""
        return DefenseEngine(
            self.reference, self.classifier,
            self.windows._seed_features.astype(np.float64), replace(self.config, tau=tau),
            seed=self.seed, response_mode=self.response_mode,
            max_accounts=self.windows.max_accounts,
            poison_uniform_soft=self.poison_uniform_soft)

    def engine_stats(self) -> EngineStats:
        per_window = self.config.window_size * self.reference.dim * 4
        lat = np.asarray(self._score_latencies_us, dtype=np.float64)
        if lat.size:
            p50, p95, p99 = np.percentile(lat, [50, 95, 99]) / 1e3
        else:
            p50 = p95 = p99 = float("nan")
        return EngineStats(
            accounts=len(self.windows),
            max_accounts=self.windows.max_accounts,
            window_feature_bytes=per_window,
            total_window_feature_bytes=per_window * len(self.windows),
            max_total_window_feature_bytes=per_window * self.windows.max_accounts,
            queries_scored=lat.size,
            score_latency_p50_ms=float(p50),
            score_latency_p95_ms=float(p95),
            score_latency_p99_ms=float(p99),
        )


def engine_stats(engine: DefenseEngine) -> EngineStats:
    return engine.engine_stats()
