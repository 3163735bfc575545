"""Fixed-capacity per-account sliding windows over (feature, predicted class) pairs.

Features are stored at float32 precision (promoted to float64 for math), so
one window costs exactly capacity * dim * 4 feature bytes. A window is
seeded to full capacity at creation and stays full forever; eviction is
strictly oldest-first.
"""

from __future__ import annotations

import threading
from collections import OrderedDict

import numpy as np

from .errors import DimensionMismatch, SeedPoolTooSmall, WindowTooSmall


class AccountWindow:
    """Ring buffer of the latest ``capacity`` (feature, class) pairs."""

    def __init__(self, account_id: str, capacity: int, dim: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.account_id = account_id
        self.capacity = int(capacity)
        self.dim = int(dim)
        self._features = np.zeros((capacity, dim), dtype=np.float32)
        self._classes = np.zeros(capacity, dtype=np.int32)
        self._start = 0
        self._size = 0
        self.seeded_count = 0

    def __len__(self) -> int:
        return self._size

    @property
    def feature_bytes(self) -> int:
        return self._features.nbytes

    def push(self, feature: np.ndarray, class_id: int) -> None:
        feature = np.asarray(feature)
        if feature.shape != (self.dim,):
            raise DimensionMismatch(
                f"feature shape {feature.shape} does not match window dim {self.dim}")
        pos = (self._start + self._size) % self.capacity
        if self._size == self.capacity:
            pos = self._start
            self._start = (self._start + 1) % self.capacity
            if self.seeded_count > 0:
                self.seeded_count -= 1
        else:
            self._size += 1
        self._features[pos] = feature
        self._classes[pos] = class_id

    def snapshot(self) -> tuple[np.ndarray, np.ndarray]:
        """Contents in arrival order as (features float64 (n, d), classes (n,))."""
        idx = (self._start + np.arange(self._size)) % self.capacity
        return self._features[idx].astype(np.float64), self._classes[idx].astype(np.int64)


def get_or_create_window(store: "WindowStore", account_id: str) -> AccountWindow:
    return store.get_or_create(account_id)


def push_queries(window: AccountWindow, items) -> AccountWindow:
    """Append (feature, class_id) pairs in order, evicting oldest entries."""
    for feature, class_id in items:
        window.push(np.asarray(feature, dtype=np.float64), int(class_id))
    return window


def partition_by_class(window) -> dict[int, np.ndarray]:
    """Group window features by predicted class, preserving arrival order."""
    features, classes = window.snapshot() if isinstance(window, AccountWindow) else window
    groups: dict[int, np.ndarray] = {}
    for cid in np.unique(classes):
        groups[int(cid)] = features[classes == cid]
    return groups


def near_duplicate_rate(window, sim_threshold: float) -> float:
    """Fraction of unordered feature pairs with cosine similarity above the threshold.

    Zero-norm features count as duplicates of each other and dissimilar to
    everything else.
    """
    if not 0.0 < sim_threshold <= 1.0:
        raise ValueError("sim_threshold must be in (0, 1]")
    features, _ = window.snapshot() if isinstance(window, AccountWindow) else window
    n = features.shape[0]
    if n < 2:
        raise WindowTooSmall("need at least 2 window entries for pair statistics")
    norms = np.linalg.norm(features, axis=1)
    zero = norms == 0.0
    safe = np.where(zero, 1.0, norms)
    unit = features / safe[:, None]
    sims = unit @ unit.T
    both_zero = np.outer(zero, zero)
    sims = np.where(both_zero, 1.0, sims)
    iu = np.triu_indices(n, k=1)
    return float(np.mean(sims[iu] > sim_threshold))


class WindowStore:
    """One window per account, seeded from a training pool, LRU-bounded.

    Operations on different accounts may run concurrently; the caller locks
    per account via :meth:`lock_for`. The store itself serializes creation
    and eviction.
    """

    def __init__(self, seed_pool_features: np.ndarray, seed_pool_classes: np.ndarray,
                 capacity: int, rng: np.random.Generator, max_accounts: int = 16384):
        self._seed_features = np.asarray(seed_pool_features, dtype=np.float32)
        self._seed_classes = np.asarray(seed_pool_classes, dtype=np.int64)
        if self._seed_features.ndim != 2:
            raise DimensionMismatch("seed pool must be a 2-D feature array")
        self.capacity = int(capacity)
        self.dim = int(self._seed_features.shape[1])
        self.max_accounts = int(max_accounts)
        self._rng = rng
        self._windows: OrderedDict[str, AccountWindow] = OrderedDict()
        self._locks: dict[str, threading.Lock] = {}
        self._mutex = threading.Lock()
        if self._seed_features.shape[0] < self.capacity:
            raise SeedPoolTooSmall(
                f"seed pool holds {self._seed_features.shape[0]} entries, "
                f"need at least {self.capacity}")

    def __len__(self) -> int:
        return len(self._windows)

    def __contains__(self, account_id: str) -> bool:
        return account_id in self._windows

    def get_or_create(self, account_id: str) -> AccountWindow:
        with self._mutex:
            win = self._windows.get(account_id)
            if win is not None:
                self._windows.move_to_end(account_id)
                return win
            while len(self._windows) >= self.max_accounts:
                evicted, _ = self._windows.popitem(last=False)
                self._locks.pop(evicted, None)
            win = AccountWindow(account_id, self.capacity, self.dim)
            picks = self._rng.choice(self._seed_features.shape[0], size=self.capacity,
                                     replace=False)
            for i in picks:
                win.push(self._seed_features[i].astype(np.float64),
                         int(self._seed_classes[i]))
            win.seeded_count = self.capacity
            self._windows[account_id] = win
            self._locks[account_id] = threading.Lock()
            return win

    def lock_for(self, account_id: str) -> threading.Lock:
        with self._mutex:
            return self._locks.setdefault(account_id, threading.Lock())

    def accounts(self) -> list[str]:
        return list(self._windows)
