"""Sliding windows, the per-account store, and pair statistics."""

from collections import Counter, deque

import numpy as np
import pytest

from addsentinel import (
    AccountWindow,
    WindowStore,
    get_or_create_window,
    near_duplicate_rate,
    partition_by_class,
    push_queries,
)
from addsentinel.errors import DimensionMismatch, SeedPoolTooSmall, WindowTooSmall


def fresh_window(capacity=4, dim=2, account="a"):
    return AccountWindow(account, capacity, dim)


def make_store(pool=32, capacity=4, dim=2, seed=0, max_accounts=16384):
    rng = np.random.default_rng(seed)
    feats = rng.standard_normal((pool, dim))
    classes = rng.integers(0, 3, pool)
    return WindowStore(feats.astype(np.float32), classes, capacity,
                       np.random.default_rng(seed + 1), max_accounts=max_accounts)


class TestAccountWindow:
    def test_fifo_eviction(self):
        win = fresh_window()
        for i, tag in enumerate("abcd"):
            win.push(np.array([float(i), 0.0]), i)
        push_queries(win, [(np.array([4.0, 0.0]), 4), (np.array([5.0, 0.0]), 5)])
        feats, classes = win.snapshot()
        assert list(classes) == [2, 3, 4, 5]
        assert feats[:, 0] == pytest.approx([2.0, 3.0, 4.0, 5.0])

    def test_over_capacity_push(self):
        win = fresh_window(capacity=4)
        items = [(np.array([float(i), 0.0]), i) for i in range(5)]
        push_queries(win, items)
        _, classes = win.snapshot()
        assert list(classes) == [1, 2, 3, 4]

    def test_matches_shadow_deque(self):
        # stays exactly in lockstep with a reference deque over ~1e5 pushes
        rng = np.random.default_rng(42)
        total = 0
        for trial in range(100):
            cap = int(rng.integers(1, 12))
            win = fresh_window(capacity=cap, dim=3)
            shadow = deque(maxlen=cap)
            for _ in range(1000):
                f = rng.standard_normal(3).astype(np.float32).astype(np.float64)
                c = int(rng.integers(0, 5))
                win.push(f, c)
                shadow.append((f, c))
                total += 1
            feats, classes = win.snapshot()
            assert list(classes) == [c for _, c in shadow]
            assert np.array_equal(feats, np.array([f for f, _ in shadow]))
        assert total == 100_000

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            fresh_window(dim=2).push(np.zeros(3), 0)

    def test_feature_bytes(self):
        win = AccountWindow("a", 64, 256)
        assert win.feature_bytes == 65536


class TestWindowStore:
    def test_cold_start_fill(self):
        store = make_store(capacity=8)
        win = get_or_create_window(store, "u1")
        assert len(win) == 8
        assert win.seeded_count == 8

    def test_idempotent_get(self):
        store = make_store()
        assert get_or_create_window(store, "u1") is get_or_create_window(store, "u1")

    def test_seed_selection_deterministic(self):
        a = make_store(seed=42).get_or_create("u1").snapshot()
        b = make_store(seed=42).get_or_create("u1").snapshot()
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_seed_pool_too_small(self):
        with pytest.raises(SeedPoolTooSmall):
            make_store(pool=3, capacity=4)

    def test_seeds_age_out(self):
        store = make_store(capacity=4)
        win = store.get_or_create("u1")
        win.push(np.zeros(2), 0)
        assert win.seeded_count == 3
        push_queries(win, [(np.zeros(2), 0)] * 10)
        assert win.seeded_count == 0

    def test_lru_eviction(self):
        store = make_store(max_accounts=2)
        store.get_or_create("a")
        store.get_or_create("b")
        store.get_or_create("a")          # refresh a
        store.get_or_create("c")          # evicts b
        assert "a" in store and "c" in store and "b" not in store
        assert len(store) == 2


class TestPartition:
    def test_single_class(self):
        win = fresh_window(capacity=4)
        push_queries(win, [(np.zeros(2), 3)] * 4)
        groups = partition_by_class(win)
        assert set(groups) == {3} and groups[3].shape == (4, 2)

    def test_counts(self):
        win = fresh_window(capacity=4)
        push_queries(win, [(np.zeros(2), c) for c in (0, 1, 0, 2)])
        groups = partition_by_class(win)
        assert {c: len(g) for c, g in groups.items()} == {0: 2, 1: 1, 2: 1}

    def test_histogram_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            n = int(rng.integers(1, 20))
            win = fresh_window(capacity=n)
            classes = [int(rng.integers(0, 6)) for _ in range(n)]
            push_queries(win, [(rng.standard_normal(2), c) for c in classes])
            groups = partition_by_class(win)
            assert {c: len(g) for c, g in groups.items()} == Counter(classes)
            assert sum(len(g) for g in groups.values()) == n


class TestNearDuplicateRate:
    def test_identical_vectors(self):
        win = fresh_window(capacity=5)
        push_queries(win, [(np.array([1.0, 2.0]), 0)] * 5)
        assert near_duplicate_rate(win, 0.99) == 1.0

    def test_orthogonal_vectors(self):
        win = fresh_window(capacity=2)
        push_queries(win, [(np.array([1.0, 0.0]), 0), (np.array([0.0, 1.0]), 0)])
        assert near_duplicate_rate(win, 0.99) == 0.0

    def test_pairwise_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            n = int(rng.integers(2, 12))
            feats = rng.standard_normal((n, 3))
            win = fresh_window(capacity=n, dim=3)
            push_queries(win, [(f, 0) for f in feats])
            threshold = float(rng.uniform(0.2, 0.99))
            got = near_duplicate_rate(win, threshold)
            hits, pairs = 0, 0
            for i in range(n):
                for j in range(i + 1, n):
                    sim = feats[i] @ feats[j] / (
                        np.linalg.norm(feats[i]) * np.linalg.norm(feats[j]))
                    hits += sim > threshold
                    pairs += 1
            assert got == pytest.approx(hits / pairs, abs=1e-12)

    def test_window_too_small(self):
        win = fresh_window(capacity=4)
        win.push(np.zeros(2), 0)
        with pytest.raises(WindowTooSmall):
            near_duplicate_rate(win, 0.9)

    def test_zero_vectors_are_duplicates(self):
        win = fresh_window(capacity=3)
        push_queries(win, [(np.zeros(2), 0), (np.zeros(2), 0),
                           (np.array([1.0, 0.0]), 0)])
        assert near_duplicate_rate(win, 0.5) == pytest.approx(1.0 / 3.0)
