"""Reference fitting and ADDREF01 persistence."""

import numpy as np
import pytest

from addsentinel import (
    Moments,
    estimate_moments,
    fit_reference,
    load_reference,
    pooled_moments,
    save_reference,
)
from addsentinel.errors import (
    ChecksumMismatch,
    ClassTooSmall,
    FormatVersionMismatch,
    IoFailure,
    LabelOutOfRange,
)


def test_two_class_fit():
    model = fit_reference([[0.0], [2.0], [10.0], [12.0]], [0, 0, 1, 1])
    assert model.dim == 1 and model.num_classes == 2
    c0, c1 = model.stats_for(0), model.stats_for(1)
    assert c0.mean == pytest.approx([1.0])
    np.testing.assert_allclose(c0.cov, [[1.0]], atol=1e-15)
    assert c1.mean == pytest.approx([11.0])
    np.testing.assert_allclose(c1.cov, [[1.0]], atol=1e-15)


def test_label_out_of_range():
    X = np.zeros((6, 2))
    with pytest.raises(LabelOutOfRange):
        fit_reference(X, [0, 0, 1, 1, 2, 5], num_classes=3)
    with pytest.raises(LabelOutOfRange):
        fit_reference(X, [0, 0, 1, 1, 2, -1])


def test_class_too_small():
    with pytest.raises(ClassTooSmall) as err:
        fit_reference([[0.0], [1.0], [2.0]], [0, 0, 1])
    assert err.value.class_id == 1


def test_missing_middle_class():
    with pytest.raises(ClassTooSmall):
        fit_reference([[0.0], [1.0], [2.0], [3.0]], [0, 0, 2, 2])


def test_recovers_generator_moments():
    # with 500 samples per class the fitted mean lands within 3 sigma/sqrt(n)
    rng = np.random.default_rng(5)
    d, k, n = 16, 10, 500
    means = rng.normal(0.0, 5.0, (k, d))
    X, y = [], []
    for c in range(k):
        X.append(rng.standard_normal((n, d)) + means[c])
        y.append(np.full(n, c))
    model = fit_reference(np.concatenate(X), np.concatenate(y))
    for c in range(k):
        err = np.abs(model.stats_for(c).mean - means[c])
        assert np.all(err <= 3.0 / np.sqrt(n))


def test_permutation_invariance():
    rng = np.random.default_rng(6)
    X = rng.standard_normal((60, 4))
    y = rng.integers(0, 3, 60)
    perm = rng.permutation(60)
    a = fit_reference(X, y)
    b = fit_reference(X[perm], y[perm])
    for c in range(3):
        np.testing.assert_allclose(a.stats_for(c).mean, b.stats_for(c).mean,
                                   rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(a.stats_for(c).cov, b.stats_for(c).cov,
                                   rtol=1e-12, atol=1e-14)


def test_pooled_moments_match_direct_fit():
    rng = np.random.default_rng(8)
    X = rng.standard_normal((200, 5)) * 2.0 + 1.0
    y = rng.integers(0, 4, 200)
    while np.bincount(y, minlength=4).min() < 2:
        y = rng.integers(0, 4, 200)
    model = fit_reference(X, y)
    pooled = pooled_moments(model)
    direct = estimate_moments(X)
    assert pooled.count == 200
    np.testing.assert_allclose(pooled.mean, direct.mean, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(pooled.cov, direct.cov, rtol=1e-9, atol=1e-11)


class TestPersistence:
    @pytest.fixture
    def model(self):
        rng = np.random.default_rng(9)
        X = rng.standard_normal((120, 6)) * np.pi
        y = rng.integers(0, 3, 120)
        while np.bincount(y, minlength=3).min() < 2:
            y = rng.integers(0, 3, 120)
        return fit_reference(X, y)

    def test_round_trip_bit_exact(self, model, tmp_path):
        path = tmp_path / "ref.bin"
        save_reference(model, path)
        loaded = load_reference(path)
        assert loaded.dim == model.dim
        assert loaded.class_ids == model.class_ids
        for cid, stats in model.classes:
            got = loaded.stats_for(cid)
            assert got.count == stats.count
            assert np.array_equal(got.mean, stats.mean)
            assert np.array_equal(got.cov, stats.cov)

    def test_corrupt_magic(self, model, tmp_path):
        path = tmp_path / "ref.bin"
        save_reference(model, path)
        blob = bytearray(path.read_bytes())
        blob[:8] = b"NOTADDRF"
        path.write_bytes(bytes(blob))
        with pytest.raises(FormatVersionMismatch):
            load_reference(path)

    def test_truncated(self, model, tmp_path):
        path = tmp_path / "ref.bin"
        save_reference(model, path)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) - 17])
        with pytest.raises((ChecksumMismatch, IoFailure)):
            load_reference(path)

    def test_flipped_payload_byte(self, model, tmp_path):
        path = tmp_path / "ref.bin"
        save_reference(model, path)
        blob = bytearray(path.read_bytes())
        blob[40] ^= 0xFF
        path.write_bytes(bytes(blob))
        with pytest.raises(ChecksumMismatch):
            load_reference(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(IoFailure):
            load_reference(tmp_path / "absent.bin")
