"""Moments, PSD square root, and Gaussian Fréchet distance."""

import numpy as np
import pytest

from addsentinel import Moments, estimate_moments, frechet_distance, sqrtm_psd
from addsentinel.errors import (
    DimensionMismatch,
    EmptySampleSet,
    IndefiniteMatrix,
    NotSymmetric,
)


def two_pass_moments_oracle(samples):
    """Naive double-loop mean and biased covariance."""
    X = np.asarray(samples, dtype=np.float64)
    n, d = X.shape
    mean = np.zeros(d)
    for row in X:
        mean += row
    mean /= n
    cov = np.zeros((d, d))
    for i in range(d):
        for j in range(d):
            acc = 0.0
            for row in X:
                acc += (row[i] - mean[i]) * (row[j] - mean[j])
            cov[i, j] = acc / n
    return mean, cov


def frechet_oracle(ref: Moments, qry: Moments, epsilon: float) -> float:
    """Trace of the matrix square root via direct eigensolve of the
    nonsymmetric covariance product, mirroring the regularization."""
    d = ref.dim
    cov_r = ref.cov + epsilon * np.eye(d)
    cov_q = qry.cov + epsilon * np.eye(d)
    eig = np.linalg.eigvals(cov_r @ cov_q)
    trace_sqrt = float(np.sqrt(np.clip(eig.real, 0.0, None)).sum())
    diff = ref.mean - qry.mean
    return float(diff @ diff + np.trace(cov_r) + np.trace(cov_q) - 2.0 * trace_sqrt)


def random_moments(rng, d, count=10) -> Moments:
    b = rng.standard_normal((d, d + 2))
    cov = b @ b.T / (d + 2)
    return Moments(mean=rng.standard_normal(d), cov=0.5 * (cov + cov.T), count=count)


class TestEstimateMoments:
    def test_two_point_1d(self):
        m = estimate_moments([[0.0], [2.0]])
        assert m.mean == pytest.approx([1.0])
        np.testing.assert_allclose(m.cov, [[1.0]], atol=1e-15)
        assert m.count == 2

    def test_single_sample_zero_cov(self):
        m = estimate_moments([[3.0, -1.0]])
        assert m.mean == pytest.approx([3.0, -1.0])
        assert np.array_equal(m.cov, np.zeros((2, 2)))
        assert m.count == 1

    def test_matches_two_pass_oracle(self):
        rng = np.random.default_rng(7)
        X = rng.standard_normal((50, 8)) * 3.0 + 1.0
        m = estimate_moments(X)
        mean, cov = two_pass_moments_oracle(X)
        np.testing.assert_allclose(m.mean, mean, rtol=1e-10)
        np.testing.assert_allclose(m.cov, cov, rtol=1e-10, atol=1e-12)

    @pytest.mark.parametrize("n,d", [(3, 1), (41, 5), (500, 16), (2000, 64)])
    def test_oracle_sweep(self, n, d):
        rng = np.random.default_rng(n * 100 + d)
        X = rng.standard_normal((n, d)) * rng.uniform(0.5, 4.0)
        m = estimate_moments(X)
        mean, cov = two_pass_moments_oracle(X)
        np.testing.assert_allclose(m.mean, mean, rtol=1e-10, atol=1e-13)
        np.testing.assert_allclose(m.cov, cov, rtol=1e-10, atol=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(EmptySampleSet):
            estimate_moments(np.empty((0, 3)))

    def test_ragged_rejected(self):
        with pytest.raises(DimensionMismatch):
            estimate_moments([[1.0, 2.0], [1.0]])

    def test_nonfinite_rejected(self):
        from addsentinel.errors import DataError
        with pytest.raises(DataError):
            estimate_moments([[np.nan, 0.0]])


class TestSqrtmPsd:
    def test_identity(self):
        np.testing.assert_array_equal(sqrtm_psd(np.eye(3)), np.eye(3))

    def test_diagonal(self):
        np.testing.assert_allclose(sqrtm_psd(np.diag([4.0, 9.0])),
                                   np.diag([2.0, 3.0]), atol=1e-12)

    def test_squares_back(self):
        rng = np.random.default_rng(3)
        b = rng.standard_normal((6, 6))
        m = b @ b.T
        root = sqrtm_psd(m)
        np.testing.assert_allclose(root @ root, m,
                                   rtol=1e-6, atol=1e-9 * np.linalg.norm(m))

    def test_result_symmetric_psd(self):
        rng = np.random.default_rng(4)
        b = rng.standard_normal((5, 5))
        root = sqrtm_psd(b @ b.T)
        assert np.allclose(root, root.T)
        assert np.linalg.eigvalsh(root).min() >= -1e-10

    def test_asymmetric_rejected(self):
        m = np.array([[1.0, 0.5], [0.0, 1.0]])
        with pytest.raises(NotSymmetric):
            sqrtm_psd(m)

    def test_indefinite_rejected(self):
        with pytest.raises(IndefiniteMatrix):
            sqrtm_psd(np.diag([1.0, -0.5]))

    def test_tiny_negative_clamped(self):
        assert sqrtm_psd(np.diag([1.0, -5e-9]))[1, 1] == 0.0


class TestFrechetDistance:
    def test_identical_zero(self):
        rng = np.random.default_rng(0)
        m = random_moments(rng, 4)
        assert frechet_distance(m, m) == pytest.approx(0.0, abs=1e-12)

    def test_scalar_mean_gap(self):
        a = Moments(np.array([0.0]), np.array([[1.0]]), 5)
        b = Moments(np.array([3.0]), np.array([[1.0]]), 5)
        assert frechet_distance(a, b, epsilon=0.0) == pytest.approx(9.0, abs=1e-12)

    def test_scalar_variance_gap(self):
        a = Moments(np.array([0.0]), np.array([[1.0]]), 5)
        b = Moments(np.array([0.0]), np.array([[4.0]]), 5)
        assert frechet_distance(a, b, epsilon=0.0) == pytest.approx(1.0, abs=1e-12)

    def test_diagonal_decomposition(self):
        a = Moments(np.zeros(2), np.diag([1.0, 4.0]), 5)
        b = Moments(np.ones(2), np.diag([4.0, 1.0]), 5)
        assert frechet_distance(a, b, epsilon=0.0) == pytest.approx(4.0, abs=1e-12)

    @pytest.mark.parametrize("d", [1, 2, 8])
    def test_matches_eigendecomposition_oracle(self, d):
        rng = np.random.default_rng(d)
        for _ in range(40):
            a, b = random_moments(rng, d), random_moments(rng, d)
            got = frechet_distance(a, b)
            want = frechet_oracle(a, b, epsilon=1e-6)
            assert got == pytest.approx(want, rel=1e-8, abs=1e-10)

    def test_symmetric_value(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            a, b = random_moments(rng, 6), random_moments(rng, 6)
            ab = frechet_distance(a, b)
            ba = frechet_distance(b, a)
            assert ab == pytest.approx(ba, rel=1e-9, abs=1e-12)

    def test_translation_invariance(self):
        rng = np.random.default_rng(12)
        for _ in range(10):
            a, b = random_moments(rng, 5), random_moments(rng, 5)
            v = rng.standard_normal(5)
            shifted = frechet_distance(
                Moments(a.mean + v, a.cov, a.count),
                Moments(b.mean + v, b.cov, b.count))
            assert shifted == pytest.approx(frechet_distance(a, b),
                                            rel=1e-9, abs=1e-12)

    def test_nonnegative(self):
        rng = np.random.default_rng(13)
        for _ in range(50):
            a, b = random_moments(rng, 3), random_moments(rng, 3)
            assert frechet_distance(a, b) >= 0.0

    def test_zero_iff_equal(self):
        rng = np.random.default_rng(14)
        a = random_moments(rng, 4)
        b = random_moments(rng, 4)
        assert frechet_distance(a, b) > 1e-6

    def test_dimension_mismatch(self):
        rng = np.random.default_rng(15)
        with pytest.raises(DimensionMismatch):
            frechet_distance(random_moments(rng, 3), random_moments(rng, 4))

    def test_zero_count_rejected(self):
        rng = np.random.default_rng(16)
        a = random_moments(rng, 3)
        empty = Moments(a.mean, a.cov, 0)
        with pytest.raises(EmptySampleSet):
            frechet_distance(a, empty)

    def test_singleton_zero_cov_finite(self):
        # one-sample query batches must still give a finite distance
        a = Moments(np.zeros(3), np.eye(3), 100)
        b = Moments(np.zeros(3), np.zeros((3, 3)), 1)
        value = frechet_distance(a, b)
        assert np.isfinite(value)
        assert value == pytest.approx(3.0, rel=1e-2)  # tr(I) dominates
