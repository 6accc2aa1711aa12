"""
稠密参考实现测试
"""

import numpy as np
import pytest

from pivchol.decomposition import DecompositionConfig, StopReason, pivoted_cholesky
from pivchol.errors import (
    DegenerateFeatureError,
    InvalidKernelError,
    KernelArgumentError,
    OracleDegeneracyError,
    OracleScaleError,
)
from pivchol.kernels import KernelFamily, KernelSpec, PointSet, explicit_features
from pivchol.oracles import (
    GramMatrix,
    dense_gram,
    subspace_distances,
    subspace_fps,
    pointwise_fps,
    dense_pivoted_cholesky,
    gram_schmidt_basis,
    qr_factor_oracle,
    qr_identity_deviation,
    residual_identity_check,
    residual_matrix_metrics,
    projection_coefficient_check,
    compare_sequences,
    linear_dependence_fixture,
)


def _decompose(spec, X, rank, tolerance=1e-6):
    factor, trace = pivoted_cholesky(spec, X, DecompositionConfig(max_rank=rank, tolerance=tolerance))
    return factor, trace


class TestGramMatrix:

    def test_single_point(self, rbf):
        assert dense_gram(rbf, [[0.2, 0.4]]).matrix.tolist() == [[1.0]]

    def test_identical_points(self, rbf):
        np.testing.assert_array_equal(dense_gram(rbf, [[1.0], [1.0]]).matrix, np.ones((2, 2)))

    def test_linear_matches_product(self, rng):
        spec = KernelSpec(family=KernelFamily.LINEAR, variance=2.5)
        X = rng.normal(size=(10, 3))
        np.testing.assert_allclose(dense_gram(spec, X).matrix, 2.5 * X @ X.T, atol=1e-12)

    def test_cap(self, rbf):
        with pytest.raises(OracleScaleError):
            dense_gram(rbf, np.zeros((4, 1)), cap=3)

    def test_rejects_asymmetric(self):
        with pytest.raises(KernelArgumentError):
            GramMatrix([[1.0, 0.5], [0.4, 1.0]])

    def test_psd_check(self):
        assert GramMatrix(np.eye(3)).is_psd()
        assert not GramMatrix(np.diag([1.0, -1.0])).is_psd()


class TestSubspaceFPS:

    def test_identity(self):
        sequence = subspace_fps(np.eye(3), max_rank=2, tolerance=1e-6)
        assert sequence.indices == [0, 1]
        assert sequence.distances == [1.0, 1.0]

    def test_rank_one(self):
        sequence = subspace_fps(np.ones((3, 3)), max_rank=3, tolerance=1e-6)
        assert sequence.indices == [0]
        assert sequence.distances == [1.0]

    def test_singular_subspace_is_reported(self):
        with pytest.raises(OracleDegeneracyError):
            subspace_distances(np.ones((3, 3)), [0, 1])

    def test_distances_of_selected_are_zero(self, rbf, random_points):
        gram = dense_gram(rbf, random_points)
        dist = subspace_distances(gram, [4, 9])
        assert dist[4] == 0.0 and dist[9] == 0.0

    @pytest.mark.parametrize("seed", range(30))
    def test_matches_lazy_pivots(self, seed):
        rng = np.random.default_rng(seed)
        X = PointSet(rng.random((int(rng.integers(10, 30)), 2)))
        spec = KernelSpec(family=KernelFamily.RBF, lengthscale=float(rng.uniform(0.1, 0.4)))
        rank = int(rng.integers(1, 11))
        factor, trace = _decompose(spec, X, rank)
        oracle = subspace_fps(dense_gram(spec, X), rank, 1e-6)
        assert oracle.indices == [int(p) for p in factor.pivots]
        np.testing.assert_allclose(oracle.distances, trace.pivot_values, rtol=1e-8)
        assert oracle.is_nonincreasing()


class TestPointwiseFPS:

    def test_identity(self):
        sequence = pointwise_fps(np.eye(3), max_rank=2, seed_index=0)
        assert sequence.indices == [0, 1]
        assert sequence.distances == [1.0, 2.0]

    def test_duplicate_has_zero_distance(self):
        sequence = pointwise_fps(np.ones((2, 2)), max_rank=2, seed_index=0)
        assert sequence.indices == [0, 1]
        assert sequence.distances[1] == 0.0

    def test_seed_out_of_range(self):
        with pytest.raises(KernelArgumentError):
            pointwise_fps(np.eye(2), max_rank=2, seed_index=2)

    def test_selected_points_never_repeat(self, rbf, random_points):
        sequence = pointwise_fps(dense_gram(rbf, random_points), max_rank=30, seed_index=5)
        assert sorted(sequence.indices) == list(range(30))
        assert sequence.is_nonincreasing(start=1)


class TestDensePivotedCholesky:

    def test_scalar(self):
        factor = dense_pivoted_cholesky([[4.0]], max_rank=1, tolerance=1e-6)
        np.testing.assert_array_equal(factor.L, [[2.0]])

    def test_larger_diagonal_first(self):
        factor = dense_pivoted_cholesky(np.diag([1.0, 9.0]), max_rank=2, tolerance=1e-6)
        assert list(factor.pivots) == [1, 0]
        np.testing.assert_array_equal(factor.L, [[3.0, 0.0], [0.0, 1.0]])

    def test_not_psd(self):
        with pytest.raises(InvalidKernelError):
            dense_pivoted_cholesky(np.diag([1.0, -1.0]), max_rank=2, tolerance=1e-6)

    def test_negative_residual_is_clamped(self):
        # 第一步更新后 A[1,1] = -0.1
        K = np.array([[1.0, 1.0, 0.0], [1.0, 0.9, 0.3], [0.0, 0.3, 0.5]])
        factor = dense_pivoted_cholesky(K, max_rank=3, tolerance=0.0)
        assert list(factor.pivots) == [0, 2]
        assert factor.stop_reason is StopReason.TOLERANCE_MET
        np.testing.assert_array_equal(factor.residual_diag, np.zeros(3))

    def test_negative_residual_without_clamp(self):
        K = np.array([[1.0, 1.0, 0.0], [1.0, 0.9, 0.3], [0.0, 0.3, 0.5]])
        with pytest.raises(InvalidKernelError):
            dense_pivoted_cholesky(K, max_rank=3, tolerance=0.0, clamp_negative=False)

    def test_matches_lazy_factor(self, rng):
        spec = KernelSpec(family=KernelFamily.MATERN52, lengthscale=0.4)
        X = PointSet(rng.random((20, 3)))
        lazy, _ = _decompose(spec, X, 8)
        dense = dense_pivoted_cholesky(dense_gram(spec, X), 8, 1e-6)
        np.testing.assert_array_equal(dense.permutation, lazy.permutation)
        np.testing.assert_allclose(dense.L, lazy.L, rtol=0, atol=1e-10)
        np.testing.assert_allclose(dense.residual_diag, lazy.residual_diag, rtol=0, atol=1e-10)


class TestQRFactor:

    def test_identity_features(self):
        R = qr_factor_oracle(np.eye(2), [0, 1])
        np.testing.assert_array_equal(R, np.eye(2))

    def test_single_row(self):
        R = qr_factor_oracle(np.array([[3.0]]), [0])
        np.testing.assert_array_equal(R, [[3.0]])

    def test_linear_kernel_identity(self, rng):
        spec = KernelSpec(family=KernelFamily.LINEAR)
        X = PointSet(rng.normal(size=(8, 4)))
        factor, _ = _decompose(spec, X, 4)
        R = qr_factor_oracle(explicit_features(spec, X), factor.permutation)
        assert qr_identity_deviation(R, factor) <= 1e-8
        np.testing.assert_allclose(np.tril(R[:, :4].T), R[:, :4].T, atol=1e-12)
        assert np.all(np.diag(R[:, :4]) > 0)

    def test_degenerate_feature(self):
        with pytest.raises(DegenerateFeatureError):
            gram_schmidt_basis(np.array([[1.0, 0.0], [2.0, 0.0]]), [0, 1])

    def test_basis_is_orthonormal(self, rng):
        basis = gram_schmidt_basis(rng.normal(size=(6, 5)), [3, 1, 4])
        assert basis.orthonormality_error() <= 1e-10


class TestResidualChecks:

    def test_base_case_is_exact(self, rbf, random_points):
        factor, _ = _decompose(rbf, random_points, 0)
        assert residual_identity_check(rbf, random_points, factor) == 0.0

    def test_rank_one_instance(self, rbf):
        X = PointSet([[0.5, 0.5]] * 4)
        factor, _ = _decompose(rbf, X, 1)
        assert residual_identity_check(rbf, X, factor) == 0.0

    def test_random_instance(self, rng):
        spec = KernelSpec(family=KernelFamily.RBF, lengthscale=0.3)
        X = PointSet(rng.random((40, 2)))
        factor, _ = _decompose(spec, X, 10)
        assert residual_identity_check(spec, X, factor) <= 1e-8

    def test_full_rank_metrics(self):
        spec = KernelSpec(family=KernelFamily.MATERN12, lengthscale=0.5)
        X = PointSet(np.random.default_rng(11).random((12, 2)))
        gram = dense_gram(spec, X)
        factor, _ = _decompose(spec, X, 12, tolerance=0.0)
        metrics = residual_matrix_metrics(gram, factor)
        bound = 1e-8 * gram.trace
        assert abs(metrics.trace_error) <= bound
        assert metrics.frobenius_error <= bound
        assert abs(metrics.min_eigenvalue) <= bound

    def test_rank_zero_metrics(self, rbf, random_points):
        gram = dense_gram(rbf, random_points)
        factor, _ = _decompose(rbf, random_points, 0)
        metrics = residual_matrix_metrics(gram, factor)
        assert metrics.trace_error == pytest.approx(gram.trace)
        assert metrics.frobenius_error == pytest.approx(np.linalg.norm(gram.matrix))

    def test_trace_identity_mid_decomposition(self, rbf, random_points):
        gram = dense_gram(rbf, random_points)
        factor, _ = _decompose(rbf, random_points, 6)
        metrics = residual_matrix_metrics(gram, factor)
        assert metrics.trace_error == pytest.approx(factor.residual_trace, rel=1e-8)
        assert metrics.min_eigenvalue >= -1e-8 * gram.trace


class TestProjectionCoefficients:

    def test_orthonormal_rows(self, linear):
        Phi = np.eye(3)
        factor, _ = _decompose(linear, PointSet(Phi), 3)
        basis = gram_schmidt_basis(Phi, factor.pivots)
        assert projection_coefficient_check(Phi, basis, factor) == 0.0

    def test_single_point(self, linear):
        X = PointSet([[3.0, 4.0]])
        factor, _ = _decompose(linear, X, 1)
        Phi = explicit_features(linear, X)
        basis = gram_schmidt_basis(Phi, factor.pivots)
        assert factor.L[0, 0] == 5.0
        assert projection_coefficient_check(Phi, basis, factor) <= 1e-14

    def test_random_polynomial(self, rng):
        spec = KernelSpec(family=KernelFamily.POLYNOMIAL, degree=2, offset=1.0)
        X = PointSet(rng.random((15, 2)))
        factor, _ = _decompose(spec, X, 6)
        Phi = explicit_features(spec, X)
        basis = gram_schmidt_basis(Phi, factor.pivots)
        assert projection_coefficient_check(Phi, basis, factor) <= 1e-8


class TestSequences:

    def test_identical(self):
        comparison = compare_sequences([3, 1, 2], [3, 1, 2])
        assert comparison.identical
        assert comparison.common_prefix == 3
        assert comparison.overlap_fraction == 1.0

    def test_divergence(self):
        comparison = compare_sequences([1, 0], [1, 0, 2])
        assert comparison.common_prefix == 2
        assert comparison.divergence_step == 3
        assert comparison.overlap_fraction == pytest.approx(2 / 3)

    def test_empty(self):
        assert compare_sequences([], []).identical


class TestLinearDependence:

    def test_subspace_and_pointwise_differ(self):
        spec, X, dependent = linear_dependence_fixture()
        gram = dense_gram(spec, X)

        subspace = subspace_fps(gram, 3, 1e-6)
        assert subspace.indices == [1, 0]

        residual = subspace_distances(gram, subspace.indices)
        assert abs(residual[dependent]) < 1e-10

        pointwise = pointwise_fps(gram, 3, seed_index=subspace.indices[0])
        assert pointwise.indices == [1, 0, 2]
        assert pointwise.distances[2] == pytest.approx(0.8)
        assert pointwise.distances[2] > 0.1

    def test_lazy_agrees_with_subspace(self):
        spec, X, _ = linear_dependence_fixture()
        factor, _ = _decompose(spec, X, 3)
        assert list(factor.pivots) == [1, 0]
        assert factor.residual_diag.max() < 1e-10
