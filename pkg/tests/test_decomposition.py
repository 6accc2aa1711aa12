"""
惰性主元Cholesky分解测试
"""

import math

import numpy as np
import pytest

import pivchol.decomposition as decomposition_module
from pivchol.decomposition import (
    DecompositionConfig,
    StopReason,
    TRACE_COLUMNS,
    pivoted_cholesky,
    factor_times_transpose_diag,
    unpermute,
    expected_eval_count,
    summarize,
)
from pivchol.errors import InvalidKernelError, KernelArgumentError
from pivchol.kernels import KernelFamily, KernelSpec, PointSet, EvalCounter, eval_cross, eval_diag


def _run(spec, points, max_rank, tolerance=1e-6, clamp_negative=True, counter=None):
    config = DecompositionConfig(max_rank=max_rank, tolerance=tolerance, clamp_negative=clamp_negative)
    return pivoted_cholesky(spec, PointSet(points), config, counter=counter)


class TestConfig:

    def test_negative_rank_rejected(self):
        with pytest.raises(KernelArgumentError):
            DecompositionConfig(max_rank=-1)

    def test_negative_tolerance_rejected(self):
        with pytest.raises(KernelArgumentError):
            DecompositionConfig(max_rank=1, tolerance=-1e-3)


class TestSmallCases:

    def test_single_point(self):
        spec = KernelSpec(family=KernelFamily.RBF, variance=4.0)
        factor, trace = _run(spec, [[0.3, 0.1]], max_rank=5)
        assert factor.rank == 1
        assert factor.L[0, 0] == 2.0
        assert factor.stop_reason is StopReason.REACHED_MAX_RANK
        assert trace.residual_traces == [0.0]

    def test_three_identical_points_stop_after_one_step(self, rbf):
        factor, trace = _run(rbf, [[1.0, 1.0]] * 3, max_rank=3)
        assert factor.rank == 1
        assert factor.stop_reason is StopReason.TOLERANCE_MET
        assert len(trace.to_frame()) == 1
        assert np.all(factor.residual_diag == 0.0)

    def test_zero_pivot_stops_even_with_zero_tolerance(self, rbf):
        factor, _ = _run(rbf, [[0.0]] * 4, max_rank=4, tolerance=0.0)
        assert factor.rank == 1
        assert factor.stop_reason is StopReason.TOLERANCE_MET

    def test_larger_diagonal_pivots_first(self, linear):
        factor, _ = _run(linear, [[1.0, 0.0], [0.0, 3.0]], max_rank=2, tolerance=0.0)
        assert list(factor.pivots) == [1, 0]
        np.testing.assert_array_equal(factor.L, [[3.0, 0.0], [0.0, 1.0]])

    def test_tolerance_is_strict(self, linear):
        points = [[2.0, 0.0], [0.0, 1.0]]
        at_threshold, _ = _run(linear, points, max_rank=2, tolerance=1.0)
        above_threshold, _ = _run(linear, points, max_rank=2, tolerance=1.0 + 1e-9)
        assert at_threshold.rank == 2
        assert above_threshold.rank == 1
        assert above_threshold.stop_reason is StopReason.TOLERANCE_MET

    def test_max_rank_clamped_to_n(self):
        spec = KernelSpec(family=KernelFamily.RBF, lengthscale=1.0)
        factor, _ = _run(spec, [[0.0], [5.0], [10.0]], max_rank=10)
        assert factor.rank == 3
        assert factor.stop_reason is StopReason.REACHED_MAX_RANK

    def test_rank_zero(self, rbf, random_points):
        factor, trace = pivoted_cholesky(rbf, random_points, DecompositionConfig(max_rank=0))
        assert factor.L.shape == (30, 0)
        assert factor.stop_reason is StopReason.REACHED_MAX_RANK
        frame = trace.to_frame()
        assert list(frame.columns) == TRACE_COLUMNS
        assert len(frame) == 1
        assert frame.loc[0, 'step'] == 0
        assert frame.loc[0, 'residual_trace'] == 30.0
        assert frame['pivot_index'].isna().all()

    def test_first_pivot_tie_goes_to_lowest_index(self, rbf, random_points):
        factor, _ = pivoted_cholesky(rbf, random_points, DecompositionConfig(max_rank=1))
        assert factor.pivots[0] == 0


class TestFactorInvariants:

    def test_column_major_storage(self, rbf, random_points):
        factor, _ = pivoted_cholesky(rbf, random_points, DecompositionConfig(max_rank=8))
        assert factor.L.flags.f_contiguous

    def test_permutation_prefix_is_pivots(self, rbf, random_points):
        factor, _ = pivoted_cholesky(rbf, random_points, DecompositionConfig(max_rank=8))
        assert sorted(factor.permutation) == list(range(30))
        assert len(set(factor.pivots)) == factor.rank

    def test_lower_triangular_in_permuted_order(self, rbf, random_points):
        factor, _ = pivoted_cholesky(rbf, random_points, DecompositionConfig(max_rank=8))
        upper = np.triu(factor.L[:factor.rank, :factor.rank], k=1)
        assert np.all(upper == 0.0)
        assert np.all(factor.pivot_diagonal() > 0)

    def test_explained_plus_residual_equals_diagonal(self, rbf, random_points):
        factor, _ = pivoted_cholesky(rbf, random_points, DecompositionConfig(max_rank=10))
        diag = eval_diag(rbf, random_points)[factor.permutation]
        total = factor_times_transpose_diag(factor) + factor.residual_diag
        np.testing.assert_allclose(total, diag, atol=1e-12)

    def test_residual_trace_nonincreasing(self, rbf, random_points):
        _, trace = pivoted_cholesky(rbf, random_points, DecompositionConfig(max_rank=20, tolerance=0.0))
        values = [trace.initial_trace] + trace.residual_traces
        assert all(b <= a for a, b in zip(values, values[1:]))

    def test_pivot_values_nonincreasing(self, rbf, random_points):
        _, trace = pivoted_cholesky(rbf, random_points, DecompositionConfig(max_rank=20))
        values = trace.pivot_values
        assert all(b <= a * (1 + 1e-12) for a, b in zip(values, values[1:]))

    def test_full_rank_reproduces_gram(self):
        spec = KernelSpec(family=KernelFamily.MATERN12, lengthscale=0.3)
        X = PointSet(np.random.default_rng(3).random((15, 2)))
        factor, _ = pivoted_cholesky(spec, X, DecompositionConfig(max_rank=15, tolerance=0.0))
        L = unpermute(factor)
        np.testing.assert_allclose(L @ L.T, eval_cross(spec, X, X), atol=1e-12)

    def test_unpermute_places_rows(self, rbf, random_points):
        factor, _ = pivoted_cholesky(rbf, random_points, DecompositionConfig(max_rank=5))
        L = unpermute(factor)
        for m in range(factor.n):
            np.testing.assert_array_equal(L[factor.permutation[m]], factor.L[m])


class TestEvalCounting:

    def test_closed_form(self):
        assert expected_eval_count(1000, 50)['total_evals'] == 49725
        assert expected_eval_count(10, 0) == {'diag_evals': 10, 'pair_evals': 0, 'total_evals': 10}

    def test_counter_matches_closed_form(self, rbf, random_points):
        counter = EvalCounter()
        factor, trace = pivoted_cholesky(rbf, random_points, DecompositionConfig(max_rank=7),
                                         counter=counter)
        assert counter.snapshot() == expected_eval_count(30, 7)
        assert trace.steps[-1].kernel_evals == counter.pair_evals
        assert [s.kernel_evals for s in trace.steps] == [
            sum(30 - j for j in range(1, m + 1)) for m in range(1, 8)]

    def test_early_stop_counts_completed_steps_only(self, rbf):
        counter = EvalCounter()
        factor, _ = _run(rbf, [[1.0, 1.0]] * 3, max_rank=3, counter=counter)
        assert counter.total == expected_eval_count(3, factor.rank)['total_evals'] == 5


class TestNonPSD:

    def test_negative_initial_diagonal(self, rbf, monkeypatch):
        monkeypatch.setattr(decomposition_module, "eval_diag",
                            lambda spec, X, counter=None: np.array([1.0, -0.5]))
        with pytest.raises(InvalidKernelError):
            _run(rbf, [[0.0], [1.0]], max_rank=2)

    def test_non_finite_diagonal(self, rbf, monkeypatch):
        monkeypatch.setattr(decomposition_module, "eval_diag",
                            lambda spec, X, counter=None: np.array([1.0, np.inf]))
        with pytest.raises(InvalidKernelError):
            _run(rbf, [[0.0], [1.0]], max_rank=2)

    def test_negative_selected_pivot(self, rbf, monkeypatch):
        # |k(x1, x2)| > 1 时第二步残差为 1 - 4 = -3
        monkeypatch.setattr(decomposition_module, "eval_cross",
                            lambda spec, A, B, counter=None: np.full((len(A), 1), 2.0))
        with pytest.raises(InvalidKernelError):
            _run(rbf, [[0.0], [1.0]], max_rank=2, clamp_negative=False)

    def test_clamping_turns_negative_residual_into_stop(self, rbf, monkeypatch):
        monkeypatch.setattr(decomposition_module, "eval_cross",
                            lambda spec, A, B, counter=None: np.full((len(A), 1), 2.0))
        factor, _ = _run(rbf, [[0.0], [1.0]], max_rank=2, clamp_negative=True)
        assert factor.rank == 1
        assert factor.stop_reason is StopReason.TOLERANCE_MET


def test_summary_fields(rbf, random_points):
    factor, trace = pivoted_cholesky(rbf, random_points, DecompositionConfig(max_rank=3))
    summary = summarize(factor, trace)
    assert summary['rank'] == 3
    assert summary['stop_reason'] == "ReachedMaxRank"
    assert summary['initial_trace'] == pytest.approx(30.0)
    assert math.isclose(summary['residual_trace'], factor.residual_trace)
