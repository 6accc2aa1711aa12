"""
核函数测试
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pivchol.errors import KernelArgumentError, UnsupportedFeatureError
from pivchol.kernels import (
    KernelFamily,
    KernelSpec,
    PointSet,
    EvalCounter,
    eval_pair,
    eval_diag,
    eval_cross,
    explicit_features,
    polynomial_monomials,
)

ALL_SPECS = [
    KernelSpec(family=KernelFamily.RBF, lengthscale=0.7, variance=2.0),
    KernelSpec(family=KernelFamily.MATERN12, lengthscale=0.7),
    KernelSpec(family=KernelFamily.MATERN32, lengthscale=0.7),
    KernelSpec(family=KernelFamily.MATERN52, lengthscale=0.7, variance=0.5),
    KernelSpec(family=KernelFamily.LINEAR, variance=1.5),
    KernelSpec(family=KernelFamily.POLYNOMIAL, degree=3, offset=1.0),
]

point_sets = arrays(
    dtype=np.float64,
    shape=st.tuples(st.integers(1, 30), st.integers(1, 4)),
    elements=st.floats(min_value=-3.0, max_value=3.0, allow_nan=False, allow_infinity=False),
)


class TestKernelSpec:

    def test_family_from_string(self):
        spec = KernelSpec(family="matern32")
        assert spec.family is KernelFamily.MATERN32

    @pytest.mark.parametrize("kwargs", [
        {'family': 'rbf', 'lengthscale': 0.0},
        {'family': 'rbf', 'lengthscale': -1.0},
        {'family': 'rbf', 'variance': 0.0},
        {'family': 'polynomial', 'degree': 0},
        {'family': 'polynomial', 'offset': -1.0},
        {'family': 'cosine'},
    ])
    def test_invalid_parameters(self, kwargs):
        with pytest.raises(KernelArgumentError):
            KernelSpec(**kwargs)

    def test_dict_round_trip(self):
        spec = KernelSpec(family=KernelFamily.POLYNOMIAL, degree=3, offset=0.5, variance=2.0)
        assert KernelSpec.from_dict(spec.to_dict()) == spec


class TestPointSet:

    def test_rejects_non_finite(self):
        with pytest.raises(KernelArgumentError):
            PointSet([[0.0, np.nan]])

    def test_rejects_empty(self):
        with pytest.raises(KernelArgumentError):
            PointSet(np.zeros((0, 2)))

    def test_vector_becomes_column(self):
        X = PointSet([1.0, 2.0, 3.0])
        assert (X.n, X.dim) == (3, 1)

    def test_read_only(self):
        X = PointSet([[1.0, 2.0]])
        with pytest.raises(ValueError):
            X.points[0, 0] = 5.0


class TestClosedForms:

    def test_stationary_at_zero_distance(self):
        x = [0.3, -0.2]
        for spec in ALL_SPECS[:4]:
            assert eval_pair(spec, x, x) == spec.variance

    def test_rbf_value(self):
        spec = KernelSpec(family=KernelFamily.RBF, lengthscale=2.0)
        assert eval_pair(spec, [0.0], [2.0]) == pytest.approx(math.exp(-0.5), rel=1e-15)

    @pytest.mark.parametrize("family, expected", [
        (KernelFamily.MATERN12, math.exp(-1.0)),
        (KernelFamily.MATERN32, (1 + math.sqrt(3)) * math.exp(-math.sqrt(3))),
        (KernelFamily.MATERN52, (1 + math.sqrt(5) + 5.0 / 3.0) * math.exp(-math.sqrt(5))),
    ])
    def test_matern_values(self, family, expected):
        spec = KernelSpec(family=family, lengthscale=1.0)
        assert eval_pair(spec, [0.0, 0.0], [0.6, 0.8]) == pytest.approx(expected, rel=1e-14)

    def test_linear_and_polynomial_values(self):
        lin = KernelSpec(family=KernelFamily.LINEAR, variance=2.0)
        poly = KernelSpec(family=KernelFamily.POLYNOMIAL, degree=3, offset=0.0)
        assert eval_pair(lin, [1.0, 2.0], [3.0, 4.0]) == 22.0
        assert eval_pair(poly, [1.0], [2.0]) == 8.0

    def test_dimension_mismatch(self):
        with pytest.raises(KernelArgumentError):
            eval_pair(ALL_SPECS[0], [0.0, 1.0], [0.0])
        with pytest.raises(KernelArgumentError):
            eval_cross(ALL_SPECS[0], np.zeros((2, 2)), np.zeros((3, 3)))


class TestInvariants:

    @pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: s.family.value)
    def test_exact_symmetry(self, spec, random_points):
        K = eval_cross(spec, random_points, random_points)
        assert np.array_equal(K, K.T)

    @pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: s.family.value)
    def test_diagonal_consistency_is_bitwise(self, spec, random_points):
        K = eval_cross(spec, random_points, random_points)
        assert np.array_equal(eval_diag(spec, random_points), np.diag(K))

    @pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: s.family.value)
    def test_pair_matches_cross(self, spec, random_points):
        K = eval_cross(spec, random_points, random_points)
        X = random_points.points
        assert eval_pair(spec, X[3], X[7]) == K[3, 7]

    @settings(max_examples=40, deadline=None)
    @given(points=point_sets, index=st.integers(0, len(ALL_SPECS) - 1))
    def test_gram_is_psd(self, points, index):
        spec = ALL_SPECS[index]
        K = eval_cross(spec, points, points)
        trace = float(np.trace(K))
        assert np.linalg.eigvalsh(K)[0] >= -1e-9 * max(trace, 1.0)

    @settings(max_examples=40, deadline=None)
    @given(points=point_sets)
    def test_symmetry_property(self, points):
        for spec in ALL_SPECS:
            K = eval_cross(spec, points, points)
            assert np.array_equal(K, K.T)


class TestExplicitFeatures:

    @pytest.mark.parametrize("spec", [
        KernelSpec(family=KernelFamily.LINEAR, variance=1.5),
        KernelSpec(family=KernelFamily.POLYNOMIAL, degree=2, offset=0.0),
        KernelSpec(family=KernelFamily.POLYNOMIAL, degree=2, offset=1.0),
        KernelSpec(family=KernelFamily.POLYNOMIAL, degree=3, offset=0.5, variance=2.0),
    ], ids=["linear", "poly2", "poly2-offset", "poly3-offset"])
    def test_features_reproduce_gram(self, spec, rng):
        X = PointSet(rng.normal(size=(12, 3)))
        Phi = explicit_features(spec, X)
        K = eval_cross(spec, X, X)
        assert np.max(np.abs(Phi @ Phi.T - K)) <= 1e-12 * np.max(np.diag(K))

    def test_homogeneous_polynomial_keeps_top_degree_only(self):
        monomials = list(polynomial_monomials(dim=2, degree=2, with_offset=False))
        assert monomials == [((0, 0), 2), ((0, 1), 2), ((1, 1), 2)]

    def test_graded_lexicographic_order(self):
        degrees = [k for _, k in polynomial_monomials(dim=3, degree=2, with_offset=True)]
        assert degrees == sorted(degrees)
        assert len(degrees) == 1 + 3 + 6

    @pytest.mark.parametrize("spec", ALL_SPECS[:4], ids=lambda s: s.family.value)
    def test_stationary_has_no_explicit_features(self, spec):
        with pytest.raises(UnsupportedFeatureError):
            explicit_features(spec, [[0.0, 1.0]])


class TestEvalCounter:

    def test_counts_pairs_and_diagonal(self, random_points):
        counter = EvalCounter()
        spec = ALL_SPECS[0]
        eval_cross(spec, random_points.points[:3], random_points.points[:4], counter=counter)
        eval_diag(spec, random_points, counter=counter)
        eval_pair(spec, [0.0, 0.0], [1.0, 1.0], counter=counter)
        assert counter.snapshot() == {'diag_evals': 30, 'pair_evals': 13, 'total_evals': 43}

    def test_empty_block_counts_nothing(self):
        counter = EvalCounter()
        K = eval_cross(ALL_SPECS[0], np.zeros((0, 2)), np.zeros((1, 2)), counter=counter)
        assert K.shape == (0, 1)
        assert counter.total == 0
