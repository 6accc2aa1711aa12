"""
参考实现校验套件
在随机小规模实例上比较惰性分解与稠密参考实现，生成逐项检查的JSON报告
"""

import logging
from dataclasses import dataclass, asdict
from typing import List, Dict, Any, Optional

import numpy as np

from .decomposition import DecompositionConfig, StopReason, pivoted_cholesky, expected_eval_count
from .errors import PivCholError, KernelArgumentError, OracleDegeneracyError
from .kernels import KernelFamily, KernelSpec, PointSet, EvalCounter, eval_diag, explicit_features
from .oracles import (
    DEFAULT_ORACLE_CAP,
    dense_gram,
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
from .data import check_seed, min_pairwise_distance, load_points, source_from_dict
from .serialization import load_factor

logger = logging.getLogger(__name__)

# 最小两两距离低于该值的实例进入并列套件
TIE_DISTANCE = 1e-3

EQUALITY_FAMILIES = [
    KernelFamily.RBF,
    KernelFamily.MATERN12,
    KernelFamily.MATERN32,
    KernelFamily.MATERN52,
    KernelFamily.LINEAR,
]

# 阈值
LEMMA_TOLERANCE = 1e-8
FACTOR_TOLERANCE = 1e-10
QR_TOLERANCE = 1e-8
TRACE_TOLERANCE = 1e-8
PSD_TOLERANCE = 1e-8
VOLUME_TOLERANCE = 1e-8
VOLUME_MAX_RANK = 12


@dataclass
class CheckResult:
    name: str
    suite: str
    instance_seed: Optional[int]
    deviation: float
    threshold: float
    passed: bool


@dataclass
class VerificationInstance:
    seed: int
    spec: KernelSpec
    X: PointSet
    max_rank: int
    tolerance: float


def _check(name: str, suite: str, seed: Optional[int], deviation: float, threshold: float,
           passed: Optional[bool] = None) -> CheckResult:
    deviation = float(deviation)
    if passed is None:
        # NaN 视为失败
        passed = bool(deviation <= threshold)
    return CheckResult(name, suite, seed, deviation, float(threshold), bool(passed))


def route_instance(X: PointSet) -> str:
    """含近似重复点的实例走并列套件，其余走相等性套件"""
    return "tie" if min_pairwise_distance(X) < TIE_DISTANCE else "equality"


def random_instance(seed: int, max_n: int, max_rank: int,
                    families: Optional[List[KernelFamily]] = None) -> VerificationInstance:
    """生成一个随机实例（点数、维数、核函数、秩都由种子决定）

    点在单位立方体内均匀分布，重抽直到最小两两距离不小于 1e-3。
    """
    if max_n < 1 or max_rank < 1:
        raise KernelArgumentError(f"max_n 和 max_rank 必须为正，当前为{max_n}, {max_rank}")
    families = families or EQUALITY_FAMILIES
    rng = np.random.default_rng(check_seed(seed))

    n = int(rng.integers(max(1, max_n // 2), max_n + 1))
    dim = int(rng.integers(2, 5))
    family = families[int(rng.integers(len(families)))]
    lengthscale = float(rng.uniform(0.15, 0.6)) * np.sqrt(dim)

    points = rng.random((n, dim))
    for _ in range(20):
        if n < 2 or min_pairwise_distance(PointSet(points)) >= TIE_DISTANCE:
            break
        points = rng.random((n, dim))

    if family is KernelFamily.POLYNOMIAL:
        spec = KernelSpec(family=family, degree=int(rng.integers(2, 4)), offset=1.0)
    elif family is KernelFamily.LINEAR:
        spec = KernelSpec(family=family)
    else:
        spec = KernelSpec(family=family, lengthscale=lengthscale)

    X = PointSet(points)
    max_diag = float(np.max(eval_diag(spec, X)))
    return VerificationInstance(
        seed=seed,
        spec=spec,
        X=X,
        max_rank=min(n, int(rng.integers(1, max_rank + 1))),
        tolerance=1e-6 * max_diag,
    )


def _decompose(instance: VerificationInstance, rank: int, counter: Optional[EvalCounter] = None):
    config = DecompositionConfig(max_rank=rank, tolerance=instance.tolerance)
    return pivoted_cholesky(instance.spec, instance.X, config, counter=counter)


def equality_suite(instance: VerificationInstance, cap: int = DEFAULT_ORACLE_CAP) -> List[CheckResult]:
    """惰性分解与稠密参考实现逐项比较"""
    seed = instance.seed
    suite = "equality"
    results: List[CheckResult] = []

    counter = EvalCounter()
    factor, trace = _decompose(instance, instance.max_rank, counter=counter)
    gram = dense_gram(instance.spec, instance.X, cap=cap)
    max_diag = float(np.max(gram.diagonal))
    total_trace = gram.trace

    oracle = subspace_fps(gram, instance.max_rank, instance.tolerance)
    lazy_pivots = [int(p) for p in factor.pivots]
    mismatches = sum(a != b for a, b in zip(oracle.indices, lazy_pivots))
    mismatches += abs(len(oracle.indices) - len(lazy_pivots))
    results.append(_check("pivot_sequence_equality", suite, seed, mismatches, 0))

    if oracle.indices == lazy_pivots and lazy_pivots:
        values = np.asarray(trace.pivot_values)
        rel = np.max(np.abs(np.asarray(oracle.distances) - values)) / max_diag
    elif oracle.indices == lazy_pivots:
        rel = 0.0
    else:
        rel = np.inf
    results.append(_check("pivot_value_agreement", suite, seed, rel, LEMMA_TOLERANCE))

    lemma = 0.0
    trace_dev = 0.0
    psd_dev = 0.0
    for m in range(factor.rank + 1):
        partial, _ = _decompose(instance, m)
        lemma = max(lemma, residual_identity_check(instance.spec, instance.X, partial, gram=gram))
        metrics = residual_matrix_metrics(gram, partial)
        trace_dev = max(trace_dev, abs(metrics.trace_error - partial.residual_trace) / total_trace)
        psd_dev = max(psd_dev, -metrics.min_eigenvalue / total_trace)
    results.append(_check("residual_identity", suite, seed, lemma / max_diag, LEMMA_TOLERANCE))
    results.append(_check("trace_identity", suite, seed, trace_dev, TRACE_TOLERANCE))
    results.append(_check("psd_residual", suite, seed, max(psd_dev, 0.0), PSD_TOLERANCE))

    dense = dense_pivoted_cholesky(gram, instance.max_rank, instance.tolerance)
    if dense.L.shape == factor.L.shape and np.array_equal(dense.permutation, factor.permutation):
        diff = float(np.max(np.abs(dense.L - factor.L))) if factor.L.size else 0.0
    else:
        diff = np.inf
    results.append(_check("dense_factor_equality", suite, seed, diff, FACTOR_TOLERANCE))

    k = min(factor.rank, VOLUME_MAX_RANK)
    if k > 0:
        S = factor.pivots[:k]
        sign, logdet = np.linalg.slogdet(gram.matrix[np.ix_(S, S)])
        log_volume = 2.0 * np.sum(np.log(factor.pivot_diagonal()[:k]))
        volume_dev = abs(np.expm1(logdet - log_volume)) if sign > 0 else np.inf
    else:
        volume_dev = 0.0
    results.append(_check("determinant_volume", suite, seed, volume_dev, VOLUME_TOLERANCE))

    expected = expected_eval_count(instance.X.n, factor.rank)['total_evals']
    results.append(_check("eval_count", suite, seed, abs(counter.total - expected), 0))
    return results


def qr_suite(instance: VerificationInstance) -> List[CheckResult]:
    """显式特征核：Gram-Schmidt QR 的 Rᵀ 与 Cholesky 因子一致"""
    seed = instance.seed
    suite = "qr"
    factor, _ = _decompose(instance, instance.max_rank)
    Phi = explicit_features(instance.spec, instance.X)

    R = qr_factor_oracle(Phi, factor.permutation[:factor.rank])
    basis = gram_schmidt_basis(Phi, factor.pivots)
    return [
        _check("qr_identity", suite, seed, qr_identity_deviation(R, factor), QR_TOLERANCE),
        _check("projection_coefficients", suite, seed,
               projection_coefficient_check(Phi, basis, factor), QR_TOLERANCE),
        _check("basis_orthonormality", suite, seed, basis.orthonormality_error(), FACTOR_TOLERANCE),
    ]


def tie_suite(instance: VerificationInstance) -> List[CheckResult]:
    """并列套件只检查并列规则，不比较两种实现的距离"""
    seed = instance.seed
    suite = "tie"
    factor, _ = _decompose(instance, instance.max_rank)
    points = instance.X.points
    diag = eval_diag(instance.spec, instance.X)

    lowest = int(np.flatnonzero(diag == np.max(diag))[0])
    first = int(factor.pivots[0]) if factor.rank else lowest
    results = [_check("tie_first_pivot_lowest_index", suite, seed, int(first != lowest), 0)]

    chosen = points[factor.pivots]
    repeated = 0
    for a in range(len(chosen)):
        for b in range(a + 1, len(chosen)):
            repeated += int(np.array_equal(chosen[a], chosen[b]))
    results.append(_check("tie_duplicates_never_selected", suite, seed, repeated, 0))

    residual = np.empty(factor.n)
    residual[factor.permutation] = factor.residual_diag
    worst = 0.0
    for p in factor.pivots:
        twins = np.flatnonzero(np.all(points == points[p], axis=1))
        worst = max(worst, float(np.max(residual[twins])))
    results.append(_check("tie_duplicate_residual_zero", suite, seed,
                          worst / float(np.max(diag)), LEMMA_TOLERANCE))
    return results


def duplicate_fixture(instance: VerificationInstance) -> VerificationInstance:
    """在实例后追加前两个点的副本，构造并列实例"""
    points = instance.X.points
    extra = points[:min(2, len(points))]
    X = PointSet(np.vstack([points, extra]))
    return VerificationInstance(instance.seed, instance.spec, X,
                                min(X.n, instance.max_rank), instance.tolerance)


def dependence_checks() -> List[CheckResult]:
    """线性相关构造：子空间残差为0，但到最近已选点的距离不为0"""
    suite = "fixture"
    spec, X, dependent = linear_dependence_fixture()
    gram = dense_gram(spec, X)
    factor, _ = pivoted_cholesky(spec, X, DecompositionConfig(max_rank=X.n, tolerance=1e-6))

    residual = np.empty(factor.n)
    residual[factor.permutation] = factor.residual_diag
    pointwise = pointwise_fps(gram, X.n, int(factor.pivots[0]))
    pointwise_distance = pointwise.distances[pointwise.indices.index(dependent)]
    comparison = compare_sequences(factor.pivots, pointwise.indices)

    return [
        _check("dependence_subspace_residual", suite, None, residual[dependent], 1e-10),
        # 该项要求距离大于阈值
        _check("dependence_pointwise_distance", suite, None, pointwise_distance, 0.1,
               passed=pointwise_distance > 0.1),
        _check("dependence_sequences_differ", suite, None, int(comparison.identical), 0),
    ]


def run_battery(instances: int, max_n: int, max_rank: int, seed: int,
                cap: int = DEFAULT_ORACLE_CAP, tool_version: str = "") -> Dict[str, Any]:
    """运行完整校验套件

    Args:
        instances: 随机实例个数，第 i 个实例的种子为 seed + i
        max_n: 最大点数
        max_rank: 最大秩
        seed: 基准种子
        cap: 稠密参考实现规模上限
        tool_version: 写入报告的版本号

    Returns:
        报告字典（字段顺序固定）
    """
    if instances < 0:
        raise KernelArgumentError(f"实例数不能为负，当前为{instances}")
    if max_n > cap:
        raise KernelArgumentError(f"max_n={max_n} 超过参考实现上限 {cap}")
    check_seed(seed)
    check_seed(seed + max(instances - 1, 0))

    checks: List[CheckResult] = []
    routing = {'equality': 0, 'tie': 0}
    logger.info(f"开始校验: {instances}个实例, max_n={max_n}, max_rank={max_rank}, seed={seed}")

    for i in range(instances):
        instance = random_instance(seed + i, max_n, max_rank)
        explicit = random_instance(
            seed + i, max_n, max_rank, families=[KernelFamily.LINEAR, KernelFamily.POLYNOMIAL])
        try:
            if route_instance(instance.X) == "equality":
                routing['equality'] += 1
                checks.extend(equality_suite(instance, cap=cap))
            else:
                routing['tie'] += 1
                checks.extend(tie_suite(instance))
            checks.extend(qr_suite(explicit))
            if i == 0:
                fixture = duplicate_fixture(instance)
                routing[route_instance(fixture.X)] += 1
                checks.extend(tie_suite(fixture))
        except PivCholError as e:
            logger.error(f"实例 {seed + i} 校验出错: {e}")
            checks.append(_check(type(e).__name__, "error", seed + i, np.nan, 0, passed=False))

    checks.extend(dependence_checks())

    report = {
        'tool_version': tool_version,
        'seed': seed,
        'instances': instances,
        'max_n': max_n,
        'max_rank': max_rank,
        'routing': routing,
        'checks': [],
    }
    return add_checks(report, checks)


def add_checks(report: Dict[str, Any], checks: List[CheckResult]) -> Dict[str, Any]:
    """追加检查结果并重新计算汇总字段"""
    report['checks'] = list(report.get('checks', [])) + [asdict(c) for c in checks]
    for key in ('summary', 'passed', 'first_failure'):
        report.pop(key, None)

    failures = [c for c in report['checks'] if not c['passed']]
    report['summary'] = {'total': len(report['checks']), 'failed': len(failures)}
    report['passed'] = not failures
    report['first_failure'] = failures[0] if failures else None

    if failures:
        logger.warning(f"校验未通过: {len(failures)}/{len(report['checks'])} 项失败，"
                       f"首个失败: {failures[0]['name']}")
    else:
        logger.info(f"校验通过: {len(report['checks'])} 项")
    return report


def verify_factor_file(path: str, X: Optional[PointSet] = None,
                       cap: int = DEFAULT_ORACLE_CAP) -> List[CheckResult]:
    """用重新计算校验保存的因子文件

    Args:
        path: 因子表头JSON
        X: 点集；为 None 时按表头中的数据源回显重新加载
        cap: 规模不超过上限时额外做残差恒等式检查
    """
    suite = "factor_file"
    factor, header = load_factor(path)
    if X is None:
        if not header.get('dataset'):
            raise KernelArgumentError("因子文件没有数据源回显，请用 --points 或 --synthetic 指定")
        X = load_points(source_from_dict(header['dataset']))
    if X.n != factor.n:
        raise KernelArgumentError(f"点集大小 {X.n} 与因子 n={factor.n} 不一致")

    spec = KernelSpec.from_dict(header['kernel'])
    # 因容差停止的运行在终止前已把下一个主元换到第 rank 位，重算时要走到同一步
    max_rank = factor.rank + 1 if factor.stop_reason is StopReason.TOLERANCE_MET else factor.rank
    config = DecompositionConfig(max_rank=min(max_rank, factor.n), tolerance=float(header['tolerance']),
                                 clamp_negative=bool(header['clamp_negative']))
    fresh, _ = pivoted_cholesky(spec, X, config)
    scale = float(np.max(eval_diag(spec, X)))

    pivot_mismatch = sum(a != b for a, b in zip(fresh.permutation, factor.permutation))
    results = [_check("factor_file_permutation", suite, None, pivot_mismatch, 0)]

    if fresh.L.shape == factor.L.shape:
        diff = float(np.max(np.abs(fresh.L - factor.L))) if factor.L.size else 0.0
    else:
        diff = np.inf
    results.append(_check("factor_file_L", suite, None, diff, FACTOR_TOLERANCE))

    residual_diff = float(np.max(np.abs(fresh.residual_diag - factor.residual_diag)))
    results.append(_check("factor_file_residual_diag", suite, None, residual_diff / scale, FACTOR_TOLERANCE))

    if X.n <= cap:
        try:
            lemma = residual_identity_check(spec, X, factor, cap=cap)
        except OracleDegeneracyError as e:
            logger.warning(f"跳过残差恒等式检查: {e}")
        else:
            results.append(_check("factor_file_residual_identity", suite, None,
                                  lemma / scale, LEMMA_TOLERANCE))
    return results
