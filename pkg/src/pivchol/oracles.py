"""
稠密参考实现（oracle）
只用于小规模实例，独立于惰性分解，用来校验其主元序列、残差和因子
"""

import logging
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.linalg
from scipy.linalg import LinAlgError, LinAlgWarning

from .decomposition import CholeskyFactor, StopReason
from .errors import (
    DegenerateFeatureError,
    InvalidKernelError,
    KernelArgumentError,
    OracleDegeneracyError,
    OracleScaleError,
)
from .kernels import KernelFamily, KernelSpec, PointSet, EvalCounter, eval_cross

logger = logging.getLogger(__name__)

DEFAULT_ORACLE_CAP = 2000
SYMMETRY_TOLERANCE = 1e-14
DEGENERATE_NORM = 1e-12


@dataclass
class GramMatrix:
    """稠密核矩阵 K = ΦΦᵀ"""
    matrix: np.ndarray

    def __post_init__(self):
        K = np.array(self.matrix, dtype=np.float64)
        if K.ndim != 2 or K.shape[0] != K.shape[1]:
            raise KernelArgumentError(f"Gram矩阵必须是方阵，当前形状为{K.shape}")
        if not np.all(np.isfinite(K)):
            raise InvalidKernelError("Gram矩阵含非有限值")
        if K.size and np.max(np.abs(K - K.T)) > SYMMETRY_TOLERANCE:
            raise KernelArgumentError("Gram矩阵不对称")
        K.setflags(write=False)
        self.matrix = K

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def diagonal(self) -> np.ndarray:
        return np.diag(self.matrix)

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix))

    def min_eigenvalue(self) -> float:
        return float(scipy.linalg.eigvalsh(self.matrix)[0])

    def is_psd(self) -> bool:
        """λ_min ≥ -1e-9 · trace"""
        return self.min_eigenvalue() >= -1e-9 * max(self.trace, 0.0)


@dataclass
class OrthonormalBasis:
    """Gram-Schmidt 正交基，vectors 的每一列是一个基向量 e_j"""
    vectors: np.ndarray
    residual_norms: List[float] = field(default_factory=list)

    @property
    def size(self) -> int:
        return self.vectors.shape[1]

    def orthonormality_error(self) -> float:
        """max |⟨e_i, e_j⟩ - δ_ij|"""
        if self.size == 0:
            return 0.0
        gram = self.vectors.T @ self.vectors
        return float(np.max(np.abs(gram - np.eye(self.size))))


@dataclass
class PivotSequence:
    """主元序列（原始下标）及每一步的平方距离"""
    indices: List[int] = field(default_factory=list)
    distances: List[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.indices)

    def is_nonincreasing(self, start: int = 0) -> bool:
        tail = self.distances[start:]
        return all(b <= a for a, b in zip(tail, tail[1:]))


@dataclass
class ResidualMetrics:
    trace_error: float
    frobenius_error: float
    min_eigenvalue: float


@dataclass
class SamplingComparison:
    """两种主元序列的一致程度"""
    common_prefix: int
    overlap_fraction: float
    divergence_step: Optional[int]

    @property
    def identical(self) -> bool:
        return self.divergence_step is None


GramLike = Union[GramMatrix, np.ndarray]


def _as_gram(K: GramLike) -> GramMatrix:
    return K if isinstance(K, GramMatrix) else GramMatrix(K)


def dense_gram(spec: KernelSpec, X: PointSet, cap: int = DEFAULT_ORACLE_CAP,
               counter: Optional[EvalCounter] = None) -> GramMatrix:
    """构造完整核矩阵（与转置取平均以保证对称）

    Raises:
        OracleScaleError: N 超过参考实现规模上限
    """
    if not isinstance(X, PointSet):
        X = PointSet(X)
    if X.n > cap:
        raise OracleScaleError(f"参考实现最多支持{cap}个点，当前N={X.n}")
    K = eval_cross(spec, X, X, counter=counter)
    return GramMatrix(0.5 * (K + K.T))


def _solve_fresh(K_SS: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    # 不加任何正则；病态直接报错
    with warnings.catch_warnings():
        warnings.simplefilter("error", LinAlgWarning)
        try:
            return scipy.linalg.solve(K_SS, rhs, assume_a='sym')
        except (LinAlgError, LinAlgWarning) as e:
            raise OracleDegeneracyError(f"K_SS 数值奇异 (|S|={K_SS.shape[0]}): {e}")


def subspace_distances(K: GramLike, selected: Sequence[int]) -> np.ndarray:
    """每个点到已选特征张成子空间的平方距离

    dist²(i) = K_ii - k_iS (K_SS)⁻¹ k_Si，每个候选点单独做一次稠密求解；
    已选点的距离记为0。
    """
    K = _as_gram(K).matrix
    S = np.asarray(selected, dtype=np.int64)
    dist = np.diag(K).copy()
    if S.size == 0:
        return dist

    K_SS = K[np.ix_(S, S)]
    chosen = set(int(s) for s in S)
    for i in range(K.shape[0]):
        if i in chosen:
            dist[i] = 0.0
            continue
        k_Si = K[S, i]
        dist[i] = K[i, i] - k_Si @ _solve_fresh(K_SS, k_Si)
    return dist


def subspace_fps(K: GramLike, max_rank: int, tolerance: float) -> PivotSequence:
    """子空间最远点采样（贪心选择到已选子空间距离最大的点）

    并列时取原始下标最小者；最大距离严格小于 tolerance 时停止。

    Raises:
        OracleDegeneracyError: K_SS 数值奇异
    """
    gram = _as_gram(K)
    rank = min(int(max_rank), gram.n)
    sequence = PivotSequence()

    for _ in range(rank):
        dist = subspace_distances(gram, sequence.indices)
        best, best_value = -1, -np.inf
        for i in range(gram.n):
            if i in sequence.indices:
                continue
            if dist[i] > best_value:
                best, best_value = i, dist[i]
        if best_value < tolerance or best_value <= 0.0:
            break
        sequence.indices.append(best)
        sequence.distances.append(float(best_value))

    logger.debug(f"子空间FPS: {len(sequence)}个主元 {sequence.indices}")
    return sequence


def pointwise_fps(K: GramLike, max_rank: int, seed_index: int) -> PivotSequence:
    """经典最远点采样：到最近已选点的核度量距离最大者

    d²(x, s) = K_xx + K_ss - 2K_xs；种子点的距离记为 K_ss（到零向量的平方距离）。
    """
    gram = _as_gram(K)
    K = gram.matrix
    n = gram.n
    if not 0 <= seed_index < n:
        raise KernelArgumentError(f"种子下标越界: {seed_index} (N={n})")
    rank = min(int(max_rank), n)
    sequence = PivotSequence()
    if rank == 0:
        return sequence

    diag = np.diag(K)
    sequence.indices.append(int(seed_index))
    sequence.distances.append(float(K[seed_index, seed_index]))
    min_dist = np.maximum(diag + diag[seed_index] - 2.0 * K[:, seed_index], 0.0)
    min_dist[seed_index] = -np.inf

    for _ in range(rank - 1):
        nxt = int(np.argmax(min_dist))
        sequence.indices.append(nxt)
        sequence.distances.append(float(min_dist[nxt]))
        candidate = np.maximum(diag + diag[nxt] - 2.0 * K[:, nxt], 0.0)
        min_dist = np.minimum(min_dist, candidate)
        min_dist[sequence.indices] = -np.inf

    return sequence


def dense_pivoted_cholesky(K: GramLike, max_rank: int, tolerance: float,
                           clamp_negative: bool = True) -> CholeskyFactor:
    """教科书式稠密主元Cholesky（对完整矩阵做对称置换和 Schur 补更新）

    Raises:
        InvalidKernelError: 初始对角元或选中主元低于 -1e-9·trace
    """
    gram = _as_gram(K)
    A = np.array(gram.matrix, dtype=np.float64)
    n = gram.n
    rank = min(int(max_rank), n)
    floor = -1e-9 * max(gram.trace, 0.0)
    perm = np.arange(n)
    stop_reason = StopReason.REACHED_MAX_RANK
    completed = rank

    if np.any(gram.diagonal < floor):
        raise InvalidKernelError("初始对角线出现负值，矩阵不是半正定的")

    for m in range(rank):
        d = np.diag(A)
        j = m + int(np.argmax(d[m:]))
        if j != m:
            A[:, [m, j]] = A[:, [j, m]]
            A[[m, j], :] = A[[j, m], :]
            perm[[m, j]] = perm[[j, m]]

        pivot = A[m, m]
        if pivot < floor:
            raise InvalidKernelError(f"第{m + 1}步主元为负 ({pivot:.3e})，矩阵不是半正定的")
        if pivot < tolerance or pivot <= 0.0:
            stop_reason = StopReason.TOLERANCE_MET
            completed = m
            break

        A[m, m] = np.sqrt(pivot)
        A[m + 1:, m] /= A[m, m]
        A[m + 1:, m + 1:] -= np.outer(A[m + 1:, m], A[m + 1:, m])
        if clamp_negative:
            tail = np.arange(m + 1, n)
            A[tail, tail] = np.maximum(A[tail, tail], 0.0)

    L = np.tril(A)[:, :completed]
    residual = np.diag(A).copy()
    residual[:completed] = 0.0
    if clamp_negative:
        residual = np.maximum(residual, 0.0)

    return CholeskyFactor(
        L=np.asfortranarray(L),
        permutation=perm,
        residual_diag=residual,
        stop_reason=stop_reason,
    )


def gram_schmidt_basis(Phi: np.ndarray, pivots: Sequence[int]) -> OrthonormalBasis:
    """对主元特征做显式 Gram-Schmidt（带一次重正交化）

    r_m = φ(x_pm) - Σ⟨φ(x_pm), e_j⟩ e_j，e_m = r_m / ‖r_m‖

    Raises:
        DegenerateFeatureError: ‖r_m‖ < 1e-12
    """
    Phi = np.asarray(Phi, dtype=np.float64)
    vectors = np.zeros((Phi.shape[1], len(pivots)))
    norms: List[float] = []

    for m, p in enumerate(pivots):
        r = Phi[int(p)].copy()
        E = vectors[:, :m]
        for _ in range(2):
            r -= E @ (E.T @ r)
        norm = float(np.linalg.norm(r))
        if norm < DEGENERATE_NORM:
            raise DegenerateFeatureError(f"第{m + 1}个主元 (下标{p}) 的特征与已选子空间线性相关，残差范数={norm:.3e}")
        vectors[:, m] = r / norm
        norms.append(norm)

    return OrthonormalBasis(vectors=vectors, residual_norms=norms)


def _full_order(pivots: Sequence[int], n: int) -> np.ndarray:
    order = [int(p) for p in pivots]
    if len(order) < n:
        chosen = set(order)
        order += [i for i in range(n) if i not in chosen]
    return np.asarray(order, dtype=np.int64)


def qr_factor_oracle(Phi: np.ndarray, pivots: Sequence[int]) -> np.ndarray:
    """Φᵀ（列按主元顺序排列）的 Gram-Schmidt QR 分解中的 R

    pivots 可以是完整置换，也可以只给前 m 个主元（其余按原始顺序补齐）。

    Returns:
        m×N 的 R，前 m 列为对角元为正的上三角块
    """
    Phi = np.asarray(Phi, dtype=np.float64)
    m = len(pivots)
    if m == 0:
        return np.zeros((0, Phi.shape[0]))
    order = _full_order(pivots, Phi.shape[0])
    basis = gram_schmidt_basis(Phi, order[:m])
    return basis.vectors.T @ Phi[order].T


def qr_identity_deviation(R: np.ndarray, factor: CholeskyFactor) -> float:
    """max |Rᵀ - L| 在已选主元块上"""
    m = factor.rank
    if m == 0:
        return 0.0
    return float(np.max(np.abs(R[:m, :m].T - factor.L[:m, :m])))


def _original_order_residuals(factor: CholeskyFactor) -> np.ndarray:
    d = np.empty(factor.n)
    d[factor.permutation] = factor.residual_diag
    return d


def residual_identity_check(spec: KernelSpec, X: PointSet, factor: CholeskyFactor,
                            gram: Optional[GramMatrix] = None,
                            cap: int = DEFAULT_ORACLE_CAP) -> float:
    """残差对角线 d[i] 与到已选子空间的平方距离的最大偏差"""
    if gram is None:
        gram = dense_gram(spec, X, cap=cap)
    dist = subspace_distances(gram, factor.pivots)
    return float(np.max(np.abs(_original_order_residuals(factor) - dist)))


def residual_matrix_metrics(K: GramLike, factor: CholeskyFactor) -> ResidualMetrics:
    """稠密残差矩阵 E = K - LLᵀ（置换后顺序）的迹、F范数和最小特征值"""
    K = _as_gram(K).matrix
    perm = factor.permutation
    E = K[np.ix_(perm, perm)] - factor.L @ factor.L.T
    E = 0.5 * (E + E.T)
    return ResidualMetrics(
        trace_error=float(np.trace(E)),
        frobenius_error=float(np.linalg.norm(E, 'fro')),
        min_eigenvalue=float(scipy.linalg.eigvalsh(E)[0]) if E.size else 0.0,
    )


def projection_coefficient_check(Phi: np.ndarray, basis: OrthonormalBasis,
                                 factor: CholeskyFactor) -> float:
    """max |L_ij - ⟨φ(x_i), e_j⟩|"""
    m = factor.rank
    if m == 0:
        return 0.0
    if basis.size < m:
        raise KernelArgumentError(f"正交基只有{basis.size}个向量，少于因子秩{m}")
    coefficients = np.asarray(Phi, dtype=np.float64)[factor.permutation] @ basis.vectors[:, :m]
    return float(np.max(np.abs(factor.L - coefficients)))


def compare_sequences(a: Sequence[int], b: Sequence[int]) -> SamplingComparison:
    """最长公共前缀、集合重叠比例、首次分歧步（从1开始；完全相同时为None）"""
    a = [int(i) for i in a]
    b = [int(i) for i in b]
    prefix = 0
    for x, y in zip(a, b):
        if x != y:
            break
        prefix += 1

    longest = max(len(a), len(b))
    overlap = len(set(a) & set(b)) / longest if longest else 1.0
    divergence = None if a == b else prefix + 1
    return SamplingComparison(common_prefix=prefix, overlap_fraction=overlap, divergence_step=divergence)


def linear_dependence_fixture() -> Tuple[KernelSpec, PointSet, int]:
    """三点线性相关构造：x3 = 0.8·(x1 + x2)

    x3 离任何一个已选点都很远，却落在 x1、x2 张成的子空间内。

    Returns:
        (线性核, 点集, 相关点下标)
    """
    X = PointSet([[1.0, 0.0], [0.0, 2.0], [0.8, 1.6]])
    return KernelSpec(family=KernelFamily.LINEAR), X, 2
