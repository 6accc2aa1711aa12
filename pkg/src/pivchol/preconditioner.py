"""
低秩预条件器与预条件共轭梯度法
求解 (K + σ²I)x = b，核矩阵只以分块矩阵向量乘的形式出现
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple, Dict, Any

import numpy as np
import scipy.linalg
from scipy.linalg import LinAlgError

from .decomposition import CholeskyFactor, unpermute
from .errors import KernelArgumentError, NumericError, SolverDivergenceError
from .kernels import KernelSpec, PointSet, EvalCounter, eval_cross

logger = logging.getLogger(__name__)

LinearOperator = Callable[[np.ndarray], np.ndarray]


class LowRankPlusDiagonal:
    """LLᵀ + σ²I 及其逆的 O(NM) 作用

    (LLᵀ + σ²I)⁻¹ v = (v - L C⁻¹ Lᵀ v) / σ²，其中 C = σ²I + LᵀL 是 M×M 矩阵，只分解一次。
    L 按原始点顺序存放。
    """

    def __init__(self, L: np.ndarray, sigma2: float):
        if not (math.isfinite(sigma2) and sigma2 > 0):
            raise KernelArgumentError(f"σ² 必须为正，当前为{sigma2}")
        self.L = np.ascontiguousarray(L, dtype=np.float64)
        self.sigma2 = float(sigma2)

        rank = self.L.shape[1]
        self._core = None
        if rank > 0:
            core = self.sigma2 * np.eye(rank) + self.L.T @ self.L
            try:
                self._core = scipy.linalg.cho_factor(core, lower=True)
            except LinAlgError as e:
                raise NumericError(f"预条件器核心矩阵分解失败 (rank={rank}): {e}")

    @property
    def n(self) -> int:
        return self.L.shape[0]

    @property
    def rank(self) -> int:
        return self.L.shape[1]

    def _check(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (self.n,):
            raise KernelArgumentError(f"向量维度不匹配: 期望({self.n},)，实际{v.shape}")
        return v

    def apply(self, v: np.ndarray) -> np.ndarray:
        """(LLᵀ + σ²I)⁻¹ v"""
        v = self._check(v)
        if self._core is None:
            return v / self.sigma2
        w = scipy.linalg.cho_solve(self._core, self.L.T @ v)
        return (v - self.L @ w) / self.sigma2

    def matvec(self, v: np.ndarray) -> np.ndarray:
        """(LLᵀ + σ²I) v"""
        v = self._check(v)
        return self.L @ (self.L.T @ v) + self.sigma2 * v

    def __call__(self, v: np.ndarray) -> np.ndarray:
        return self.apply(v)


@dataclass
class SolveReport:
    iterations: int = 0
    residual_norms: List[float] = field(default_factory=list)
    converged: bool = False
    preconditioned: bool = False
    preconditioner_rank: int = 0
    tolerance: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            'iterations': self.iterations,
            'converged': self.converged,
            'preconditioned': self.preconditioned,
            'preconditioner_rank': self.preconditioner_rank,
            'tolerance': self.tolerance,
            'final_residual': self.residual_norms[-1] if self.residual_norms else None,
            'residual_norms': list(self.residual_norms),
        }


def build_preconditioner(factor: CholeskyFactor, sigma2: float) -> LowRankPlusDiagonal:
    """由主元Cholesky因子构造预条件器（先恢复原始点顺序）"""
    precond = LowRankPlusDiagonal(unpermute(factor), sigma2)
    logger.info(f"预条件器已构造: N={precond.n}, rank={precond.rank}, σ²={sigma2:g}")
    return precond


def cg_solve(matvec: LinearOperator, b: np.ndarray, precond: Optional[LowRankPlusDiagonal] = None,
             tol: float = 1e-8, max_iter: int = 1000,
             true_residual_interval: int = 50) -> Tuple[np.ndarray, SolveReport]:
    """预条件共轭梯度法，初值 x0 = 0

    收敛判据 ‖b - Ax‖ ≤ tol·‖b‖，按每次迭代重新计算的真实残差判断。
    递推残差每 true_residual_interval 次迭代用 b - Ax 替换一次。
    记录真实残差历史使每次迭代多做一次算子乘法，核算子下即多一次 O(N²) 核计算，
    总代价约为不记录时的两倍。

    Args:
        matvec: 对称正定算子 A
        b: 右端项
        precond: 可选预条件器
        tol: 相对容差
        max_iter: 最大迭代次数
        true_residual_interval: 真实残差替换间隔

    Returns:
        (解, 求解报告)

    Raises:
        SolverDivergenceError: 出现非有限值或 pᵀAp ≤ 0
    """
    if not tol > 0:
        raise KernelArgumentError(f"CG容差必须大于0，当前为{tol}")
    if max_iter < 1 or true_residual_interval < 1:
        raise KernelArgumentError("max_iter 和 true_residual_interval 必须为正")

    b = np.asarray(b, dtype=np.float64)
    report = SolveReport(
        preconditioned=precond is not None,
        preconditioner_rank=precond.rank if precond is not None else 0,
        tolerance=tol,
    )
    x = np.zeros_like(b)
    b_norm = float(np.linalg.norm(b))
    if not math.isfinite(b_norm):
        raise SolverDivergenceError("右端项含非有限值", iteration=0)
    if b_norm == 0.0:
        report.converged = True
        return x, report

    threshold = tol * b_norm
    r = b.copy()
    z = precond.apply(r) if precond is not None else r.copy()
    p = z.copy()
    rz = float(r @ z)

    for k in range(1, max_iter + 1):
        Ap = matvec(p)
        curvature = float(p @ Ap)
        if not math.isfinite(curvature) or curvature <= 0.0:
            raise SolverDivergenceError(f"曲率 pᵀAp={curvature:.3e}", iteration=k,
                                        residual_norms=report.residual_norms)

        alpha = rz / curvature
        x += alpha * p
        if k % true_residual_interval == 0:
            r = b - matvec(x)
            true_r = r
        else:
            r -= alpha * Ap
            true_r = b - matvec(x)

        residual_norm = float(np.linalg.norm(true_r))
        report.residual_norms.append(residual_norm)
        report.iterations = k
        if not math.isfinite(residual_norm):
            raise SolverDivergenceError("残差出现非有限值", iteration=k,
                                        residual_norms=report.residual_norms)

        logger.debug(f"CG第{k}次迭代: ‖r‖={residual_norm:.6e}")
        if residual_norm <= threshold:
            report.converged = True
            break

        z = precond.apply(r) if precond is not None else r.copy()
        rz_next = float(r @ z)
        beta = rz_next / rz
        p = z + beta * p
        rz = rz_next

    level = logging.INFO if report.converged else logging.WARNING
    logger.log(level, f"CG结束: 迭代{report.iterations}次, 收敛={report.converged}, "
                      f"预条件={'是' if report.preconditioned else '否'}")
    return x, report


def kernel_matvec(spec: KernelSpec, X: PointSet, sigma2: float, v: np.ndarray,
                  block_size: int = 256, num_threads: int = 1,
                  counter: Optional[EvalCounter] = None) -> np.ndarray:
    """(K + σ²I) v，按行分块计算，不构造完整 K

    每个块写入互不重叠的输出切片，多线程与单线程结果逐位相同。
    """
    if not isinstance(X, PointSet):
        X = PointSet(X)
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (X.n,):
        raise KernelArgumentError(f"向量维度不匹配: 期望({X.n},)，实际{v.shape}")
    if block_size < 1:
        raise KernelArgumentError(f"分块大小必须为正，当前为{block_size}")

    points = X.points
    out = np.empty(X.n)

    def _block(start: int):
        stop = min(start + block_size, X.n)
        rows = eval_cross(spec, points[start:stop], points, counter=counter)
        out[start:stop] = rows @ v + sigma2 * v[start:stop]

    starts = range(0, X.n, block_size)
    if num_threads > 1 and X.n > block_size:
        with ThreadPoolExecutor(max_workers=num_threads) as pool:
            list(pool.map(_block, starts))
    else:
        for start in starts:
            _block(start)
    return out


def make_kernel_operator(spec: KernelSpec, X: PointSet, sigma2: float, block_size: int = 256,
                         num_threads: int = 1, counter: Optional[EvalCounter] = None) -> LinearOperator:
    """包装成 cg_solve 使用的算子"""
    if not (math.isfinite(sigma2) and sigma2 >= 0):
        raise KernelArgumentError(f"σ² 不能为负，当前为{sigma2}")

    def operator(v: np.ndarray) -> np.ndarray:
        return kernel_matvec(spec, X, sigma2, v, block_size=block_size,
                             num_threads=num_threads, counter=counter)
    return operator
