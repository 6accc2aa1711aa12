"""
惰性主元Cholesky分解
按需计算核矩阵列：O(NM²) 时间、O(NM) 内存，从不构造 N×N 矩阵
"""

import math
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, List, Dict, Any, Tuple

import numpy as np
import pandas as pd

from .errors import KernelArgumentError, InvalidKernelError
from .kernels import KernelSpec, PointSet, EvalCounter, eval_diag, eval_cross

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ['step', 'pivot_index', 'pivot_value', 'residual_trace', 'kernel_evals']


class StopReason(str, Enum):
    REACHED_MAX_RANK = "ReachedMaxRank"
    TOLERANCE_MET = "ToleranceMet"


@dataclass(frozen=True)
class DecompositionConfig:
    """分解配置

    tolerance 是最大剩余对角元的绝对阈值（严格小于时停止），
    不随最大对角元缩放。
    """
    max_rank: int
    tolerance: float = 1e-6
    clamp_negative: bool = True

    def __post_init__(self):
        if int(self.max_rank) != self.max_rank or self.max_rank < 0:
            raise KernelArgumentError(f"max_rank 必须是非负整数，当前为{self.max_rank}")
        if not (self.tolerance >= 0 and math.isfinite(self.tolerance)):
            raise KernelArgumentError(f"tolerance 必须是非负有限值，当前为{self.tolerance}")
        object.__setattr__(self, "max_rank", int(self.max_rank))


@dataclass
class CholeskyFactor:
    """部分主元Cholesky因子

    L 的行按置换后的顺序存放：第 m 行对应原始下标 permutation[m]。
    permutation 的前 rank 个元素就是主元序列。
    """
    L: np.ndarray
    permutation: np.ndarray
    residual_diag: np.ndarray
    stop_reason: StopReason

    @property
    def n(self) -> int:
        return self.L.shape[0]

    @property
    def rank(self) -> int:
        return self.L.shape[1]

    @property
    def pivots(self) -> np.ndarray:
        return self.permutation[:self.rank]

    @property
    def residual_trace(self) -> float:
        return float(np.sum(self.residual_diag))

    def pivot_diagonal(self) -> np.ndarray:
        """L[m, m]，即每一步的 √d"""
        return np.array([self.L[m, m] for m in range(self.rank)])


@dataclass
class TraceStep:
    step: int
    pivot_index: int
    pivot_value: float
    residual_trace: float
    kernel_evals: int


@dataclass
class DecompositionTrace:
    """每一步的诊断记录"""
    initial_trace: float
    diag_evals: int = 0
    steps: List[TraceStep] = field(default_factory=list)

    @property
    def pivot_values(self) -> List[float]:
        return [s.pivot_value for s in self.steps]

    @property
    def residual_traces(self) -> List[float]:
        return [s.residual_trace for s in self.steps]

    def to_frame(self) -> pd.DataFrame:
        """转换为曲线表；没有完成任何一步时输出 step=0 的基线行"""
        if not self.steps:
            return pd.DataFrame([{
                'step': 0,
                'pivot_index': pd.NA,
                'pivot_value': np.nan,
                'residual_trace': self.initial_trace,
                'kernel_evals': 0,
            }], columns=TRACE_COLUMNS).astype({'pivot_index': 'Int64'})
        return pd.DataFrame([vars(s) for s in self.steps], columns=TRACE_COLUMNS)


def pivoted_cholesky(spec: KernelSpec, X: PointSet, config: DecompositionConfig,
                     counter: Optional[EvalCounter] = None) -> Tuple[CholeskyFactor, DecompositionTrace]:
    """惰性主元Cholesky分解

    每一步选择剩余对角元最大的点（并列时取置换后位置最小者），
    只计算该主元对应的一列核矩阵，用 Schur 补更新因子和残差对角线。

    Args:
        spec: 核函数配置
        X: 点集
        config: 分解配置，max_rank 超过 N 时截断为 N
        counter: 可选计数器；为 None 时内部新建

    Returns:
        (因子, 逐步诊断记录)

    Raises:
        KernelArgumentError: 点集为空
        InvalidKernelError: 初始对角线为负或非有限，或选中的最大残差为负
    """
    if not isinstance(X, PointSet):
        X = PointSet(X)
    counter = counter if counter is not None else EvalCounter()
    points = X.points
    n = X.n
    max_rank = min(config.max_rank, n)

    d = np.array(eval_diag(spec, points, counter=counter), dtype=np.float64)
    if not np.all(np.isfinite(d)):
        raise InvalidKernelError("初始对角线含非有限值（数据损坏或核函数非法）")
    if np.any(d < 0):
        worst = int(np.argmin(d))
        raise InvalidKernelError(f"初始对角线出现负值 d[{worst}]={d[worst]:.3e}，核函数不是半正定的")

    trace = DecompositionTrace(initial_trace=float(np.sum(d)), diag_evals=counter.diag_evals)
    perm = np.arange(n)
    # 列主序：Schur 更新是对连续内存的列操作
    L = np.zeros((n, max_rank), order='F')
    stop_reason = StopReason.REACHED_MAX_RANK
    rank = max_rank

    logger.debug(f"开始分解: N={n}, max_rank={max_rank}, tol={config.tolerance:g}")

    for m in range(max_rank):
        i_star = m + int(np.argmax(d[m:]))
        if i_star != m:
            perm[[m, i_star]] = perm[[i_star, m]]
            d[[m, i_star]] = d[[i_star, m]]
            L[[m, i_star], :] = L[[i_star, m], :]

        pivot = d[m]
        if pivot < 0:
            raise InvalidKernelError(
                f"第{m + 1}步选中的最大残差为负 ({pivot:.3e})，核函数不是半正定的")
        if pivot < config.tolerance or pivot == 0.0:
            stop_reason = StopReason.TOLERANCE_MET
            rank = m
            break

        L[m, m] = math.sqrt(pivot)

        # 惰性列计算：只对剩余的点计算与主元的核函数值
        column = eval_cross(spec, points[perm[m + 1:]], points[perm[m]][None, :],
                            counter=counter)[:, 0]
        if m > 0:
            column -= L[m + 1:, :m] @ L[m, :m]
        L[m + 1:, m] = column / L[m, m]

        d[m + 1:] -= L[m + 1:, m] ** 2
        if config.clamp_negative:
            np.maximum(d[m + 1:], 0.0, out=d[m + 1:])
        d[m] = 0.0

        step = TraceStep(
            step=m + 1,
            pivot_index=int(perm[m]),
            pivot_value=float(pivot),
            residual_trace=float(np.sum(d)),
            kernel_evals=counter.pair_evals,
        )
        trace.steps.append(step)
        logger.debug(f"第{step.step}步: 主元={step.pivot_index}, d={step.pivot_value:.6e}, "
                     f"残差迹={step.residual_trace:.6e}")

    factor = CholeskyFactor(
        L=np.asfortranarray(L[:, :rank]),
        permutation=perm,
        residual_diag=d,
        stop_reason=stop_reason,
    )
    logger.info(f"分解完成: rank={rank}/{max_rank}, 终止原因={stop_reason.value}, "
                f"残差迹={factor.residual_trace:.6e}, 核计算={counter.total}次")
    return factor, trace


def factor_times_transpose_diag(factor: CholeskyFactor) -> np.ndarray:
    """diag(L Lᵀ)，即每个点已被解释的能量（置换后顺序）"""
    if factor.rank == 0:
        return np.zeros(factor.n)
    return np.einsum('ij,ij->i', factor.L, factor.L)


def unpermute(factor: CholeskyFactor) -> np.ndarray:
    """把 L 的行恢复为原始点顺序

    输出第 permutation[m] 行等于 L 第 m 行；未被选中的点保持其置换后的位置映射。
    """
    out = np.empty((factor.n, factor.rank))
    out[factor.permutation] = factor.L
    return out


def expected_eval_count(n: int, rank: int) -> Dict[str, int]:
    """秩为 rank 的完整运行应有的核计算次数：N + NM - M(M+1)/2"""
    pairs = n * rank - rank * (rank + 1) // 2
    return {'diag_evals': n, 'pair_evals': pairs, 'total_evals': n + pairs}


def summarize(factor: CholeskyFactor, trace: DecompositionTrace) -> Dict[str, Any]:
    """生成运行摘要（写入运行清单）"""
    return {
        'n': factor.n,
        'rank': factor.rank,
        'stop_reason': factor.stop_reason.value,
        'pivots': [int(p) for p in factor.pivots],
        'initial_trace': trace.initial_trace,
        'residual_trace': factor.residual_trace,
    }
