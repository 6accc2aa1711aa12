"""
核函数模块
每个核函数提供三种计算方式：单对、交叉矩阵、O(N)对角线
"""

import math
import logging
import threading
from dataclasses import dataclass
from enum import Enum
from itertools import combinations_with_replacement
from typing import Optional, Dict, Any

import numpy as np

from .errors import KernelArgumentError, UnsupportedFeatureError

logger = logging.getLogger(__name__)


class KernelFamily(str, Enum):
    """核函数族"""
    RBF = "rbf"
    MATERN12 = "matern12"
    MATERN32 = "matern32"
    MATERN52 = "matern52"
    LINEAR = "linear"
    POLYNOMIAL = "polynomial"

    @property
    def stationary(self) -> bool:
        return self not in (KernelFamily.LINEAR, KernelFamily.POLYNOMIAL)


@dataclass(frozen=True)
class KernelSpec:
    """核函数族及超参数

    variance 乘在整个核上；平稳核满足 k(x, x) = variance。
    degree 和 offset 只对多项式核有意义。
    """
    family: KernelFamily
    lengthscale: float = 1.0
    variance: float = 1.0
    degree: int = 2
    offset: float = 0.0

    def __post_init__(self):
        try:
            family = KernelFamily(self.family)
        except ValueError:
            choices = ", ".join(f.value for f in KernelFamily)
            raise KernelArgumentError(f"未知核函数族: {self.family}（可选: {choices}）")
        object.__setattr__(self, "family", family)

        if not (math.isfinite(self.lengthscale) and self.lengthscale > 0):
            raise KernelArgumentError(f"lengthscale 必须为正，当前为{self.lengthscale}")
        if not (math.isfinite(self.variance) and self.variance > 0):
            raise KernelArgumentError(f"variance 必须为正，当前为{self.variance}")
        if int(self.degree) != self.degree or self.degree < 1:
            raise KernelArgumentError(f"degree 必须是正整数，当前为{self.degree}")
        if not (math.isfinite(self.offset) and self.offset >= 0):
            raise KernelArgumentError(f"offset 不能为负，当前为{self.offset}")
        object.__setattr__(self, "degree", int(self.degree))

    def to_dict(self) -> Dict[str, Any]:
        return {
            'family': self.family.value,
            'lengthscale': self.lengthscale,
            'variance': self.variance,
            'degree': self.degree,
            'offset': self.offset,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "KernelSpec":
        return cls(
            family=KernelFamily(data['family']),
            lengthscale=float(data.get('lengthscale', 1.0)),
            variance=float(data.get('variance', 1.0)),
            degree=int(data.get('degree', 2)),
            offset=float(data.get('offset', 0.0)),
        )


class PointSet:
    """N×D 的输入点集（只读）"""

    def __init__(self, points):
        array = np.array(points, dtype=np.float64)
        if array.ndim == 1:
            array = array.reshape(-1, 1)
        if array.ndim != 2:
            raise KernelArgumentError(f"点集必须是二维矩阵，当前维数为{array.ndim}")
        if array.shape[0] < 1:
            raise KernelArgumentError("点集至少需要一个点 (N ≥ 1)")
        if array.shape[1] < 1:
            raise KernelArgumentError("点集至少需要一个坐标 (D ≥ 1)")
        if not np.all(np.isfinite(array)):
            raise KernelArgumentError("点集中存在非有限值")
        array.setflags(write=False)
        self._points = array

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def n(self) -> int:
        return self._points.shape[0]

    @property
    def dim(self) -> int:
        return self._points.shape[1]

    def subset(self, indices) -> "PointSet":
        return PointSet(self._points[np.asarray(indices, dtype=np.int64)])

    def __len__(self) -> int:
        return self.n

    def __repr__(self) -> str:
        return f"PointSet(n={self.n}, dim={self.dim})"


class EvalCounter:
    """核函数计算次数计数器（线程安全）"""

    def __init__(self):
        self._lock = threading.Lock()
        self.pair_evals = 0
        self.diag_evals = 0

    def record_pairs(self, count: int):
        with self._lock:
            self.pair_evals += int(count)

    def record_diag(self, count: int):
        with self._lock:
            self.diag_evals += int(count)

    @property
    def total(self) -> int:
        return self.pair_evals + self.diag_evals

    def snapshot(self) -> Dict[str, int]:
        with self._lock:
            return {
                'diag_evals': self.diag_evals,
                'pair_evals': self.pair_evals,
                'total_evals': self.diag_evals + self.pair_evals,
            }


def _as_matrix(X) -> np.ndarray:
    # 内部调用允许空块（分解最后一步没有剩余点）
    if isinstance(X, PointSet):
        return X.points
    array = np.asarray(X, dtype=np.float64)
    if array.ndim != 2:
        raise KernelArgumentError(f"点集必须是二维矩阵，当前维数为{array.ndim}")
    return array


def _check_dims(A: np.ndarray, B: np.ndarray):
    if A.shape[1] != B.shape[1]:
        raise KernelArgumentError(f"维度不匹配: {A.shape[1]} vs {B.shape[1]}")


def _squared_distances(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    # 逐坐标累加 Σ(a_i - b_i)²，保证 eval_cross(A, A) 严格对称且非负
    sq = np.zeros((A.shape[0], B.shape[0]))
    for j in range(A.shape[1]):
        diff = A[:, j, None] - B[None, :, j]
        sq += diff * diff
    return sq


def _inner_products(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    # 与 _squared_distances 同样的累加顺序，保证对称性和对角线一致
    dots = np.zeros((A.shape[0], B.shape[0]))
    for j in range(A.shape[1]):
        dots += A[:, j, None] * B[None, :, j]
    return dots


def _stationary_profile(spec: KernelSpec, sq: np.ndarray) -> np.ndarray:
    """平稳核 k̂(r)，满足 k̂(0) = 1"""
    ell = spec.lengthscale
    if spec.family is KernelFamily.RBF:
        return np.exp(-sq / (2.0 * ell * ell))

    r = np.sqrt(sq) / ell
    if spec.family is KernelFamily.MATERN12:
        return np.exp(-r)
    if spec.family is KernelFamily.MATERN32:
        s = math.sqrt(3.0) * r
        return (1.0 + s) * np.exp(-s)
    if spec.family is KernelFamily.MATERN52:
        s = math.sqrt(5.0) * r
        return (1.0 + s + (5.0 / 3.0) * r * r) * np.exp(-s)
    raise KernelArgumentError(f"{spec.family.value} 不是平稳核")


def _cross(spec: KernelSpec, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    if spec.family.stationary:
        return spec.variance * _stationary_profile(spec, _squared_distances(A, B))
    dots = _inner_products(A, B)
    if spec.family is KernelFamily.LINEAR:
        return spec.variance * dots
    return spec.variance * (dots + spec.offset) ** spec.degree


def eval_cross(spec: KernelSpec, A, B, counter: Optional[EvalCounter] = None) -> np.ndarray:
    """计算交叉核矩阵 K[i, j] = k(a_i, b_j)

    Args:
        spec: 核函数配置
        A: |A|×D 点集
        B: |B|×D 点集
        counter: 可选计数器，每个输出元素计一次

    Returns:
        |A|×|B| 矩阵
    """
    A = _as_matrix(A)
    B = _as_matrix(B)
    _check_dims(A, B)
    if counter is not None:
        counter.record_pairs(A.shape[0] * B.shape[0])
    return _cross(spec, A, B)


def eval_pair(spec: KernelSpec, x, y, counter: Optional[EvalCounter] = None) -> float:
    """计算单对核函数值 k(x, y)"""
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    y = np.asarray(y, dtype=np.float64).reshape(1, -1)
    if x.shape[1] != y.shape[1]:
        raise KernelArgumentError(f"维度不匹配: {x.shape[1]} vs {y.shape[1]}")
    return float(eval_cross(spec, x, y, counter=counter)[0, 0])


def eval_diag(spec: KernelSpec, X, counter: Optional[EvalCounter] = None) -> np.ndarray:
    """计算对角线 k(x_i, x_i)，O(N)，不构造 N×N 矩阵"""
    X = _as_matrix(X)
    n = X.shape[0]
    if counter is not None:
        counter.record_diag(n)

    if spec.family.stationary:
        return spec.variance * _stationary_profile(spec, np.zeros(n))

    norms = np.zeros(n)
    for j in range(X.shape[1]):
        norms += X[:, j] * X[:, j]
    if spec.family is KernelFamily.LINEAR:
        return spec.variance * norms
    return spec.variance * (norms + spec.offset) ** spec.degree


def polynomial_monomials(dim: int, degree: int, with_offset: bool):
    """按分级字典序枚举单项式指数

    Yields:
        (坐标下标元组, 多项式次数k)，k 从低到高
    """
    lowest = 0 if with_offset else degree
    for k in range(lowest, degree + 1):
        for combo in combinations_with_replacement(range(dim), k):
            yield combo, k


def explicit_features(spec: KernelSpec, X) -> np.ndarray:
    """显式有限维特征矩阵 Φ，满足 ΦΦᵀ = K

    Linear: Φ = √variance · X
    Polynomial: (xᵀy + c)^p 按多项式定理展开，
                权重为 √(variance · p!/(β! (p-k)!) · c^(p-k))

    Raises:
        UnsupportedFeatureError: 平稳核的特征空间是无限维的
    """
    if spec.family.stationary:
        raise UnsupportedFeatureError(f"{spec.family.value} 核的特征映射是无限维的，无法显式构造")
    X = _as_matrix(X)

    if spec.family is KernelFamily.LINEAR:
        return math.sqrt(spec.variance) * X

    p = spec.degree
    c = spec.offset
    columns = []
    for combo, k in polynomial_monomials(X.shape[1], p, with_offset=c > 0):
        counts = np.bincount(np.asarray(combo, dtype=np.int64), minlength=X.shape[1])
        multinomial = math.factorial(p) / math.factorial(p - k)
        for count in counts:
            multinomial /= math.factorial(int(count))
        weight = math.sqrt(spec.variance * multinomial * c ** (p - k))
        if combo:
            monomial = np.prod(X[:, list(combo)], axis=1)
        else:
            monomial = np.ones(X.shape[0])
        columns.append(weight * monomial)

    return np.column_stack(columns)
