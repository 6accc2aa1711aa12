"""
数据模块：CSV点集读取、可复现的合成数据生成器

伪随机数生成器（固定算法，便于其他语言复现）：
    PCG64 (PCG XSL RR 128/64)，通过 numpy.random.SeedSequence(seed) 初始化。
    均匀分布：取64位原始输出 u，(u >> 11) * 2**-53，落在 [0, 1)。
    正态分布：Box-Muller，每个值消耗两个均匀数 u1, u2：
              sqrt(-2 ln(1 - u1)) * cos(2π u2)
"""

import csv
import math
import logging
import os
from dataclasses import dataclass, asdict
from enum import Enum
from typing import Union, Dict, Any, List

import numpy as np
import pandas as pd
from scipy.spatial.distance import pdist

from .errors import DataParseError, KernelArgumentError
from .kernels import PointSet
from utils.file_ops import atomic_write_text

logger = logging.getLogger(__name__)


class SyntheticKind(str, Enum):
    UNIFORM_CUBE = "UniformCube"
    GAUSSIAN_CLUSTERS = "GaussianClusters"
    GRID = "Grid"


# 命令行中的简写
_KIND_ALIASES = {
    'uniform': SyntheticKind.UNIFORM_CUBE,
    'uniformcube': SyntheticKind.UNIFORM_CUBE,
    'clusters': SyntheticKind.GAUSSIAN_CLUSTERS,
    'gaussianclusters': SyntheticKind.GAUSSIAN_CLUSTERS,
    'grid': SyntheticKind.GRID,
}


@dataclass(frozen=True)
class CsvSource:
    path: str

    def to_dict(self) -> Dict[str, Any]:
        return {'type': 'csv', 'path': self.path}


def check_seed(seed: int) -> int:
    """种子必须是64位无符号整数"""
    if not 0 <= seed < 2 ** 64:
        raise KernelArgumentError(f"种子必须是64位无符号整数，当前为{seed}")
    return seed


@dataclass(frozen=True)
class SyntheticRecipe:
    """合成数据配方，(配方, 种子) 决定逐位相同的结果"""
    kind: SyntheticKind
    n: int
    dim: int
    seed: int = 0
    clusters: int = 3
    spread: float = 0.05
    extent: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", SyntheticKind(self.kind))
        if self.n < 1 or self.dim < 1:
            raise KernelArgumentError(f"合成数据需要 n ≥ 1 且 dim ≥ 1，当前 n={self.n}, dim={self.dim}")
        check_seed(self.seed)
        if self.clusters < 1:
            raise KernelArgumentError(f"簇数必须为正，当前为{self.clusters}")
        if self.spread < 0 or self.extent <= 0:
            raise KernelArgumentError("spread 不能为负，extent 必须为正")

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['kind'] = self.kind.value
        return {'type': 'synthetic', **data}


DatasetSource = Union[CsvSource, SyntheticRecipe]


def source_from_dict(data: Dict[str, Any]) -> DatasetSource:
    """从运行清单/因子文件中的回显恢复数据源"""
    data = dict(data)
    source_type = data.pop('type', None)
    if source_type == 'csv':
        return CsvSource(path=data['path'])
    if source_type == 'synthetic':
        return SyntheticRecipe(**data)
    raise KernelArgumentError(f"未知数据源类型: {source_type}")


def parse_synthetic(text: str) -> SyntheticRecipe:
    """解析命令行合成数据描述，例如 "uniform:n=200,dim=2,seed=7"

    Args:
        text: "<kind>:key=value,..."

    Returns:
        合成数据配方
    """
    kind_text, _, params_text = text.partition(':')
    kind = _KIND_ALIASES.get(kind_text.strip().lower())
    if kind is None:
        raise KernelArgumentError(
            f"未知合成数据类型: {kind_text}（可选: {', '.join(sorted(_KIND_ALIASES))}）")

    casts = {'n': int, 'dim': int, 'seed': int, 'clusters': int, 'spread': float, 'extent': float}
    params: Dict[str, Any] = {}
    for item in filter(None, (p.strip() for p in params_text.split(','))):
        key, sep, value = item.partition('=')
        key = key.strip()
        if not sep or key not in casts:
            raise KernelArgumentError(f"无法解析合成数据参数: {item}")
        try:
            params[key] = casts[key](value.strip())
        except ValueError:
            raise KernelArgumentError(f"参数 {key} 的值无效: {value}")

    if 'n' not in params or 'dim' not in params:
        raise KernelArgumentError("合成数据必须指定 n 和 dim")
    return SyntheticRecipe(kind=kind, **params)


def uniform_stream(seed: int, size: int) -> np.ndarray:
    """PCG64 均匀分布 [0, 1)，53位精度"""
    raw = np.random.PCG64(np.random.SeedSequence(seed)).random_raw(size)
    raw = np.asarray(raw, dtype=np.uint64)
    return (raw >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)


def normal_stream(seed: int, size: int) -> np.ndarray:
    """Box-Muller 标准正态分布"""
    u = uniform_stream(seed, 2 * size)
    u1 = u[0::2]
    u2 = u[1::2]
    return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * math.pi * u2)


def generate_points(recipe: SyntheticRecipe) -> PointSet:
    """按配方生成合成点集"""
    n, dim = recipe.n, recipe.dim

    if recipe.kind is SyntheticKind.UNIFORM_CUBE:
        points = recipe.extent * uniform_stream(recipe.seed, n * dim).reshape(n, dim)

    elif recipe.kind is SyntheticKind.GAUSSIAN_CLUSTERS:
        # 流的切分顺序固定：簇中心、簇分配、偏移
        k = recipe.clusters
        u = uniform_stream(recipe.seed, k * dim + n)
        centers = recipe.extent * u[:k * dim].reshape(k, dim)
        labels = np.minimum((u[k * dim:] * k).astype(np.int64), k - 1)
        offsets = normal_stream(recipe.seed + 1, n * dim).reshape(n, dim)
        points = centers[labels] + recipe.spread * offsets

    else:
        side = max(1, math.ceil(round(n ** (1.0 / dim), 12)))
        while side ** dim < n:
            side += 1
        axis = np.linspace(0.0, recipe.extent, side) if side > 1 else np.zeros(1)
        grid = np.stack(np.meshgrid(*([axis] * dim), indexing='ij'), axis=-1).reshape(-1, dim)
        points = grid[:n]

    logger.debug(f"生成合成数据: {recipe.kind.value}, n={n}, dim={dim}, seed={recipe.seed}")
    return PointSet(points)


def _parse_cell(text: str, row: int, column: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataParseError(f"非数值单元格: '{text}'", row=row, column=column)
    if not math.isfinite(value):
        raise DataParseError(f"非有限值: '{text}'", row=row, column=column)
    return value


def _is_numeric(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


def read_points_csv(path: str) -> PointSet:
    """读取CSV点集：每行一个点，首行非数值时视为表头"""
    if not os.path.exists(path):
        raise DataParseError(f"CSV文件不存在: {path}")

    rows: List[List[float]] = []
    width = None
    with open(path, 'r', encoding='utf-8', newline='') as f:
        reader = csv.reader(f)
        for row_num, cells in enumerate(reader, 1):
            if not cells or all(not c.strip() for c in cells):
                continue
            cells = [c.strip() for c in cells]
            if row_num == 1 and not all(_is_numeric(c) for c in cells):
                logger.debug(f"检测到表头: {cells}")
                continue
            if width is None:
                width = len(cells)
            elif len(cells) != width:
                raise DataParseError(f"列数不一致: 期望{width}列，实际{len(cells)}列", row=row_num)
            rows.append([_parse_cell(c, row_num, col) for col, c in enumerate(cells, 1)])

    if not rows:
        raise DataParseError(f"CSV文件没有数据行: {path}")

    X = PointSet(np.array(rows, dtype=np.float64))
    logger.info(f"读取点集: {path} (N={X.n}, D={X.dim})")
    return X


def load_points(source: DatasetSource) -> PointSet:
    """加载点集

    Args:
        source: CSV文件或合成数据配方

    Returns:
        校验过的点集
    """
    if isinstance(source, CsvSource):
        return read_points_csv(source.path)
    if isinstance(source, SyntheticRecipe):
        return generate_points(source)
    raise KernelArgumentError(f"未知数据源: {source!r}")


def write_points(X: PointSet, path: str) -> str:
    """以17位有效数字写出点集（可逐位还原）"""
    frame = pd.DataFrame(X.points, columns=[f"x{j}" for j in range(X.dim)])
    atomic_write_text(path, frame.to_csv(index=False, float_format="%.17g", lineterminator="\n"))
    return path


def generate_rhs(n: int, seed: int) -> np.ndarray:
    """生成可复现的标准正态右端项"""
    if n < 1:
        raise KernelArgumentError(f"右端项长度必须为正，当前为{n}")
    return normal_stream(check_seed(seed), n)


def diameter(X: PointSet) -> float:
    """最大两两距离"""
    if X.n < 2:
        return 0.0
    return float(np.max(pdist(X.points)))


def min_pairwise_distance(X: PointSet) -> float:
    """最小两两距离"""
    if X.n < 2:
        return math.inf
    return float(np.min(pdist(X.points)))
