"""
结果文件读写模块
因子文件 = JSON表头 + L矩阵CSV（置换后顺序，17位有效数字）
"""

import io
import os
import logging
from pathlib import Path
from typing import Dict, Any, Optional, Tuple

import numpy as np
import pandas as pd

from .decomposition import CholeskyFactor, DecompositionConfig, DecompositionTrace, StopReason
from .errors import DataParseError
from .kernels import KernelSpec
from utils.file_ops import atomic_write_text, atomic_write_json, read_json

logger = logging.getLogger(__name__)

FACTOR_FORMAT = "pivchol-factor/1"
FLOAT_FORMAT = "%.17g"


def matrix_path_for(header_path: str) -> str:
    """因子表头对应的L矩阵文件路径"""
    root, _ = os.path.splitext(header_path)
    return f"{root}.L.csv"


def factor_header(factor: CholeskyFactor, spec: KernelSpec, config: DecompositionConfig,
                  dataset: Optional[Dict[str, Any]], matrix_file: str) -> Dict[str, Any]:
    """因子表头，字段顺序固定"""
    return {
        'format': FACTOR_FORMAT,
        'n': factor.n,
        'rank': factor.rank,
        'pivots': [int(p) for p in factor.pivots],
        'permutation': [int(p) for p in factor.permutation],
        'stop_reason': factor.stop_reason.value,
        'tolerance': config.tolerance,
        'clamp_negative': config.clamp_negative,
        'kernel': spec.to_dict(),
        'dataset': dataset,
        'residual_diag': [float(v) for v in factor.residual_diag],
        'matrix_file': matrix_file,
    }


def save_factor(factor: CholeskyFactor, spec: KernelSpec, config: DecompositionConfig,
                dataset: Optional[Dict[str, Any]], path: str) -> Tuple[str, str]:
    """保存因子文件

    Args:
        factor: 分解结果
        spec: 核函数配置
        config: 分解配置
        dataset: 数据源回显（用于重新计算校验）
        path: 表头JSON路径，L矩阵写到同名 .L.csv

    Returns:
        (表头路径, 矩阵路径)
    """
    matrix_path = matrix_path_for(path)
    # 秩为0时写空文件
    if factor.rank == 0:
        matrix_text = ""
    else:
        matrix_text = pd.DataFrame(factor.L).to_csv(
            index=False, header=False, float_format=FLOAT_FORMAT, lineterminator="\n")

    atomic_write_text(matrix_path, matrix_text)
    header = factor_header(factor, spec, config, dataset, os.path.basename(matrix_path))
    atomic_write_json(path, header)
    logger.info(f"因子已保存: {path} (rank={factor.rank})")
    return path, matrix_path


def load_factor(path: str) -> Tuple[CholeskyFactor, Dict[str, Any]]:
    """读取因子文件

    Returns:
        (因子, 表头字典)

    Raises:
        DataParseError: 文件缺失或表头与矩阵不一致
    """
    if not os.path.exists(path):
        raise DataParseError(f"因子文件不存在: {path}")
    try:
        header = read_json(path)
    except ValueError as e:
        raise DataParseError(f"因子表头不是合法JSON: {e}")

    if header.get('format') != FACTOR_FORMAT:
        raise DataParseError(f"未知因子格式: {header.get('format')}")

    n = int(header['n'])
    rank = int(header['rank'])
    matrix_path = Path(path).parent / header['matrix_file']
    if not matrix_path.exists():
        raise DataParseError(f"L矩阵文件不存在: {matrix_path}")

    text = matrix_path.read_text(encoding='utf-8')
    if rank == 0:
        if text.strip():
            raise DataParseError("rank=0 的因子矩阵文件应为空")
        L = np.zeros((n, 0), order='F')
    else:
        frame = pd.read_csv(io.StringIO(text), header=None, dtype=np.float64,
                            float_precision='round_trip')
        L = np.asfortranarray(frame.to_numpy())

    if L.shape != (n, rank):
        raise DataParseError(f"L矩阵形状 {L.shape} 与表头 ({n}, {rank}) 不一致")

    permutation = np.asarray(header['permutation'], dtype=np.int64)
    residual_diag = np.asarray(header['residual_diag'], dtype=np.float64)
    if permutation.shape != (n,) or residual_diag.shape != (n,):
        raise DataParseError("置换或残差对角线长度与 n 不一致")
    if list(permutation[:rank]) != list(header['pivots']):
        raise DataParseError("主元序列与置换前缀不一致")

    factor = CholeskyFactor(
        L=L,
        permutation=permutation,
        residual_diag=residual_diag,
        stop_reason=StopReason(header['stop_reason']),
    )
    return factor, header


def write_trace(trace: DecompositionTrace, path: str) -> str:
    """写出逐步残差曲线CSV"""
    text = trace.to_frame().to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    atomic_write_text(path, text)
    return path


def write_residual_curve(residual_norms, path: str) -> str:
    """写出CG每次迭代的真实残差"""
    frame = pd.DataFrame({
        'iteration': np.arange(1, len(residual_norms) + 1),
        'residual_norm': np.asarray(residual_norms, dtype=np.float64),
    })
    atomic_write_text(path, frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n"))
    return path


def write_report(data: Dict[str, Any], path: str, timing: Optional[Dict[str, float]] = None) -> str:
    """写出JSON报告；计时字段单独放在最后的 timing 键下"""
    payload = dict(data)
    payload.pop('timing', None)
    if timing is not None:
        payload['timing'] = {k: round(float(v), 6) for k, v in timing.items()}
    atomic_write_json(path, payload)
    logger.info(f"报告已保存: {path}")
    return path
