"""
异常定义模块
所有异常都带有 exit_code，命令行入口据此返回退出码
"""

from typing import List, Optional

# 命令行退出码
EXIT_OK = 0
EXIT_VERIFICATION_FAILED = 1
EXIT_ARGUMENT_ERROR = 2
EXIT_NUMERIC_ERROR = 3
EXIT_SOLVER_DIVERGED = 4
EXIT_INTERRUPTED = 130


class PivCholError(Exception):
    """工具包异常基类"""
    exit_code = EXIT_ARGUMENT_ERROR


class KernelArgumentError(PivCholError, ValueError):
    """参数错误：维度不匹配、超参数非法、空点集等"""
    exit_code = EXIT_ARGUMENT_ERROR


class UnsupportedFeatureError(PivCholError):
    """核函数没有有限维显式特征（平稳核的特征空间是无限维的）"""
    exit_code = EXIT_ARGUMENT_ERROR


class DataParseError(PivCholError):
    """CSV解析错误，带行列位置（从1开始计数）"""
    exit_code = EXIT_ARGUMENT_ERROR

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[int] = None):
        location = []
        if row is not None:
            location.append(f"第{row}行")
        if column is not None:
            location.append(f"第{column}列")
        prefix = f"[{' '.join(location)}] " if location else ""
        super().__init__(f"{prefix}{message}")
        self.row = row
        self.column = column


class OracleScaleError(PivCholError):
    """稠密参考实现的规模超出上限"""
    exit_code = EXIT_ARGUMENT_ERROR


class InvalidKernelError(PivCholError):
    """核矩阵不是半正定的，或对角线含非有限值"""
    exit_code = EXIT_NUMERIC_ERROR


class NumericError(PivCholError):
    """数值分解失败"""
    exit_code = EXIT_NUMERIC_ERROR


class OracleDegeneracyError(PivCholError):
    """参考实现中 K_SS 数值奇异，但残差仍高于容差"""
    exit_code = EXIT_NUMERIC_ERROR


class DegenerateFeatureError(PivCholError):
    """Gram-Schmidt 过程中主元特征的残差范数过小"""
    exit_code = EXIT_NUMERIC_ERROR


class SolverDivergenceError(PivCholError):
    """共轭梯度法出现非有限值或非正曲率"""
    exit_code = EXIT_SOLVER_DIVERGED

    def __init__(self, message: str, iteration: int, residual_norms: Optional[List[float]] = None):
        super().__init__(f"第{iteration}次迭代发散: {message}")
        self.iteration = iteration
        self.residual_norms = list(residual_norms or [])


class VerificationFailure(PivCholError):
    """参考实现校验未通过"""
    exit_code = EXIT_VERIFICATION_FAILED

    def __init__(self, check_name: str, instance_seed: Optional[int], deviation: Optional[float]):
        seed_text = f", 实例种子={instance_seed}" if instance_seed is not None else ""
        deviation_text = f"{deviation:.3e}" if deviation is not None else "nan"
        super().__init__(f"校验 '{check_name}' 未通过 (偏差={deviation_text}{seed_text})")
        self.check_name = check_name
        self.instance_seed = instance_seed
        self.deviation = deviation
